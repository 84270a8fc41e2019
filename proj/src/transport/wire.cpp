#include "transport/wire.hpp"

#include "core/errors.hpp"

#include <cstring>

namespace drb::wire {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u32(out, bits);
}

class reader {
public:
    explicit reader(std::span<const std::uint8_t> bytes) : m_bytes(bytes) {}

    std::uint16_t u16() { return static_cast<std::uint16_t>(u8() | (u8() << 8)); }

    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }

    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    std::uint8_t u8() {
        if (m_pos >= m_bytes.size())
            throw protocol_error("payload truncated at offset " + std::to_string(m_pos) +
                                 ": " + hex_dump(m_bytes));
        return m_bytes[m_pos++];
    }

    void expect_end() const {
        if (m_pos != m_bytes.size())
            throw protocol_error("payload has " + std::to_string(m_bytes.size() - m_pos) +
                                 " trailing bytes: " + hex_dump(m_bytes));
    }

private:
    std::span<const std::uint8_t> m_bytes;
    std::size_t m_pos = 0;
};

void put_row(std::vector<std::uint8_t>& out, const occupancy_row& row) {
    put_u32(out, row.worker);
    put_u64(out, row.version);
    put_u32(out, static_cast<std::uint32_t>(row.occupancy.size()));
    for (const auto occ : row.occupancy)
        put_u32(out, occ);
}

occupancy_row read_row(reader& in) {
    occupancy_row row;
    row.worker = in.u32();
    row.version = in.u64();
    const std::uint32_t k = in.u32();
    row.occupancy.resize(k);
    for (std::uint32_t i = 0; i < k; ++i)
        row.occupancy[i] = in.u32();
    return row;
}

} // namespace

const char* msg_type_name(msg_type t) {
    switch (t) {
    case msg_type::sample_req: return "SAMPLE_REQ";
    case msg_type::sample_resp: return "SAMPLE_RESP";
    case msg_type::size_bcast: return "SIZE_BCAST";
    case msg_type::allreduce_chunk: return "ALLREDUCE_CHUNK";
    case msg_type::shutdown: return "SHUTDOWN";
    }
    return "?";
}

std::string hex_dump(std::span<const std::uint8_t> bytes, std::size_t max_bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    const std::size_t n = std::min(bytes.size(), max_bytes);
    for (std::size_t i = 0; i < n; ++i) {
        if (i)
            out += ' ';
        out += digits[bytes[i] >> 4];
        out += digits[bytes[i] & 0xf];
    }
    if (bytes.size() > n)
        out += " ...";
    return out;
}

std::array<std::uint8_t, k_header_bytes> encode_header(const frame_header& h) {
    std::vector<std::uint8_t> buf;
    buf.reserve(k_header_bytes);
    buf.insert(buf.end(), k_magic.begin(), k_magic.end());
    put_u16(buf, h.version);
    put_u16(buf, static_cast<std::uint16_t>(h.type));
    put_u32(buf, h.payload_len);
    put_u64(buf, h.request_id);
    std::array<std::uint8_t, k_header_bytes> out;
    std::memcpy(out.data(), buf.data(), k_header_bytes);
    return out;
}

frame_header decode_header(std::span<const std::uint8_t, k_header_bytes> bytes) {
    for (std::size_t i = 0; i < k_magic.size(); ++i)
        if (bytes[i] != k_magic[i])
            throw protocol_error("bad frame magic: " + hex_dump(bytes));
    reader in(bytes.subspan(4));
    frame_header h;
    h.version = in.u16();
    const std::uint16_t type = in.u16();
    h.payload_len = in.u32();
    h.request_id = in.u64();
    if (h.version != k_version)
        throw protocol_error("unsupported protocol version " + std::to_string(h.version) +
                             ": " + hex_dump(bytes));
    if (type < 1 || type > 5)
        throw protocol_error("unknown msg_type " + std::to_string(type) + ": " +
                             hex_dump(bytes));
    h.type = static_cast<msg_type>(type);
    return h;
}

std::vector<std::uint8_t> encode_frame(msg_type type, std::uint64_t request_id,
                                       std::span<const std::uint8_t> payload) {
    frame_header h;
    h.type = type;
    h.payload_len = static_cast<std::uint32_t>(payload.size());
    h.request_id = request_id;
    const auto header = encode_header(h);
    std::vector<std::uint8_t> out(k_header_bytes + payload.size());
    std::memcpy(out.data(), header.data(), k_header_bytes);
    if (!payload.empty())
        std::memcpy(out.data() + k_header_bytes, payload.data(), payload.size());
    return out;
}

bool sample_response::entry::operator==(const entry& other) const {
    if (cls != other.cls || flag != other.flag || value.label != other.value.label)
        return false;
    if (value.features.size() != other.value.features.size())
        return false;
    // Bitwise comparison so NaN payloads round-trip too.
    return std::memcmp(value.features.data(), other.value.features.data(),
                       value.features.size() * sizeof(float)) == 0;
}

std::vector<std::uint8_t> encode_sample_request(const sample_request& req) {
    std::vector<std::uint8_t> out;
    out.reserve(4 + req.slots.size() * 8);
    put_u32(out, static_cast<std::uint32_t>(req.slots.size()));
    for (const auto& slot : req.slots) {
        put_u32(out, slot.cls);
        put_u32(out, slot.slot);
    }
    return out;
}

sample_request decode_sample_request(std::span<const std::uint8_t> payload) {
    reader in(payload);
    sample_request req;
    const std::uint32_t count = in.u32();
    req.slots.resize(count);
    for (auto& slot : req.slots) {
        slot.cls = in.u32();
        slot.slot = in.u32();
    }
    in.expect_end();
    return req;
}

std::vector<std::uint8_t> encode_sample_response(const sample_response& resp,
                                                 std::uint32_t feature_dim) {
    std::vector<std::uint8_t> out;
    put_row(out, resp.sizes);
    put_u32(out, static_cast<std::uint32_t>(resp.entries.size()));
    for (const auto& e : resp.entries) {
        put_u32(out, e.cls);
        out.push_back(e.flag);
        if (e.value.features.size() != feature_dim)
            throw usage_error("encode_sample_response: feature length mismatch");
        for (const float f : e.value.features)
            put_f32(out, f);
        put_u32(out, e.value.label);
    }
    return out;
}

sample_response decode_sample_response(std::span<const std::uint8_t> payload,
                                       std::uint32_t feature_dim) {
    reader in(payload);
    sample_response resp;
    resp.sizes = read_row(in);
    const std::uint32_t count = in.u32();
    resp.entries.resize(count);
    for (auto& e : resp.entries) {
        e.cls = in.u32();
        e.flag = in.u8();
        e.value.features.resize(feature_dim);
        for (std::uint32_t i = 0; i < feature_dim; ++i)
            e.value.features[i] = in.f32();
        e.value.label = in.u32();
    }
    in.expect_end();
    return resp;
}

std::vector<std::uint8_t> encode_size_bcast(const size_bcast& msg) {
    std::vector<std::uint8_t> out;
    put_row(out, msg.row);
    return out;
}

size_bcast decode_size_bcast(std::span<const std::uint8_t> payload) {
    reader in(payload);
    size_bcast msg;
    msg.row = read_row(in);
    in.expect_end();
    return msg;
}

std::vector<std::uint8_t> encode_allreduce_chunk(const allreduce_chunk& msg) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + msg.values.size() * 4);
    put_u32(out, msg.rank);
    put_u64(out, msg.seq);
    put_u32(out, static_cast<std::uint32_t>(msg.values.size()));
    for (const float v : msg.values)
        put_f32(out, v);
    return out;
}

allreduce_chunk decode_allreduce_chunk(std::span<const std::uint8_t> payload) {
    reader in(payload);
    allreduce_chunk msg;
    msg.rank = in.u32();
    msg.seq = in.u64();
    const std::uint32_t count = in.u32();
    msg.values.resize(count);
    for (auto& v : msg.values)
        v = in.f32();
    in.expect_end();
    return msg;
}

} // namespace drb::wire

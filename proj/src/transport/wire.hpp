#pragma once

#include "buffer/rehearsal_buffer.hpp"
#include "core/types.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace drb::wire {

/**
 * Framed wire protocol, little-endian throughout.
 *
 * Frame layout (header is 20 bytes):
 *   magic   4 bytes  "DRBF"
 *   version u16      protocol version, currently 1
 *   type    u16      message type (see msg_type)
 *   len     u32      payload byte count
 *   reqid   u64      request id, echoed verbatim on replies
 * followed by `len` payload bytes.
 *
 * Payloads:
 *   SAMPLE_REQ      count u32, count x { class u32, slot u32 }
 *   SAMPLE_RESP     worker u32, version u64, K u32, K x occupancy u32,
 *                   count u32, count x { class u32, flag u8,
 *                                        feature_dim x f32, label u32 }
 *   SIZE_BCAST      worker u32, version u64, K u32, K x occupancy u32
 *   ALLREDUCE_CHUNK rank u32, seq u64, count u32, count x f32
 *   SHUTDOWN        empty
 */

constexpr std::array<std::uint8_t, 4> k_magic = {'D', 'R', 'B', 'F'};
constexpr std::uint16_t k_version = 1;
constexpr std::size_t k_header_bytes = 20;

enum class msg_type : std::uint16_t {
    sample_req = 1,
    sample_resp = 2,
    size_bcast = 3,
    allreduce_chunk = 4,
    shutdown = 5,
};

const char* msg_type_name(msg_type t);

struct frame_header {
    std::uint16_t version = k_version;
    msg_type type = msg_type::shutdown;
    std::uint32_t payload_len = 0;
    std::uint64_t request_id = 0;
};

std::array<std::uint8_t, k_header_bytes> encode_header(const frame_header& h);

/// Throws protocol_error with a hex dump of the offending bytes on bad
/// magic, version or message type.
frame_header decode_header(std::span<const std::uint8_t, k_header_bytes> bytes);

struct frame {
    frame_header header;
    std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_frame(msg_type type, std::uint64_t request_id,
                                       std::span<const std::uint8_t> payload);

// -- typed payloads ---------------------------------------------------------

struct sample_request {
    std::vector<read_request> slots;
};

/// One worker's per-class occupancy vector at a given version (the version is
/// the pipeline round the snapshot reflects).
struct occupancy_row {
    worker_id worker = 0;
    std::uint64_t version = 0;
    std::vector<std::uint32_t> occupancy;

    bool operator==(const occupancy_row&) const = default;
};

struct sample_response {
    occupancy_row sizes; // responder's full occupancy vector, piggybacked
    struct entry {
        class_id cls = 0;
        std::uint8_t flag = 0; // read_status
        sample value;

        bool operator==(const entry&) const;
    };
    std::vector<entry> entries;
};

struct size_bcast {
    occupancy_row row;
};

struct allreduce_chunk {
    worker_id rank = 0;
    std::uint64_t seq = 0;
    std::vector<float> values;
};

std::vector<std::uint8_t> encode_sample_request(const sample_request& req);
sample_request decode_sample_request(std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> encode_sample_response(const sample_response& resp,
                                                 std::uint32_t feature_dim);
sample_response decode_sample_response(std::span<const std::uint8_t> payload,
                                       std::uint32_t feature_dim);

std::vector<std::uint8_t> encode_size_bcast(const size_bcast& msg);
size_bcast decode_size_bcast(std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> encode_allreduce_chunk(const allreduce_chunk& msg);
allreduce_chunk decode_allreduce_chunk(std::span<const std::uint8_t> payload);

std::string hex_dump(std::span<const std::uint8_t> bytes, std::size_t max_bytes = 32);

} // namespace drb::wire

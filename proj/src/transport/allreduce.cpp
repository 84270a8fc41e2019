#include "transport/allreduce.hpp"

#include "core/errors.hpp"

#include <chrono>

namespace drb {

namespace {
// Request-id namespace tag for collective traffic (sample fetches use tag 1).
constexpr std::uint64_t k_reduce_tag = 2ULL << 60;
} // namespace

std::uint64_t allreduce_op::request_id_for(std::uint64_t seq) {
    return k_reduce_tag | seq;
}

allreduce_op::allreduce_op(worker_id rank, std::uint32_t n_workers, rpc_client* client,
                           int timeout_ms)
    : m_rank(rank), m_n(n_workers), m_client(client), m_timeout_ms(timeout_ms) {
    if (n_workers > 1 && client == nullptr)
        throw usage_error("allreduce_op: multi-worker collective needs a client");
}

allreduce_op::round& allreduce_op::round_for(std::uint64_t seq) {
    auto& r = m_rounds[seq];
    if (r.inputs.empty()) {
        r.inputs.resize(m_n);
        r.present.assign(m_n, 0);
        r.replies.resize(m_n);
    }
    return r;
}

void allreduce_op::deliver(wire::allreduce_chunk&& msg,
                           std::function<void(const wire::allreduce_chunk&)> reply) {
    std::lock_guard lock(m_lock);
    if (msg.rank >= m_n)
        throw protocol_error("allreduce contribution from unknown rank " +
                             std::to_string(msg.rank));
    auto& r = round_for(msg.seq);
    if (!r.present[msg.rank]) {
        r.present[msg.rank] = 1;
        ++r.arrived;
    }
    r.inputs[msg.rank] = std::move(msg.values);
    r.replies[msg.rank] = std::move(reply);
    m_cv.notify_all();
}

void allreduce_op::abort(const std::string& why) {
    std::lock_guard lock(m_lock);
    m_aborted = true;
    m_abort_reason = why;
    m_cv.notify_all();
}

std::vector<float> allreduce_op::run(std::uint64_t seq, std::span<const float> input) {
    if (m_n == 1)
        return {input.begin(), input.end()};

    if (m_rank != 0) {
        wire::allreduce_chunk msg;
        msg.rank = m_rank;
        msg.seq = seq;
        msg.values.assign(input.begin(), input.end());
        auto future = m_client->send_allreduce(0, msg, request_id_for(seq));
        const auto status = future.wait_for(std::chrono::milliseconds(m_timeout_ms));
        if (status != std::future_status::ready)
            throw transport_error("all-reduce timed out at iteration " + std::to_string(seq));
        try {
            auto mean = future.get();
            if (mean.size() != input.size())
                throw protocol_error("all-reduce reply length mismatch at iteration " +
                                     std::to_string(seq));
            return mean;
        } catch (const transport_error& e) {
            throw transport_error("all-reduce aborted at iteration " + std::to_string(seq) +
                                  ": " + e.what());
        }
    }

    std::unique_lock lock(m_lock);
    auto& r = round_for(seq);
    r.inputs[0].assign(input.begin(), input.end());
    if (!r.present[0]) {
        r.present[0] = 1;
        ++r.arrived;
    }
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::milliseconds(m_timeout_ms);
    while (r.arrived < m_n && !m_aborted) {
        if (m_cv.wait_until(lock, deadline) == std::cv_status::timeout)
            throw transport_error("all-reduce timed out waiting for peers at iteration " +
                                  std::to_string(seq));
    }
    if (m_aborted)
        throw transport_error("all-reduce aborted at iteration " + std::to_string(seq) + ": " +
                              m_abort_reason);

    // Fixed reduction order: sum rank 0..N-1, then divide. Keeps results
    // bitwise reproducible run to run.
    std::vector<float> mean = r.inputs[0];
    for (std::uint32_t rank = 1; rank < m_n; ++rank) {
        const auto& v = r.inputs[rank];
        if (v.size() != mean.size())
            throw protocol_error("all-reduce length mismatch at iteration " +
                                 std::to_string(seq));
        for (std::size_t i = 0; i < mean.size(); ++i)
            mean[i] += v[i];
    }
    const float scale = static_cast<float>(m_n);
    for (auto& v : mean)
        v /= scale;

    wire::allreduce_chunk out;
    out.rank = 0;
    out.seq = seq;
    out.values = mean;
    auto replies = std::move(r.replies);
    m_rounds.erase(seq);
    lock.unlock();

    for (auto& reply : replies)
        if (reply)
            reply(out);
    return mean;
}

} // namespace drb

#pragma once

#include "transport/wire.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace drb {

/// Owning file-descriptor wrapper; move-only.
class socket_fd {
public:
    socket_fd() = default;
    explicit socket_fd(int fd) : m_fd(fd) {}
    socket_fd(socket_fd&& other) noexcept : m_fd(other.release()) {}
    socket_fd& operator=(socket_fd&& other) noexcept;
    socket_fd(const socket_fd&) = delete;
    socket_fd& operator=(const socket_fd&) = delete;
    ~socket_fd();

    int get() const { return m_fd; }
    bool valid() const { return m_fd >= 0; }
    int release();
    void close();
    /// Unblocks any thread sleeping in read/write on this fd.
    void shutdown_both();

private:
    int m_fd = -1;
};

/// Bind + listen on 127.0.0.1:port. Throws transport_error on failure
/// (port conflicts surface here).
socket_fd listen_on(std::uint16_t port, int backlog = 64);

/// Accept one connection; empty when the listener was shut down.
std::optional<socket_fd> accept_from(const socket_fd& listener);

/**
 * Connect to host:port, retrying refused/unreachable connections with a
 * short backoff for up to `retry_ms`. Throws transport_error (retriable)
 * when the budget is exhausted.
 */
socket_fd connect_to(const std::string& host, std::uint16_t port, int retry_ms = 10000);

/// Write the whole buffer; throws transport_error on failure.
void write_all(const socket_fd& fd, const std::uint8_t* data, std::size_t len);

/// Read exactly len bytes. Returns false on clean EOF at a frame boundary
/// (start == true); throws transport_error on mid-buffer EOF or errors.
bool read_exact(const socket_fd& fd, std::uint8_t* data, std::size_t len, bool start = false);

/// Read one full frame; empty on clean EOF.
std::optional<wire::frame> read_frame(const socket_fd& fd);

void write_frame(const socket_fd& fd, wire::msg_type type, std::uint64_t request_id,
                 std::span<const std::uint8_t> payload);

/// Ephemeral free port (bind :0, record, close). Best effort.
std::uint16_t find_free_port();

} // namespace drb

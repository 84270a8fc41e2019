#include "transport/socket.hpp"

#include "core/errors.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <thread>
#include <unistd.h>

namespace drb {

namespace {

std::string errno_text(const std::string& what) {
    return what + ": " + std::strerror(errno);
}

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    const char* h = host.empty() || host == "localhost" ? "127.0.0.1" : host.c_str();
    if (inet_pton(AF_INET, h, &addr.sin_addr) != 1)
        throw transport_error("bad host address '" + host + "'", false);
    return addr;
}

} // namespace

socket_fd& socket_fd::operator=(socket_fd&& other) noexcept {
    if (this != &other) {
        close();
        m_fd = other.release();
    }
    return *this;
}

socket_fd::~socket_fd() {
    close();
}

int socket_fd::release() {
    const int fd = m_fd;
    m_fd = -1;
    return fd;
}

void socket_fd::close() {
    if (m_fd >= 0) {
        ::close(m_fd);
        m_fd = -1;
    }
}

void socket_fd::shutdown_both() {
    if (m_fd >= 0)
        ::shutdown(m_fd, SHUT_RDWR);
}

socket_fd listen_on(std::uint16_t port, int backlog) {
    socket_fd fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (!fd.valid())
        throw transport_error(errno_text("socket"), false);
    const int one = 1;
    ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = make_addr("127.0.0.1", port);
    if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        throw transport_error(errno_text("bind to port " + std::to_string(port)), false);
    if (::listen(fd.get(), backlog) != 0)
        throw transport_error(errno_text("listen"), false);
    return fd;
}

std::optional<socket_fd> accept_from(const socket_fd& listener) {
    for (;;) {
        const int fd = ::accept(listener.get(), nullptr, nullptr);
        if (fd >= 0) {
            const int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            return socket_fd(fd);
        }
        if (errno == EINTR)
            continue;
        return std::nullopt; // listener closed / shut down
    }
}

socket_fd connect_to(const std::string& host, std::uint16_t port, int retry_ms) {
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::milliseconds(retry_ms);
    const sockaddr_in addr = make_addr(host, port);
    int backoff_ms = 5;
    for (;;) {
        socket_fd fd(::socket(AF_INET, SOCK_STREAM, 0));
        if (!fd.valid())
            throw transport_error(errno_text("socket"), false);
        if (::connect(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
            const int one = 1;
            ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            return fd;
        }
        const bool retriable = errno == ECONNREFUSED || errno == ECONNRESET ||
                               errno == ENETUNREACH || errno == ETIMEDOUT || errno == EINTR;
        if (!retriable || std::chrono::steady_clock::now() >= deadline)
            throw transport_error(
                errno_text("connect to " + host + ":" + std::to_string(port)), retriable);
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
        backoff_ms = std::min(backoff_ms * 2, 200);
    }
}

void write_all(const socket_fd& fd, const std::uint8_t* data, std::size_t len) {
    std::size_t sent = 0;
    while (sent < len) {
        const ssize_t n = ::send(fd.get(), data + sent, len - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw transport_error(errno_text("send"));
        }
        sent += static_cast<std::size_t>(n);
    }
}

bool read_exact(const socket_fd& fd, std::uint8_t* data, std::size_t len, bool start) {
    std::size_t got = 0;
    while (got < len) {
        const ssize_t n = ::recv(fd.get(), data + got, len - got, 0);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw transport_error(errno_text("recv"));
        }
        if (n == 0) {
            if (got == 0 && start)
                return false;
            throw transport_error("connection closed mid-frame (" + std::to_string(got) +
                                  "/" + std::to_string(len) + " bytes)");
        }
        got += static_cast<std::size_t>(n);
    }
    return true;
}

std::optional<wire::frame> read_frame(const socket_fd& fd) {
    std::array<std::uint8_t, wire::k_header_bytes> header_bytes;
    if (!read_exact(fd, header_bytes.data(), header_bytes.size(), /*start=*/true))
        return std::nullopt;
    wire::frame f;
    f.header = wire::decode_header(header_bytes);
    f.payload.resize(f.header.payload_len);
    if (f.header.payload_len > 0)
        read_exact(fd, f.payload.data(), f.payload.size());
    return f;
}

void write_frame(const socket_fd& fd, wire::msg_type type, std::uint64_t request_id,
                 std::span<const std::uint8_t> payload) {
    const auto bytes = wire::encode_frame(type, request_id, payload);
    write_all(fd, bytes.data(), bytes.size());
}

std::uint16_t find_free_port() {
    socket_fd fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (!fd.valid())
        throw transport_error(errno_text("socket"), false);
    sockaddr_in addr = make_addr("127.0.0.1", 0);
    if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        throw transport_error(errno_text("bind"), false);
    socklen_t len = sizeof addr;
    if (::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len) != 0)
        throw transport_error(errno_text("getsockname"), false);
    return ntohs(addr.sin_port);
}

} // namespace drb

#pragma once

#include <stdexcept>
#include <string>

namespace drb {

/// Invalid or inconsistent run configuration.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem / dataset IO failure; message carries the path.
struct io_error : std::runtime_error {
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

/// Connection-level failure. Retriable errors (refused/reset) may be retried
/// by the caller; the flag distinguishes them from permanent ones.
struct transport_error : std::runtime_error {
    bool retriable;
    explicit transport_error(const std::string& what, bool retriable_ = true)
        : std::runtime_error(what), retriable(retriable_) {}
};

/// Malformed frame or unknown message type. Fatal for the connection.
struct protocol_error : std::runtime_error {
    explicit protocol_error(const std::string& what) : std::runtime_error(what) {}
};

/// Misuse of a component lifecycle (double start, update after shutdown, ...).
struct usage_error : std::logic_error {
    explicit usage_error(const std::string& what) : std::logic_error(what) {}
};

/// Non-finite loss/gradient or other fatal numeric failure during training.
struct training_error : std::runtime_error {
    explicit training_error(const std::string& what) : std::runtime_error(what) {}
};

/// Background pipeline died; carries the underlying cause.
struct engine_error : std::runtime_error {
    explicit engine_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace drb

#pragma once

#include <stdexcept>
#include <string>

namespace dcrab {

/// Raised when a propagation cannot be carried out (non-finite controls,
/// dimension mismatch, open model with a pure-state initial condition).
class DynamicsError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Raised by the closed-loop layer on any protocol violation.
class ProtocolError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Decode failure of a wire message. `field()` names the offending field, or
/// "unexpected end" / "json" for syntax errors.
class DecodeError : public ProtocolError {
   public:
    DecodeError(std::string field, const std::string &what)
        : ProtocolError("decode error at '" + field + "': " + what), field_(std::move(field)) {}

    const std::string &field() const noexcept { return field_; }

   private:
    std::string field_;
};

/// Evaluation of a figure of merit timed out (closed-loop transports).
class TimeoutError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Configuration validation failure; `pointer()` is a JSON pointer into the
/// offending document.
class ConfigError : public std::runtime_error {
   public:
    ConfigError(std::string pointer, const std::string &what)
        : std::runtime_error(pointer + ": " + what), pointer_(std::move(pointer)) {}

    const std::string &pointer() const noexcept { return pointer_; }

   private:
    std::string pointer_;
};

}  // namespace dcrab

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace centroid_reg {

/// Base of every error raised by the library. `code()` is a stable,
/// machine-readable identifier; the CLI prints it verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// Operand shapes do not line up.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape_mismatch", message) {}
};

/// A value breaks a documented precondition or type invariant.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message) : Error("validation", message) {}
};

/// Errors from the binary containers (EMBD, EMBC, EMBM) and the JSON-lines form.
class FormatError : public Error {
 public:
  enum class Kind {
    bad_magic,
    version_mismatch,
    truncated,
    checksum_mismatch,
    invariant_violation,
    trailing_bytes,
    malformed_text,
    io,
  };

  FormatError(Kind kind, const std::string& message,
              std::optional<std::uint64_t> offset = std::nullopt)
      : Error(std::string(kind_name(kind)), decorate(message, offset)),
        kind_(kind),
        offset_(offset) {}

  Kind kind() const noexcept { return kind_; }
  std::optional<std::uint64_t> offset() const noexcept { return offset_; }

  static constexpr std::string_view kind_name(Kind kind) {
    switch (kind) {
      case Kind::bad_magic: return "bad_magic";
      case Kind::version_mismatch: return "version_mismatch";
      case Kind::truncated: return "truncated";
      case Kind::checksum_mismatch: return "checksum_mismatch";
      case Kind::invariant_violation: return "invariant_violation";
      case Kind::trailing_bytes: return "trailing_bytes";
      case Kind::malformed_text: return "malformed_text";
      case Kind::io: return "io";
    }
    return "unknown";
  }

 private:
  static std::string decorate(const std::string& message, std::optional<std::uint64_t> offset) {
    if (!offset) return message;
    return message + " (byte offset " + std::to_string(*offset) + ")";
  }

  Kind kind_;
  std::optional<std::uint64_t> offset_;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch, const std::string& what)
      : Error("divergence", what + " at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace centroid_reg

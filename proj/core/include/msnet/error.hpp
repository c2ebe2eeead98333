#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace msnet {

/// Error codes raised across the dataplane. Hot-path outcomes (ring Full or
/// Empty, socket WouldBlock) are reported by return value instead.
enum class Errc {
    FrameTooLarge,
    Truncated,
    NotRoutable,
    BadCapacity,
    VfExhausted,
    IpConflict,
    NotAssigned,
    PortInUse,
    Exhausted,
    NotOwner,
    NotBound,
    AlreadyRunning,
    PoolExhausted,
    NotAllocated,
    CorruptSnapshot,
    NoServerChannel,
    WrongMode,
    SwitchInProgress,
    UnknownApp,
    UnknownVerb,
    ConfigError,
    PoolShutdown,
    UnknownTask,
    ConnectTimeout,
    ConnectionReset,
    BadState,
    InvalidArgument,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string& what);
    explicit Error(Errc code);

    Errc code() const noexcept { return code_; }
    /// The message without the leading code name.
    const std::string& detail() const noexcept { return detail_; }

  private:
    Errc code_;
    std::string detail_;
};

/// Snapshot decoding failure; offset is the byte position where parsing
/// stopped making sense.
class CorruptSnapshot : public Error {
  public:
    CorruptSnapshot(std::size_t offset, const std::string& reason);

    std::size_t offset() const noexcept { return offset_; }

  private:
    std::size_t offset_;
};

/// Scenario configuration failure with line and field diagnostics.
class ConfigError : public Error {
  public:
    ConfigError(std::size_t line, std::string field, const std::string& reason);

    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

  private:
    std::size_t line_;
    std::string field_;
};

}  // namespace msnet

#include "msnet/error.hpp"

namespace msnet {

std::string_view errc_name(Errc code) noexcept
{
    switch (code) {
    case Errc::FrameTooLarge: return "FrameTooLarge";
    case Errc::Truncated: return "Truncated";
    case Errc::NotRoutable: return "NotRoutable";
    case Errc::BadCapacity: return "BadCapacity";
    case Errc::VfExhausted: return "VfExhausted";
    case Errc::IpConflict: return "IpConflict";
    case Errc::NotAssigned: return "NotAssigned";
    case Errc::PortInUse: return "PortInUse";
    case Errc::Exhausted: return "Exhausted";
    case Errc::NotOwner: return "NotOwner";
    case Errc::NotBound: return "NotBound";
    case Errc::AlreadyRunning: return "AlreadyRunning";
    case Errc::PoolExhausted: return "PoolExhausted";
    case Errc::NotAllocated: return "NotAllocated";
    case Errc::CorruptSnapshot: return "CorruptSnapshot";
    case Errc::NoServerChannel: return "NoServerChannel";
    case Errc::WrongMode: return "WrongMode";
    case Errc::SwitchInProgress: return "SwitchInProgress";
    case Errc::UnknownApp: return "UnknownApp";
    case Errc::UnknownVerb: return "UnknownVerb";
    case Errc::ConfigError: return "ConfigError";
    case Errc::PoolShutdown: return "PoolShutdown";
    case Errc::UnknownTask: return "UnknownTask";
    case Errc::ConnectTimeout: return "ConnectTimeout";
    case Errc::ConnectionReset: return "ConnectionReset";
    case Errc::BadState: return "BadState";
    case Errc::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what)
    , code_(code)
    , detail_(what)
{
}

Error::Error(Errc code)
    : std::runtime_error(std::string(errc_name(code)))
    , code_(code)
{
}

CorruptSnapshot::CorruptSnapshot(std::size_t offset, const std::string& reason)
    : Error(Errc::CorruptSnapshot, "offset " + std::to_string(offset) + ": " + reason)
    , offset_(offset)
{
}

ConfigError::ConfigError(std::size_t line, std::string field, const std::string& reason)
    : Error(Errc::ConfigError,
            "line " + std::to_string(line) + ": field '" + field + "': " + reason)
    , line_(line)
    , field_(std::move(field))
{
}

}  // namespace msnet

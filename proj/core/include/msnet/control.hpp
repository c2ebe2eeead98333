#pragma once

#include "msnet/runtime.hpp"

#include <atomic>
#include <functional>
#include <string>
#include <string_view>
#include <thread>

namespace msnet {

/// Executes one control verb against a running runtime and returns the reply
/// line (without newline): `ok ...` or `error <code> <message>`.
///
///     switch <app> server|direct
///     crash server
///     restart server
///     stats
///     quit            sets quit
std::string handle_control(Runtime& rt, std::string_view line, std::atomic<bool>& quit);

/// Newline-delimited text protocol on a local stream socket. Each request line
/// gets exactly one reply line. Clients are served one at a time by a
/// dedicated thread.
class ControlServer {
  public:
    using Handler = std::function<std::string(std::string_view line)>;

    /// Binds and listens on path, replacing a stale socket file. Throws
    /// Error(InvalidArgument) when the socket cannot be created.
    ControlServer(std::string path, Handler handler);
    ControlServer(const ControlServer&) = delete;
    ControlServer& operator=(const ControlServer&) = delete;
    ~ControlServer();

    const std::string& path() const noexcept { return path_; }
    void stop();

  private:
    void serve();
    void serve_client(int fd);

    std::string path_;
    Handler handler_;
    int listen_fd_ = -1;
    std::atomic<bool> stop_{false};
    std::thread thread_;
};

/// Client side: sends one line and returns the reply line. Throws
/// Error(InvalidArgument) on connection failure.
std::string control_request(const std::string& path, std::string_view line);

}  // namespace msnet

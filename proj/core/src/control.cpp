#include "msnet/control.hpp"

#include "msnet/error.hpp"

#include <cerrno>
#include <cstring>
#include <iomanip>
#include <sstream>
#include <vector>

#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

namespace msnet {

namespace {

std::vector<std::string> split(std::string_view line)
{
    std::istringstream in{std::string(line)};
    std::vector<std::string> out;
    for (std::string w; in >> w;)
        out.push_back(w);
    return out;
}

std::string error_reply(Errc code, std::string_view what)
{
    return "error " + std::string(errc_name(code)) + " " + std::string(what);
}

sockaddr_un make_addr(const std::string& path)
{
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (path.size() >= sizeof addr.sun_path)
        throw Error(Errc::InvalidArgument, "control socket path too long: " + path);
    std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
    return addr;
}

bool write_all(int fd, std::string_view data)
{
    while (!data.empty()) {
        const auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

}  // namespace

std::string handle_control(Runtime& rt, std::string_view line, std::atomic<bool>& quit)
{
    const auto w = split(line);
    try {
        if (w.empty())
            throw Error(Errc::UnknownVerb, "empty command");
        if (w[0] == "switch") {
            if (w.size() != 3 || (w[2] != "server" && w[2] != "direct"))
                throw Error(Errc::UnknownVerb, "usage: switch <app> server|direct");
            const auto plan = rt.switch_app(w[1], w[2] == "direct" ? Mode::Direct : Mode::Server);
            std::ostringstream out;
            out << "ok switched " << w[1] << " to " << w[2];
            if (auto lat = measure_switch_latency(plan))
                out << " latency_ms=" << std::fixed << std::setprecision(3)
                    << std::chrono::duration<double, std::milli>(*lat).count();
            return out.str();
        }
        if (w[0] == "crash" && w.size() == 2 && w[1] == "server") {
            rt.crash_server();
            return "ok server crashed";
        }
        if (w[0] == "restart" && w.size() == 2 && w[1] == "server") {
            rt.restart_server();
            return "ok server restarted epoch=" + std::to_string(rt.supervisor().server_epoch());
        }
        if (w[0] == "stats" && w.size() == 1)
            return "ok " + rt.stats_line();
        if (w[0] == "quit" && w.size() == 1) {
            quit = true;
            return "ok bye";
        }
        throw Error(Errc::UnknownVerb, "unknown command '" + std::string(line) + "'");
    } catch (const Error& e) {
        return error_reply(e.code(), e.detail());
    }
}

ControlServer::ControlServer(std::string path, Handler handler)
    : path_(std::move(path))
    , handler_(std::move(handler))
{
    const auto addr = make_addr(path_);
    listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (listen_fd_ < 0)
        throw Error(Errc::InvalidArgument, std::string("control socket: ") + std::strerror(errno));
    ::unlink(path_.c_str());
    if (::bind(listen_fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0 ||
        ::listen(listen_fd_, 4) != 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        throw Error(Errc::InvalidArgument, "control socket " + path_ + ": " + why);
    }
    thread_ = std::thread([this] { serve(); });
}

ControlServer::~ControlServer()
{
    stop();
}

void ControlServer::stop()
{
    if (stop_.exchange(true))
        return;
    if (thread_.joinable())
        thread_.join();
    ::close(listen_fd_);
    ::unlink(path_.c_str());
}

void ControlServer::serve()
{
    while (!stop_) {
        pollfd p{listen_fd_, POLLIN, 0};
        if (::poll(&p, 1, 50) <= 0)
            continue;
        const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0)
            continue;
        serve_client(fd);
        ::close(fd);
    }
}

void ControlServer::serve_client(int fd)
{
    std::string buf;
    char chunk[512];
    while (!stop_) {
        pollfd p{fd, POLLIN, 0};
        const int r = ::poll(&p, 1, 50);
        if (r == 0)
            continue;
        if (r < 0 && errno == EINTR)
            continue;
        if (r < 0)
            return;
        const auto n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n <= 0)
            return;
        buf.append(chunk, static_cast<std::size_t>(n));
        for (auto nl = buf.find('\n'); nl != std::string::npos; nl = buf.find('\n')) {
            auto line = buf.substr(0, nl);
            buf.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            if (!write_all(fd, handler_(line) + "\n"))
                return;
        }
    }
}

std::string control_request(const std::string& path, std::string_view line)
{
    const auto addr = make_addr(path);
    const int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0)
        throw Error(Errc::InvalidArgument, std::string("socket: ") + std::strerror(errno));
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        const std::string why = std::strerror(errno);
        ::close(fd);
        throw Error(Errc::InvalidArgument, "connect " + path + ": " + why);
    }
    std::string req(line);
    req += '\n';
    std::string reply;
    if (write_all(fd, req)) {
        char c;
        while (::recv(fd, &c, 1, 0) == 1 && c != '\n')
            reply += c;
    }
    ::close(fd);
    return reply;
}

}  // namespace msnet

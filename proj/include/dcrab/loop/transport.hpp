#pragma once

// Server-side transports: in-process, TCP (POSIX sockets) and a shared
// exchange directory. All of them carry LoopMessage values in lock-step.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "dcrab/error.hpp"
#include "dcrab/loop/protocol.hpp"
#include "dcrab/pulses.hpp"

namespace dcrab::loop {

using Clock = std::chrono::steady_clock;

class Transport {
   public:
    virtual ~Transport() = default;
    virtual void send(const LoopMessage &m) = 0;
    /// Next message, or nullopt if none arrived within `timeout`. Throws
    /// DecodeError on a malformed message and ProtocolError on a lost peer.
    virtual std::optional<LoopMessage> receive(std::chrono::milliseconds timeout) = 0;
};

// ---------------------------------------------------------------------------
// In-process: every message is encoded and decoded, so the wire format is
// exercised without sockets. The client callback returns reply lines.

class InProcessTransport : public Transport {
   public:
    using Client = std::function<std::optional<std::string>(const std::string &line)>;

    explicit InProcessTransport(Client client) : client_(std::move(client)) {}

    void send(const LoopMessage &m) override {
        if (auto reply = client_(encode(m))) pending_.push_back(std::move(*reply));
    }

    std::optional<LoopMessage> receive(std::chrono::milliseconds) override {
        if (pending_.empty()) return std::nullopt;
        std::string line = std::move(pending_.front());
        pending_.pop_front();
        return decode(line);
    }

   private:
    Client client_;
    std::deque<std::string> pending_;
};

// ---------------------------------------------------------------------------
// TCP

class Socket {
   public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket &&o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket &operator=(Socket &&o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    Socket(const Socket &) = delete;
    Socket &operator=(const Socket &) = delete;
    ~Socket() { reset(); }

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

   private:
    int fd_ = -1;
};

namespace detail {

inline std::string errno_text(const char *what) { return std::string(what) + ": " + std::strerror(errno); }

/// Waits for `events` on fd; false on timeout.
inline bool wait_fd(int fd, short events, std::chrono::milliseconds timeout) {
    pollfd p{fd, events, 0};
    while (true) {
        int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (r > 0) return true;
        if (r == 0) return false;
        if (errno != EINTR) throw ProtocolError(errno_text("poll"));
    }
}

}  // namespace detail

/// Buffered line reader/writer over a connected socket.
class LineChannel {
   public:
    explicit LineChannel(Socket socket) : socket_(std::move(socket)) {}

    void send_line(const std::string &line) {
        std::string data = line + "\n";
        const char *p = data.data();
        std::size_t left = data.size();
        while (left > 0) {
            ssize_t n = ::send(socket_.fd(), p, left, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ProtocolError(detail::errno_text("send"));
            }
            p += n;
            left -= static_cast<std::size_t>(n);
        }
    }

    /// nullopt on timeout. On end of stream a partial trailing line is
    /// returned as-is; afterwards ProtocolError("connection closed").
    std::optional<std::string> read_line(std::chrono::milliseconds timeout) {
        const auto deadline = Clock::now() + timeout;
        while (true) {
            if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
                std::string line = buffer_.substr(0, pos);
                buffer_.erase(0, pos + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            if (closed_) {
                if (!buffer_.empty()) return std::exchange(buffer_, {});
                throw ProtocolError("connection closed");
            }
            auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
            if (left.count() < 0) return std::nullopt;
            if (!detail::wait_fd(socket_.fd(), POLLIN, left)) return std::nullopt;
            char chunk[4096];
            ssize_t n = ::recv(socket_.fd(), chunk, sizeof chunk, 0);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ProtocolError(detail::errno_text("recv"));
            }
            if (n == 0) closed_ = true;
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    void shutdown_write() { ::shutdown(socket_.fd(), SHUT_WR); }

   private:
    Socket socket_;
    std::string buffer_;
    bool closed_ = false;
};

class TcpListener {
   public:
    /// Binds host:port; port 0 picks a free port (see port()).
    TcpListener(const std::string &host, int port) {
        socket_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
        if (!socket_.valid()) throw ProtocolError(detail::errno_text("socket"));
        int one = 1;
        ::setsockopt(socket_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(port));
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            throw ProtocolError("invalid IPv4 address '" + host + "'");
        }
        if (::bind(socket_.fd(), reinterpret_cast<sockaddr *>(&addr), sizeof addr) != 0) {
            throw ProtocolError(detail::errno_text("bind"));
        }
        if (::listen(socket_.fd(), 16) != 0) throw ProtocolError(detail::errno_text("listen"));
        socklen_t len = sizeof addr;
        ::getsockname(socket_.fd(), reinterpret_cast<sockaddr *>(&addr), &len);
        port_ = ntohs(addr.sin_port);
    }

    int port() const { return port_; }

    /// nullopt on timeout.
    std::optional<Socket> accept(std::chrono::milliseconds timeout) {
        if (!detail::wait_fd(socket_.fd(), POLLIN, timeout)) return std::nullopt;
        int fd = ::accept(socket_.fd(), nullptr, nullptr);
        if (fd < 0) throw ProtocolError(detail::errno_text("accept"));
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return Socket(fd);
    }

   private:
    Socket socket_;
    int port_ = 0;
};

inline Socket connect_tcp(const std::string &host, int port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo *res = nullptr;
    if (int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res); rc != 0) {
        throw ProtocolError("cannot resolve '" + host + "': " + ::gai_strerror(rc));
    }
    Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
    int rc = s.valid() ? ::connect(s.fd(), res->ai_addr, res->ai_addrlen) : -1;
    ::freeaddrinfo(res);
    if (rc != 0) throw ProtocolError(detail::errno_text("connect"));
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
}

class TcpTransport : public Transport {
   public:
    explicit TcpTransport(Socket socket) : channel_(std::move(socket)) {}

    void send(const LoopMessage &m) override { channel_.send_line(encode(m)); }

    std::optional<LoopMessage> receive(std::chrono::milliseconds timeout) override {
        auto line = channel_.read_line(timeout);
        if (!line) return std::nullopt;
        return decode(*line);
    }

   private:
    LineChannel channel_;
};

// ---------------------------------------------------------------------------
// Exchange directory
//
//   session.json            manifest {"session": id, "config": {...}}
//   pulse_<n>.csv           pulse of evaluation n (CSV pulse format)
//   pulse_<n>.ready         marker written after the CSV is complete
//   fom_<n>.json            client reply {"session": id, "iter": n, "J": x, "err": e}
//   error.json              error message, if any
//   close.json              session_close, written last
//
// Files are created through a temporary name and renamed, and never replaced.

namespace detail {

inline void write_new_file(const std::filesystem::path &path, const std::string &content) {
    if (std::filesystem::exists(path)) throw ProtocolError("refusing to overwrite " + path.string());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ProtocolError("cannot write " + tmp.string());
        os << content;
        if (!os.flush()) throw ProtocolError("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ProtocolError("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace detail

inline std::filesystem::path pulse_path(const std::filesystem::path &dir, std::size_t iter) {
    return dir / ("pulse_" + std::to_string(iter) + ".csv");
}
inline std::filesystem::path ready_path(const std::filesystem::path &dir, std::size_t iter) {
    return dir / ("pulse_" + std::to_string(iter) + ".ready");
}
inline std::filesystem::path fom_path(const std::filesystem::path &dir, std::size_t iter) {
    return dir / ("fom_" + std::to_string(iter) + ".json");
}

class ExchangeDirTransport : public Transport {
   public:
    explicit ExchangeDirTransport(std::filesystem::path dir, std::chrono::milliseconds poll = std::chrono::milliseconds(2))
        : dir_(std::move(dir)), poll_(poll) {
        std::filesystem::create_directories(dir_);
    }

    void send(const LoopMessage &m) override {
        switch (m.type) {
            case MessageType::session_open: {
                // Anything left in the directory belongs to another session.
                const auto manifest = dir_ / "session.json";
                if (std::filesystem::exists(manifest)) {
                    std::string other = "unknown";
                    try {
                        other = nlohmann::json::parse(detail::read_file(manifest)).value("session", other);
                    } catch (const nlohmann::json::exception &) {
                    }
                    throw ProtocolError("stale exchange directory: files from session '" + other + "'");
                }
                for (const auto &entry : std::filesystem::directory_iterator(dir_)) {
                    throw ProtocolError("stale exchange directory: unexpected file " + entry.path().filename().string());
                }
                session_ = m.session;
                detail::write_new_file(manifest, nlohmann::json{{"session", m.session}, {"config", m.config}}.dump(2));
                break;
            }
            case MessageType::pulse_request: {
                std::vector<Pulse> pulses = from_wire(m.pulses);
                detail::write_new_file(pulse_path(dir_, m.iter), pulses_to_csv(pulses));
                detail::write_new_file(ready_path(dir_, m.iter), "");
                awaiting_ = m.iter;
                break;
            }
            case MessageType::session_close: detail::write_new_file(dir_ / "close.json", encode(m) + "\n"); break;
            case MessageType::error: detail::write_new_file(dir_ / "error.json", encode(m) + "\n"); break;
            case MessageType::fom_reply: throw ProtocolError("the server does not send fom_reply");
        }
    }

    std::optional<LoopMessage> receive(std::chrono::milliseconds timeout) override {
        if (!awaiting_) throw ProtocolError("no outstanding pulse request");
        const auto deadline = Clock::now() + timeout;
        const auto path = fom_path(dir_, *awaiting_);
        while (!std::filesystem::exists(path)) {
            if (Clock::now() >= deadline) return std::nullopt;
            std::this_thread::sleep_for(poll_);
        }
        const std::string body = detail::read_file(path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error &e) {
            throw DecodeError("json", e.what());
        }
        if (!j.is_object()) throw DecodeError("J", "fom file must hold a JSON object");
        // The file layout implies the type.
        j["type"] = "fom_reply";
        if (!j.contains("session")) j["session"] = session_;
        LoopMessage m = message_from_json(j);
        awaiting_.reset();
        return m;
    }

    const std::filesystem::path &directory() const { return dir_; }

   private:
    std::filesystem::path dir_;
    std::chrono::milliseconds poll_;
    std::string session_;
    std::optional<std::size_t> awaiting_;
};

}  // namespace dcrab::loop

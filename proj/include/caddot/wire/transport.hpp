#pragma once

// Transport abstraction under the message grammar: stream sessions over TCP,
// logical datagram sessions over UDP (keyed by peer address), and `bt-sim`,
// a TCP profile with injected setup/per-message latencies standing in for a
// Bluetooth link. Sensors connect to the gateway's listener; the gateway
// speaks first on every accepted session.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "caddot/wire/message.hpp"

namespace caddot::wire {

struct TransportProfile {
    enum class Kind { tcp, udp, bt_sim };
    Kind kind = Kind::tcp;
    Millis setup_latency{0};
    Millis per_message_latency{0};

    static TransportProfile tcp() { return {Kind::tcp, Millis{0}, Millis{0}}; }
    static TransportProfile udp() { return {Kind::udp, Millis{0}, Millis{0}}; }
    static TransportProfile bt_sim() { return {Kind::bt_sim, Millis{600}, Millis{30}}; }

    static std::optional<TransportProfile> parse(std::string_view name) {
        if (name == "tcp") return tcp();
        if (name == "udp") return udp();
        if (name == "bt-sim") return bt_sim();
        return std::nullopt;
    }

    std::string_view name() const {
        switch (kind) {
            case Kind::tcp: return "tcp";
            case Kind::udp: return "udp";
            case Kind::bt_sim: return "bt-sim";
        }
        return "?";
    }

    bool operator==(const TransportProfile&) const = default;
};

class Timeout : public WireError {
public:
    using WireError::WireError;
};
class ConnectionClosed : public WireError {
public:
    using WireError::WireError;
};
class BindError : public WireError {
public:
    using WireError::WireError;
};
class AcceptError : public WireError {
public:
    using WireError::WireError;
};

struct LogEntry {
    enum class Dir { out, in };
    Dir dir;
    std::string frame;
    Clock::time_point at;
};

// Frame sent by a UDP client to materialize its logical session on the
// listener side; consumed at the transport layer, never logged.
inline constexpr std::string_view kAnnounceFrame = "ANNOUNCE\n";

inline constexpr int kUdpRetries = 2;  // resends before Timeout surfaces

namespace detail {

inline void sleep_latency(Millis d) {
    if (d.count() > 0) std::this_thread::sleep_for(d);
}

inline sockaddr_in resolve_ipv4(const std::string& host, uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
        throw WireError("cannot resolve host '" + host + "'");
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return addr;
}

inline std::string addr_to_string(const sockaddr_in& a) {
    char buf[INET_ADDRSTRLEN] = {0};
    inet_ntop(AF_INET, &a.sin_addr, buf, sizeof(buf));
    return std::string(buf) + ":" + std::to_string(ntohs(a.sin_port));
}

inline uint16_t bound_port(int fd) {
    sockaddr_in a{};
    socklen_t len = sizeof(a);
    if (getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len) != 0) return 0;
    return ntohs(a.sin_port);
}

} // namespace detail

class Session {
public:
    virtual ~Session() = default;

    const TransportProfile& profile() const { return profile_; }
    const std::string& peer() const { return peer_; }

    Millis default_timeout() const { return default_timeout_; }
    void set_default_timeout(Millis t) { default_timeout_ = t; }

    void send(const Message& msg) {
        std::string frame = encode(msg);
        log_entry(LogEntry::Dir::out, frame);
        physical_send(frame);
    }

    Message recv() { return recv(default_timeout_); }
    Message recv(Millis timeout) {
        std::string frame = read_frame(timeout);
        log_entry(LogEntry::Dir::in, frame);
        return decode(frame);
    }

    Message request(const Message& msg) { return request(msg, default_timeout_); }

    // Sends msg and returns the next inbound message. Datagram sessions drop
    // stale inbound frames first and resend up to kUdpRetries times on
    // timeout; retransmissions are not re-logged.
    Message request(const Message& msg, Millis timeout) {
        if (!is_datagram()) {
            send(msg);
            return recv(timeout);
        }
        drain_inbound();
        std::string frame = encode(msg);
        log_entry(LogEntry::Dir::out, frame);
        for (int attempt = 0; attempt <= kUdpRetries; ++attempt) {
            physical_send(frame);
            try {
                std::string reply = read_frame(timeout);
                log_entry(LogEntry::Dir::in, reply);
                return decode(reply);
            } catch (const Timeout&) {
                continue;
            }
        }
        throw Timeout("no reply from " + peer_ + " after " + std::to_string(1 + kUdpRetries) + " sends");
    }

    // One-shot connection setup cost, applied by the accepting side before
    // the first exchange so concurrent accepts are not serialized behind it.
    void complete_setup() {
        if (setup_done_.exchange(true)) return;
        detail::sleep_latency(profile_.setup_latency);
    }

    std::vector<LogEntry> log() const {
        std::lock_guard lk(log_mutex_);
        return log_;
    }

    virtual void close() = 0;
    virtual bool closed() const = 0;

protected:
    Session(TransportProfile profile, std::string peer)
        : profile_(profile), peer_(std::move(peer)) {}

    virtual void write_frame(const std::string& frame) = 0;
    virtual std::string read_frame(Millis timeout) = 0;
    virtual void drain_inbound() {}
    virtual bool is_datagram() const { return false; }

    void physical_send(const std::string& frame) {
        detail::sleep_latency(profile_.per_message_latency);
        write_frame(frame);
    }

    void log_entry(LogEntry::Dir dir, const std::string& frame) {
        std::lock_guard lk(log_mutex_);
        log_.push_back({dir, frame, Clock::now()});
    }

    TransportProfile profile_;
    std::string peer_;
    Millis default_timeout_{2000};
    std::atomic<bool> setup_done_{false};
    mutable std::mutex log_mutex_;
    std::vector<LogEntry> log_;
};

// ---------------------------------------------------------------------------
// TCP (and bt-sim) stream session

class TcpSession final : public Session {
public:
    TcpSession(int fd, TransportProfile profile, std::string peer)
        : Session(profile, std::move(peer)), fd_(fd) {
        int one = 1;
        setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    }

    ~TcpSession() override { close(); }

    void close() override {
        int fd = fd_.exchange(-1);
        if (fd >= 0) {
            ::shutdown(fd, SHUT_RDWR);
            ::close(fd);
        }
    }

    bool closed() const override { return fd_.load() < 0; }

protected:
    void write_frame(const std::string& frame) override {
        size_t off = 0;
        while (off < frame.size()) {
            int fd = fd_.load();
            if (fd < 0) throw ConnectionClosed("session closed");
            ssize_t n = ::send(fd, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ConnectionClosed("send failed: " + std::string(strerror(errno)));
            }
            off += static_cast<size_t>(n);
        }
    }

    std::string read_frame(Millis timeout) override {
        auto deadline = Clock::now() + timeout;
        while (true) {
            auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                std::string frame = buffer_.substr(0, nl + 1);
                buffer_.erase(0, nl + 1);
                return frame;
            }
            if (buffer_.size() > kMaxFrameBytes) {
                throw DecodeError(DecodeError::Kind::oversize, kMaxFrameBytes,
                                  "no terminator within frame cap");
            }
            int fd = fd_.load();
            if (fd < 0) throw ConnectionClosed("session closed");
            auto remaining = std::chrono::duration_cast<Millis>(deadline - Clock::now());
            if (remaining.count() <= 0) throw Timeout("recv timed out");
            pollfd pfd{fd, POLLIN, 0};
            int rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
            if (rc == 0) throw Timeout("recv timed out");
            if (rc < 0) {
                if (errno == EINTR) continue;
                throw ConnectionClosed("poll failed: " + std::string(strerror(errno)));
            }
            char chunk[4096];
            ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
            if (n == 0) throw ConnectionClosed("peer closed connection");
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ConnectionClosed("recv failed: " + std::string(strerror(errno)));
            }
            buffer_.append(chunk, static_cast<size_t>(n));
        }
    }

private:
    std::atomic<int> fd_{-1};
    std::string buffer_;
};

// ---------------------------------------------------------------------------
// UDP logical sessions

namespace detail {

struct UdpPeerQueue {
    std::mutex mutex;
    std::condition_variable cv;
    std::deque<std::string> frames;
    bool closed = false;
};

struct UdpCore {
    int fd = -1;
    std::mutex mutex;  // guards peers
    std::map<std::string, std::shared_ptr<UdpPeerQueue>> peers;

    ~UdpCore() {
        if (fd >= 0) ::close(fd);
    }
};

} // namespace detail

class UdpServerSession final : public Session {
public:
    UdpServerSession(std::shared_ptr<detail::UdpCore> core, sockaddr_in peer_addr,
                     std::shared_ptr<detail::UdpPeerQueue> queue, TransportProfile profile)
        : Session(profile, detail::addr_to_string(peer_addr)),
          core_(std::move(core)), peer_addr_(peer_addr), queue_(std::move(queue)) {}

    ~UdpServerSession() override { close(); }

    void close() override {
        if (closed_.exchange(true)) return;
        {
            std::lock_guard lk(queue_->mutex);
            queue_->closed = true;
        }
        queue_->cv.notify_all();
        std::lock_guard lk(core_->mutex);
        core_->peers.erase(peer_);
    }

    bool closed() const override { return closed_.load(); }

protected:
    bool is_datagram() const override { return true; }

    void write_frame(const std::string& frame) override {
        if (closed_.load()) throw ConnectionClosed("session closed");
        ssize_t n = ::sendto(core_->fd, frame.data(), frame.size(), 0,
                             reinterpret_cast<const sockaddr*>(&peer_addr_), sizeof(peer_addr_));
        if (n < 0) throw ConnectionClosed("sendto failed: " + std::string(strerror(errno)));
    }

    std::string read_frame(Millis timeout) override {
        std::unique_lock lk(queue_->mutex);
        if (!queue_->cv.wait_for(lk, timeout, [&] { return queue_->closed || !queue_->frames.empty(); })) {
            throw Timeout("recv timed out");
        }
        if (queue_->frames.empty()) throw ConnectionClosed("session closed");
        std::string frame = std::move(queue_->frames.front());
        queue_->frames.pop_front();
        return frame;
    }

    void drain_inbound() override {
        std::lock_guard lk(queue_->mutex);
        queue_->frames.clear();
    }

private:
    std::shared_ptr<detail::UdpCore> core_;
    sockaddr_in peer_addr_;
    std::shared_ptr<detail::UdpPeerQueue> queue_;
    std::atomic<bool> closed_{false};
};

class UdpClientSession final : public Session {
public:
    UdpClientSession(int fd, TransportProfile profile, std::string peer)
        : Session(profile, std::move(peer)), fd_(fd) {}

    ~UdpClientSession() override { close(); }

    // Datagram that materializes the logical session server-side. Callers may
    // re-announce while waiting for the gateway's first message.
    void announce() {
        int fd = fd_.load();
        if (fd < 0) throw ConnectionClosed("session closed");
        ::send(fd, kAnnounceFrame.data(), kAnnounceFrame.size(), MSG_NOSIGNAL);
    }

    void close() override {
        int fd = fd_.exchange(-1);
        if (fd >= 0) ::close(fd);
    }

    bool closed() const override { return fd_.load() < 0; }

protected:
    bool is_datagram() const override { return true; }

    void write_frame(const std::string& frame) override {
        int fd = fd_.load();
        if (fd < 0) throw ConnectionClosed("session closed");
        ssize_t n = ::send(fd, frame.data(), frame.size(), MSG_NOSIGNAL);
        if (n < 0) throw ConnectionClosed("send failed: " + std::string(strerror(errno)));
    }

    std::string read_frame(Millis timeout) override {
        auto deadline = Clock::now() + timeout;
        while (true) {
            int fd = fd_.load();
            if (fd < 0) throw ConnectionClosed("session closed");
            auto remaining = std::chrono::duration_cast<Millis>(deadline - Clock::now());
            if (remaining.count() <= 0) throw Timeout("recv timed out");
            pollfd pfd{fd, POLLIN, 0};
            int rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
            if (rc == 0) throw Timeout("recv timed out");
            if (rc < 0) {
                if (errno == EINTR) continue;
                throw ConnectionClosed("poll failed: " + std::string(strerror(errno)));
            }
            char buf[kMaxFrameBytes + 1];
            ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ConnectionClosed("recv failed: " + std::string(strerror(errno)));
            }
            return std::string(buf, static_cast<size_t>(n));
        }
    }

    void drain_inbound() override {
        int fd = fd_.load();
        if (fd < 0) return;
        char buf[kMaxFrameBytes + 1];
        while (::recv(fd, buf, sizeof(buf), MSG_DONTWAIT) > 0) {
        }
    }

private:
    std::atomic<int> fd_{-1};
};

// ---------------------------------------------------------------------------
// Listeners

class Listener {
public:
    virtual ~Listener() = default;
    virtual std::unique_ptr<Session> accept(Millis timeout) = 0;
    virtual uint16_t port() const = 0;
    virtual void close() = 0;
    const TransportProfile& profile() const { return profile_; }

    static std::unique_ptr<Listener> open(const TransportProfile& profile,
                                          const std::string& host, uint16_t port);

protected:
    explicit Listener(TransportProfile profile) : profile_(profile) {}
    TransportProfile profile_;
};

class TcpListener final : public Listener {
public:
    TcpListener(TransportProfile profile, const std::string& host, uint16_t port)
        : Listener(profile) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw BindError("socket: " + std::string(strerror(errno)));
        int one = 1;
        setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr = detail::resolve_ipv4(host, port);
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            int err = errno;
            ::close(fd_);
            fd_ = -1;
            throw BindError("bind " + host + ":" + std::to_string(port) + ": " + strerror(err));
        }
        if (::listen(fd_, 64) != 0) {
            int err = errno;
            ::close(fd_);
            fd_ = -1;
            throw BindError("listen: " + std::string(strerror(err)));
        }
        port_ = detail::bound_port(fd_);
    }

    ~TcpListener() override { close(); }

    std::unique_ptr<Session> accept(Millis timeout) override {
        int fd = fd_.load();
        if (fd < 0) throw AcceptError("listener closed");
        pollfd pfd{fd, POLLIN, 0};
        int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
        if (rc == 0) throw Timeout("accept timed out");
        if (rc < 0) throw AcceptError("poll: " + std::string(strerror(errno)));
        sockaddr_in peer{};
        socklen_t len = sizeof(peer);
        int cfd = ::accept(fd, reinterpret_cast<sockaddr*>(&peer), &len);
        if (cfd < 0) {
            if (fd_.load() < 0) throw AcceptError("listener closed");
            throw AcceptError("accept: " + std::string(strerror(errno)));
        }
        return std::make_unique<TcpSession>(cfd, profile_, detail::addr_to_string(peer));
    }

    uint16_t port() const override { return port_; }

    void close() override {
        int fd = fd_.exchange(-1);
        if (fd >= 0) {
            ::shutdown(fd, SHUT_RDWR);
            ::close(fd);
        }
    }

private:
    std::atomic<int> fd_{-1};
    uint16_t port_ = 0;
};

class UdpListener final : public Listener {
public:
    UdpListener(TransportProfile profile, const std::string& host, uint16_t port)
        : Listener(profile), core_(std::make_shared<detail::UdpCore>()) {
        core_->fd = ::socket(AF_INET, SOCK_DGRAM, 0);
        if (core_->fd < 0) throw BindError("socket: " + std::string(strerror(errno)));
        int one = 1;
        setsockopt(core_->fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr = detail::resolve_ipv4(host, port);
        if (::bind(core_->fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            int err = errno;
            throw BindError("bind " + host + ":" + std::to_string(port) + ": " + strerror(err));
        }
        port_ = detail::bound_port(core_->fd);
        pump_ = std::thread([this] { pump(); });
    }

    ~UdpListener() override {
        close();
        if (pump_.joinable()) pump_.join();
    }

    std::unique_ptr<Session> accept(Millis timeout) override {
        std::unique_lock lk(accept_mutex_);
        if (!accept_cv_.wait_for(lk, timeout, [&] { return stopping_ || !pending_.empty(); })) {
            throw Timeout("accept timed out");
        }
        if (pending_.empty()) throw AcceptError("listener closed");
        auto session = std::move(pending_.front());
        pending_.pop_front();
        return session;
    }

    uint16_t port() const override { return port_; }

    void close() override {
        if (stopping_.exchange(true)) return;
        accept_cv_.notify_all();
    }

private:
    void pump() {
        char buf[kMaxFrameBytes + 1];
        while (!stopping_.load()) {
            pollfd pfd{core_->fd, POLLIN, 0};
            int prc = ::poll(&pfd, 1, 100);
            if (prc == 0) continue;
            if (prc < 0) {
                if (errno == EINTR) continue;
                break;
            }
            sockaddr_in peer{};
            socklen_t len = sizeof(peer);
            ssize_t n = ::recvfrom(core_->fd, buf, sizeof(buf), MSG_DONTWAIT,
                                   reinterpret_cast<sockaddr*>(&peer), &len);
            if (n < 0) {
                if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK) continue;
                break;
            }
            std::string frame(buf, static_cast<size_t>(n));
            std::string key = detail::addr_to_string(peer);
            std::shared_ptr<detail::UdpPeerQueue> queue;
            bool fresh = false;
            {
                std::lock_guard lk(core_->mutex);
                auto it = core_->peers.find(key);
                if (it == core_->peers.end()) {
                    queue = std::make_shared<detail::UdpPeerQueue>();
                    core_->peers.emplace(key, queue);
                    fresh = true;
                } else {
                    queue = it->second;
                }
            }
            if (fresh) {
                auto session = std::make_unique<UdpServerSession>(core_, peer, queue, profile_);
                {
                    std::lock_guard lk(accept_mutex_);
                    pending_.push_back(std::move(session));
                }
                accept_cv_.notify_one();
            }
            if (frame == kAnnounceFrame) continue;  // consumed at transport level
            {
                std::lock_guard lk(queue->mutex);
                queue->frames.push_back(std::move(frame));
            }
            queue->cv.notify_one();
        }
    }

    std::shared_ptr<detail::UdpCore> core_;
    uint16_t port_ = 0;
    std::thread pump_;
    std::atomic<bool> stopping_{false};
    std::mutex accept_mutex_;
    std::condition_variable accept_cv_;
    std::deque<std::unique_ptr<Session>> pending_;
};

inline std::unique_ptr<Listener> Listener::open(const TransportProfile& profile,
                                                const std::string& host, uint16_t port) {
    if (profile.kind == TransportProfile::Kind::udp) {
        return std::make_unique<UdpListener>(profile, host, port);
    }
    return std::make_unique<TcpListener>(profile, host, port);
}

// Client-side connect. TCP/bt-sim resolve and connect with a deadline; UDP
// creates a connected datagram socket and announces itself.
inline std::unique_ptr<Session> connect_session(const TransportProfile& profile,
                                                const std::string& host, uint16_t port,
                                                Millis timeout = Millis{5000}) {
    sockaddr_in addr = detail::resolve_ipv4(host, port);
    if (profile.kind == TransportProfile::Kind::udp) {
        int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
        if (fd < 0) throw WireError("socket: " + std::string(strerror(errno)));
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            int err = errno;
            ::close(fd);
            throw WireError("connect: " + std::string(strerror(err)));
        }
        auto session = std::make_unique<UdpClientSession>(fd, profile, detail::addr_to_string(addr));
        session->announce();
        return session;
    }

    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw WireError("socket: " + std::string(strerror(errno)));
    int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    if (rc != 0 && errno != EINPROGRESS) {
        int err = errno;
        ::close(fd);
        throw ConnectionClosed("connect: " + std::string(strerror(err)));
    }
    if (rc != 0) {
        pollfd pfd{fd, POLLOUT, 0};
        int prc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
        if (prc <= 0) {
            ::close(fd);
            throw Timeout("connect timed out");
        }
        int err = 0;
        socklen_t len = sizeof(err);
        getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            ::close(fd);
            throw ConnectionClosed("connect: " + std::string(strerror(err)));
        }
    }
    fcntl(fd, F_SETFL, flags);
    return std::make_unique<TcpSession>(fd, profile, detail::addr_to_string(addr));
}

} // namespace caddot::wire

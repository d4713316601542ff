#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <deque>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "litfield/error.hpp"
#include "litfield/protocol.hpp"
#include "litfield/session.hpp"

namespace litfield::service {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

/// Parses "host:port" (port required).
inline Endpoint parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon + 1 == s.size())
    throw Error(ErrorCode::kInvalidArgument, "expected host:port, got '" + s + "'");
  Endpoint e;
  e.host = s.substr(0, colon);
  if (e.host.empty()) e.host = "0.0.0.0";
  const char* first = s.data() + colon + 1;
  const char* last = s.data() + s.size();
  const auto [end, ec] = std::from_chars(first, last, e.port);
  if (ec != std::errc() || end != last) throw Error(ErrorCode::kInvalidArgument, "bad port in '" + s + "'");
  return e;
}

namespace detail {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { reset(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  void shutdown_both() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

inline void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

inline void write_all(int fd, std::span<const std::uint8_t> data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kConnection, std::string("send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

enum class ReadStatus { kOk, kClosed, kTimeout };

/// Reads exactly `out.size()` bytes. A negative timeout blocks indefinitely;
/// otherwise the deadline covers the whole read.
inline ReadStatus read_exact(int fd, std::span<std::uint8_t> out, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::size_t got = 0;
  while (got < out.size()) {
    if (timeout.count() >= 0) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return ReadStatus::kTimeout;
      pollfd p{fd, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r == 0) return ReadStatus::kTimeout;
      if (r < 0) {
        if (errno == EINTR) continue;
        return ReadStatus::kClosed;
      }
    }
    const ssize_t n = ::recv(fd, out.data() + got, out.size() - got, 0);
    if (n == 0) return ReadStatus::kClosed;
    if (n < 0) {
      if (errno == EINTR) continue;
      return ReadStatus::kClosed;
    }
    got += static_cast<std::size_t>(n);
  }
  return ReadStatus::kOk;
}

/// Serializes whole frames onto one socket from several threads.
class FrameWriter {
 public:
  explicit FrameWriter(int fd) : fd_(fd) {}

  bool send(const protocol::Packet& p) {
    const auto payload = protocol::encode_packet(p);
    const auto frame = protocol::frame_payload(payload);
    std::lock_guard lock(mu_);
    if (closed_) return false;
    try {
      write_all(fd_, frame);
    } catch (const Error&) {
      closed_ = true;
      return false;
    }
    return true;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
  }

 private:
  int fd_;
  std::mutex mu_;
  bool closed_ = false;
};

}  // namespace detail

struct ServerConfig {
  Endpoint bind;
  int max_connections = 64;
  bool icp_enabled = false;
  std::optional<Preset> forced_preset;
  std::function<void(const std::string&)> log;
};

/// Framed-stream server: one thread per connection, sessions keyed by
/// (connection, session_id) and dropped with the connection.
class Server {
 public:
  explicit Server(ServerConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.max_connections < 1) throw Error(ErrorCode::kConfiguration, "max_connections must be positive");
  }
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;
  ~Server() { stop(); }

  void start() {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(cfg_.bind.port);
    if (::getaddrinfo(cfg_.bind.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
      throw Error(ErrorCode::kConnection, "cannot resolve bind address " + cfg_.bind.host);
    detail::Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const int rc = ::bind(s.fd(), res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (!s.valid() || rc != 0 || ::listen(s.fd(), 64) != 0)
      throw Error(ErrorCode::kConnection, std::string("cannot listen: ") + std::strerror(errno));
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    listener_ = std::move(s);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    if (acceptor_.joinable()) acceptor_.join();
    listener_.reset();
    std::list<std::shared_ptr<Connection>> conns;
    {
      std::lock_guard lock(mu_);
      conns = connections_;
    }
    for (auto& c : conns) c->socket.shutdown_both();
    for (auto& c : conns)
      if (c->thread.joinable()) c->thread.join();
    std::lock_guard lock(mu_);
    connections_.clear();
  }

  std::uint16_t port() const { return port_; }

  std::size_t active_connections() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& c : connections_) n += c->active ? 1 : 0;
    return n;
  }

 private:
  struct SessionSlot {
    std::mutex mu;
    ReconstructionSession session;
    explicit SessionSlot(ReconstructionSession s) : session(std::move(s)) {}
  };

  struct Connection {
    detail::Socket socket;
    std::thread thread;
    std::atomic<bool> active{true};
  };

  void log(const std::string& m) const {
    if (cfg_.log) cfg_.log(m);
  }

  void accept_loop() {
    while (running_) {
      pollfd p{listener_.fd(), POLLIN, 0};
      const int r = ::poll(&p, 1, 50);
      if (r <= 0) continue;
      const int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) continue;
      detail::set_nodelay(fd);
      reap();
      auto conn = std::make_shared<Connection>();
      conn->socket = detail::Socket(fd);
      std::lock_guard lock(mu_);
      std::size_t active = 0;
      for (const auto& c : connections_) active += c->active ? 1 : 0;
      if (active >= static_cast<std::size_t>(cfg_.max_connections)) {
        detail::FrameWriter w(fd);
        w.send(protocol::ErrorReport{0, "connection limit reached"});
        continue;  // conn's socket closes here
      }
      connections_.push_back(conn);
      conn->thread = std::thread([this, conn] {
        serve_connection(conn->socket.fd());
        conn->active = false;
      });
    }
  }

  void reap() {
    std::lock_guard lock(mu_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if (!(*it)->active && (*it)->thread.joinable()) {
        (*it)->thread.join();
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void serve_connection(int fd) {
    auto writer = std::make_shared<detail::FrameWriter>(fd);
    std::map<std::uint32_t, std::shared_ptr<SessionSlot>> sessions;
    std::list<std::thread> background;
    std::vector<std::uint8_t> payload;

    for (;;) {
      std::array<std::uint8_t, 4> header{};
      if (detail::read_exact(fd, header, std::chrono::milliseconds(-1)) != detail::ReadStatus::kOk) break;
      const std::uint32_t len = protocol::frame_length(header);
      if (len > protocol::kMaxFrameBytes) {
        writer->send(protocol::ErrorReport{0, "frame of " + std::to_string(len) + " bytes exceeds the 64 MiB cap"});
        break;
      }
      payload.resize(len);
      if (detail::read_exact(fd, payload, std::chrono::milliseconds(-1)) != detail::ReadStatus::kOk) break;
      handle_frame(payload, sessions, writer, background);
    }
    writer->close();
    for (auto& t : background) t.join();
    ::shutdown(fd, SHUT_RDWR);  // peer sees EOF now; the fd closes when reaped
  }

  void handle_frame(std::span<const std::uint8_t> payload, std::map<std::uint32_t, std::shared_ptr<SessionSlot>>& sessions,
                    const std::shared_ptr<detail::FrameWriter>& writer, std::list<std::thread>& background) {
    std::uint32_t session_id = 0;
    try {
      litfield::detail::Stopwatch decode_clock;
      protocol::Packet packet = protocol::decode_packet(payload);
      session_id = protocol::session_of(packet);

      if (auto* init = std::get_if<protocol::SessionInit>(&packet)) {
        SessionConfig cfg = protocol::config_from(*init);
        if (cfg_.forced_preset && *cfg_.forced_preset != Preset::kCustom) cfg = SessionConfig::from_preset(*cfg_.forced_preset);
        cfg.icp_enabled = cfg.icp_enabled || cfg_.icp_enabled;
        const Intrinsics k = protocol::intrinsics_from_wire(init->intrinsics, init->native_width, init->native_height);
        auto slot = std::make_shared<SessionSlot>(ReconstructionSession::create(
            protocol::rec_pos_from(*init), cfg, k, {init->native_width, init->native_height}, protocol::ambient_from(*init)));
        const EnvironmentMap map = slot->session.compose();
        sessions[session_id] = slot;
        log("session " + std::to_string(session_id) + " created (" + to_string(cfg.preset) + ")");
        writer->send(protocol::make_response(session_id, map));
        return;
      }

      const bool near = std::holds_alternative<protocol::NearKeyframe>(packet);
      const bool far = std::holds_alternative<protocol::FarKeyframe>(packet);
      if (!near && !far) throw Error(ErrorCode::kProtocol, "clients may only send init and keyframe packets");
      const auto it = sessions.find(session_id);
      if (it == sessions.end())
        throw Error(ErrorCode::kUnknownSession, "session " + std::to_string(session_id) + " was not initialized");
      const auto slot = it->second;

      std::optional<RegistrationJob> job;
      EnvironmentMap map;
      {
        std::lock_guard lock(slot->mu);
        ReconstructionSession& s = slot->session;
        if (near) {
          const auto& kf = std::get<protocol::NearKeyframe>(packet);
          CameraFrame frame = protocol::frame_from(kf);
          s.record_decode_ms(decode_clock.lap_ms());
          s.ingest_near(frame);
          if (s.config().icp_enabled) job = s.prepare_registration(kf.view_id);
        } else {
          CameraFrame frame = protocol::frame_from(std::get<protocol::FarKeyframe>(packet));
          s.record_decode_ms(decode_clock.lap_ms());
          s.ingest_far(frame);
        }
        map = s.compose();
      }
      writer->send(protocol::make_response(session_id, map));

      if (job) {
        background.emplace_back([slot, writer, session_id, job = std::move(*job)] {
          const RegistrationOutcome outcome = run_registration(job);
          std::optional<EnvironmentMap> refreshed;
          {
            std::lock_guard lock(slot->mu);
            if (slot->session.apply_registration(outcome)) refreshed = slot->session.compose();
          }
          if (refreshed) {
            const auto r = protocol::make_response(session_id, *refreshed);
            writer->send(protocol::EnvMapUpdate{r.session_id, r.width, r.height, r.rgb});
          }
        });
      }
    } catch (const std::exception& e) {
      writer->send(protocol::ErrorReport{session_id, e.what()});
    }
  }

  ServerConfig cfg_;
  detail::Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::list<std::shared_ptr<Connection>> connections_;
};

inline std::unique_ptr<Server> serve(ServerConfig cfg) {
  auto s = std::make_unique<Server>(std::move(cfg));
  s->start();
  return s;
}

/// Synchronous request/response client. Unsolicited map updates received
/// while waiting for a reply are queued for poll_update().
class Client {
 public:
  static Client connect(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(ep.port);
    if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
      throw Error(ErrorCode::kConnection, "cannot resolve " + ep.host);
    detail::Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
    const int rc = s.valid() ? ::connect(s.fd(), res->ai_addr, res->ai_addrlen) : -1;
    ::freeaddrinfo(res);
    if (rc != 0)
      throw Error(ErrorCode::kConnection, "cannot connect to " + ep.host + ":" + port + ": " + std::strerror(errno));
    detail::set_nodelay(s.fd());
    return Client(std::move(s), timeout);
  }

  /// Sends one packet and waits for its EnvMapResponse.
  EnvironmentMap send(const protocol::Packet& packet) {
    const std::uint32_t sid = protocol::session_of(packet);
    send_raw(protocol::frame_payload(protocol::encode_packet(packet)));
    for (;;) {
      protocol::Packet reply = read_packet(timeout_);
      if (auto* r = std::get_if<protocol::EnvMapResponse>(&reply)) {
        if (r->session_id != sid)
          throw Error(ErrorCode::kProtocol, "response for session " + std::to_string(r->session_id) + ", expected " +
                                                std::to_string(sid));
        return protocol::map_from(r->width, r->height, r->rgb);
      }
      if (auto* u = std::get_if<protocol::EnvMapUpdate>(&reply)) {
        updates_.push_back(*u);
        continue;
      }
      if (auto* e = std::get_if<protocol::ErrorReport>(&reply)) throw Error(ErrorCode::kRemote, e->message);
      throw Error(ErrorCode::kProtocol, "unexpected packet from server");
    }
  }

  /// Returns a queued or newly arrived unsolicited update, waiting up to `wait`.
  std::optional<protocol::EnvMapUpdate> poll_update(std::chrono::milliseconds wait) {
    if (updates_.empty()) {
      pollfd p{socket_.fd(), POLLIN, 0};
      if (::poll(&p, 1, static_cast<int>(wait.count())) > 0) {
        protocol::Packet pkt = read_packet(timeout_);
        if (auto* u = std::get_if<protocol::EnvMapUpdate>(&pkt))
          updates_.push_back(*u);
        else
          throw Error(ErrorCode::kProtocol, "unexpected packet while polling for updates");
      }
    }
    if (updates_.empty()) return std::nullopt;
    auto u = std::move(updates_.front());
    updates_.pop_front();
    return u;
  }

  void send_raw(std::span<const std::uint8_t> bytes) { detail::write_all(socket_.fd(), bytes); }

  /// Reads one framed packet.
  protocol::Packet read_packet(std::chrono::milliseconds timeout) {
    std::array<std::uint8_t, 4> header{};
    check(detail::read_exact(socket_.fd(), header, timeout));
    const std::uint32_t len = protocol::frame_length(header);
    if (len > protocol::kMaxFrameBytes) throw Error(ErrorCode::kProtocol, "oversized frame from server");
    std::vector<std::uint8_t> payload(len);
    check(detail::read_exact(socket_.fd(), payload, timeout));
    try {
      return protocol::decode_packet(payload);
    } catch (const Error& e) {
      throw Error(ErrorCode::kProtocol, e.what());
    }
  }

  void set_timeout(std::chrono::milliseconds t) { timeout_ = t; }

 private:
  Client(detail::Socket s, std::chrono::milliseconds timeout) : socket_(std::move(s)), timeout_(timeout) {}

  static void check(detail::ReadStatus st) {
    if (st == detail::ReadStatus::kTimeout) throw Error(ErrorCode::kTimeout, "no reply from server");
    if (st == detail::ReadStatus::kClosed) throw Error(ErrorCode::kConnection, "server closed the connection");
  }

  detail::Socket socket_;
  std::chrono::milliseconds timeout_;
  std::deque<protocol::EnvMapUpdate> updates_;
};

}  // namespace litfield::service

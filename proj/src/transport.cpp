#include "realmsim/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "realmsim/error.hpp"

namespace realmsim::transport {

namespace {

[[noreturn]] void throw_io(const std::string& what) {
  throw Error(ErrorCode::kIo, what + ": " + std::strerror(errno));
}

// False on orderly shutdown before the first byte.
bool read_exact(int fd, uint8_t* out, size_t n) {
  size_t got = 0;
  while (got < n) {
    ssize_t r = ::recv(fd, out + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw Error(ErrorCode::kIo, "connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw_io("recv");
    }
    got += static_cast<size_t>(r);
  }
  return true;
}

void write_all(int fd, ByteView data) {
  size_t sent = 0;
  while (sent < data.size()) {
    ssize_t r = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw_io("send");
    }
    sent += static_cast<size_t>(r);
  }
}

std::optional<Bytes> read_frame_body(int fd) {
  uint8_t header[4];
  if (!read_exact(fd, header, 4)) return std::nullopt;
  Bytes body(protocol::frame_length(ByteView(header, 4)));
  if (!body.empty() && !read_exact(fd, body.data(), body.size())) {
    throw Error(ErrorCode::kIo, "connection closed mid-frame");
  }
  return body;
}

}  // namespace

void Link::send(const protocol::Message& message) {
  Bytes f = protocol::frame(message.body());
  log_.push_back({true, message.type, f});
  send_frame(f);
}

protocol::Message Link::receive() {
  Bytes body = receive_body();
  protocol::Message m = protocol::Message::parse(body);
  log_.push_back({false, m.type, protocol::frame(body)});
  return m;
}

void InProcessLink::send_frame(const Bytes& frame) {
  ByteView body = ByteView(frame).subspan(4);
  for (Bytes& reply : session_.on_frame(body)) pending_.push_back(std::move(reply));
}

Bytes InProcessLink::receive_body() {
  if (pending_.empty()) throw Error(ErrorCode::kIo, "provider sent nothing");
  Bytes body = std::move(pending_.front());
  pending_.pop_front();
  return body;
}

TcpProviderServer::TcpProviderServer(provider::Provider& provider) : provider_(provider) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw_io("socket");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 ||
      ::listen(listen_fd_, 4) < 0) {
    int saved = errno;
    ::close(listen_fd_);
    errno = saved;
    throw_io("bind");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  thread_ = std::thread([this] { serve(); });
}

TcpProviderServer::~TcpProviderServer() {
  stop();
  ::close(listen_fd_);
}

void TcpProviderServer::stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
}

std::vector<provider::SessionTranscript> TcpProviderServer::transcripts() const {
  std::lock_guard lock(mu_);
  return transcripts_;
}

void TcpProviderServer::serve() {
  while (!stop_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 20) <= 0) continue;
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    handle(fd);
    ::close(fd);
  }
}

void TcpProviderServer::handle(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  provider::Session session = provider_.open_session();
  try {
    while (!stop_) {
      pollfd p{fd, POLLIN, 0};
      if (::poll(&p, 1, 20) <= 0) continue;
      std::optional<Bytes> body = read_frame_body(fd);
      if (!body) break;
      for (const Bytes& reply : session.on_frame(*body)) write_all(fd, protocol::frame(reply));
      if (session.closed()) break;
    }
  } catch (const Error&) {
    // The realm end observes the dropped connection.
  }
  std::lock_guard lock(mu_);
  transcripts_.push_back(session.transcript());
}

TcpLink::TcpLink(uint16_t port, int timeout_ms) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw_io("socket");
  timeval tv{timeout_ms / 1000, (timeout_ms % 1000) * 1000};
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    int saved = errno;
    ::close(fd_);
    errno = saved;
    throw_io("connect");
  }
}

TcpLink::~TcpLink() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpLink::send_frame(const Bytes& frame) { write_all(fd_, frame); }

Bytes TcpLink::receive_body() {
  std::optional<Bytes> body = read_frame_body(fd_);
  if (!body) throw Error(ErrorCode::kIo, "provider closed the connection");
  return *body;
}

}  // namespace realmsim::transport

#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <mutex>
#include <thread>
#include <vector>

#include "realmsim/protocol.hpp"
#include "realmsim/provider.hpp"

namespace realmsim::transport {

struct LinkRecord {
  bool outbound;  // realm to provider
  protocol::MessageType type;
  Bytes frame;
};

// Realm end of a provider connection. Subclasses move frames; this class
// keeps the realm-side log of everything sent and received.
class Link {
 public:
  virtual ~Link() = default;

  void send(const protocol::Message& message);
  // Throws Error(Io) when the peer has nothing to deliver.
  protocol::Message receive();

  const std::vector<LinkRecord>& log() const { return log_; }

 protected:
  virtual void send_frame(const Bytes& frame) = 0;
  virtual Bytes receive_body() = 0;

 private:
  std::vector<LinkRecord> log_;
};

// Runs the provider session synchronously in the caller's thread.
class InProcessLink : public Link {
 public:
  explicit InProcessLink(provider::Provider& provider) : session_(provider.open_session()) {}

  const provider::Session& session() const { return session_; }

 protected:
  void send_frame(const Bytes& frame) override;
  Bytes receive_body() override;

 private:
  provider::Session session_;
  std::deque<Bytes> pending_;
};

// Serves one provider on 127.0.0.1 from a background thread. Each accepted
// connection gets a fresh session; transcripts are kept for inspection.
class TcpProviderServer {
 public:
  explicit TcpProviderServer(provider::Provider& provider);
  ~TcpProviderServer();
  TcpProviderServer(const TcpProviderServer&) = delete;
  TcpProviderServer& operator=(const TcpProviderServer&) = delete;

  uint16_t port() const { return port_; }
  // Waits for the current connection to close, then stops accepting.
  void stop();
  std::vector<provider::SessionTranscript> transcripts() const;

 private:
  void serve();
  void handle(int fd);

  provider::Provider& provider_;
  int listen_fd_ = -1;
  uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  mutable std::mutex mu_;
  std::vector<provider::SessionTranscript> transcripts_;
  std::thread thread_;
};

class TcpLink : public Link {
 public:
  TcpLink(uint16_t port, int timeout_ms = 5000);
  ~TcpLink() override;
  TcpLink(const TcpLink&) = delete;
  TcpLink& operator=(const TcpLink&) = delete;

 protected:
  void send_frame(const Bytes& frame) override;
  Bytes receive_body() override;

 private:
  int fd_ = -1;
};

}  // namespace realmsim::transport

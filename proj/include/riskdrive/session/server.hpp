#pragma once

// Websocket transport for the session protocol. One io_context thread runs
// every connection and every session loop; ticks are scheduled on absolute
// deadlines start + n * tick_dt, and a late tick still advances simulation
// time by exactly tick_dt.

#include <memory>
#include <string>

#include "riskdrive/session/session.hpp"

namespace riskdrive::session {

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  // Pending outbound frames per connection before the oldest state frames
  // are dropped; the tick never waits for the network.
  std::size_t max_queued_frames = 64;
};

class Server {
 public:
  Server(ServerOptions options, SessionManager& manager);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Bound port, valid after construction.
  unsigned short port() const;
  /// Blocks until stop() is called.
  void run();
  /// Safe from any thread.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace riskdrive::session

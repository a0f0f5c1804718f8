#include "riskdrive/session/server.hpp"

#include <chrono>
#include <deque>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace riskdrive::session {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Connection;

// Ticks one session and sends its frames to the connection that started it.
class SessionLoop : public std::enable_shared_from_this<SessionLoop> {
 public:
  SessionLoop(asio::io_context& io, SessionManager& manager, std::shared_ptr<Session> session,
              std::weak_ptr<Connection> conn)
      : timer_(io), manager_(manager), session_(std::move(session)), conn_(std::move(conn)) {}

  void begin() {
    start_ = std::chrono::steady_clock::now();
    schedule();
  }
  void cancel() {
    stopped_ = true;
    timer_.cancel();
  }
  std::uint64_t id() const { return session_->id(); }

 private:
  void schedule();
  void on_tick();

  asio::steady_timer timer_;
  SessionManager& manager_;
  std::shared_ptr<Session> session_;
  std::weak_ptr<Connection> conn_;
  std::chrono::steady_clock::time_point start_;
  bool stopped_ = false;
};

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(asio::io_context& io, tcp::socket socket, SessionManager& manager,
             std::size_t max_queued)
      : io_(io), ws_(std::move(socket)), manager_(manager), max_queued_(max_queued) {}

  void begin() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->read();
    });
  }

  void send(const nlohmann::json& frame) {
    const bool state = frame.value("type", "") == "state";
    if (state && queue_.size() >= max_queued_) {
      // Latest frame wins: drop the oldest queued state frame.
      for (auto it = queue_.begin() + (writing_ ? 1 : 0); it != queue_.end(); ++it) {
        if (it->second) {
          queue_.erase(it);
          break;
        }
      }
    }
    queue_.emplace_back(frame.dump(), state);
    if (!writing_) write();
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->close_sessions();
        return;
      }
      const auto text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->on_message(text);
      self->read();
    });
  }

  void on_message(const std::string& text) {
    std::optional<std::uint64_t> started;
    const auto replies = handle_message(manager_, text, &started);
    for (const auto& r : replies) send(r);
    if (started) {
      auto loop = std::make_shared<SessionLoop>(io_, manager_, manager_.get(*started),
                                                weak_from_this());
      loops_.push_back(loop);
      loop->begin();
    }
    for (const auto& r : replies) {
      if (r.value("type", "") != "stopped") continue;
      const auto id = r.at("session").get<std::uint64_t>();
      std::erase_if(loops_, [&](const auto& l) {
        if (l->id() != id) return false;
        l->cancel();
        return true;
      });
    }
  }

  void write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front().first),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->queue_.pop_front();
                      if (ec) {
                        self->writing_ = false;
                        self->queue_.clear();
                        return;
                      }
                      if (self->queue_.empty()) {
                        self->writing_ = false;
                      } else {
                        self->write();
                      }
                    });
  }

  // A dropped connection ends its sessions and writes their exports.
  void close_sessions() {
    for (const auto& l : loops_) {
      l->cancel();
      try {
        manager_.stop(l->id());
      } catch (const std::exception&) {
      }
    }
    loops_.clear();
  }

  asio::io_context& io_;
  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  SessionManager& manager_;
  std::size_t max_queued_;
  std::deque<std::pair<std::string, bool>> queue_;  // (frame, is state)
  bool writing_ = false;
  std::vector<std::shared_ptr<SessionLoop>> loops_;
};

void SessionLoop::schedule() {
  const auto dt = std::chrono::duration<double>(session_->config().scenario.tick_dt);
  const auto deadline =
      start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                   dt * static_cast<double>(session_->ticks() + 1));
  timer_.expires_at(deadline);
  timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
    if (ec || self->stopped_) return;
    self->on_tick();
  });
}

void SessionLoop::on_tick() {
  try {
    manager_.get(session_->id());
  } catch (const std::out_of_range&) {
    return;  // stopped elsewhere
  }
  const auto report = session_->tick();
  const auto c = conn_.lock();
  if (!c) return;
  c->send(session_->state_message(report));
  schedule();
}

}  // namespace

struct Server::Impl {
  Impl(ServerOptions o, SessionManager& m)
      : options(std::move(o)), manager(m), acceptor(io) {
    const tcp::endpoint ep(asio::ip::make_address(options.address), options.port);
    acceptor.open(ep.protocol());
    acceptor.set_option(asio::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen();
  }

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Connection>(io, std::move(socket), manager, options.max_queued_frames)
          ->begin();
      accept();
    });
  }

  ServerOptions options;
  SessionManager& manager;
  asio::io_context io;
  tcp::acceptor acceptor;
};

Server::Server(ServerOptions options, SessionManager& manager)
    : impl_(std::make_unique<Impl>(std::move(options), manager)) {}

Server::~Server() = default;

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() {
  impl_->accept();
  impl_->io.run();
}

void Server::stop() {
  asio::post(impl_->io, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
    impl_->io.stop();
  });
}

}  // namespace riskdrive::session

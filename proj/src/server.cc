// Copyright 2026 The texgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <chrono>
#include <condition_variable>
#include <csignal>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "texgen/service.h"

namespace texgen::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

constexpr int kTicksPerBlock = 10;
constexpr std::size_t kMaxBodyBytes = 8 << 20;

std::string_view View(beast::string_view s) { return {s.data(), s.size()}; }

bool OffersSubprotocol(std::string_view header) {
  while (!header.empty()) {
    const auto comma = header.find(',');
    std::string_view item = header.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item == kStreamSubprotocol) return true;
    if (comma == std::string_view::npos) break;
    header.remove_prefix(comma + 1);
  }
  return false;
}

class StreamSession : public std::enable_shared_from_this<StreamSession> {
 public:
  StreamSession(tcp::socket&& socket, Service& service)
      : ws_(std::move(socket)),
        timer_(ws_.get_executor()),
        service_(service),
        cfg_(service.render_config()),
        queue_(static_cast<std::size_t>(kBackpressureSeconds * cfg_.signal_rate)) {}

  void Run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.set_option(websocket::stream_base::decorator([](websocket::response_type& res) {
      res.set(http::field::sec_websocket_protocol, kStreamSubprotocol);
    }));
    ws_.async_accept(req, beast::bind_front_handler(&StreamSession::OnAccept, shared_from_this()));
  }

 private:
  void OnAccept(beast::error_code ec) {
    if (ec) return;
    DoRead();
  }

  void DoRead() {
    ws_.async_read(buffer_, beast::bind_front_handler(&StreamSession::OnRead, shared_from_this()));
  }

  void OnRead(beast::error_code ec, std::size_t) {
    if (ec) {
      Finish();
      return;
    }
    if (closing_) return;
    if (ws_.got_binary()) {
      Close("binary_not_allowed");
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    try {
      std::visit([this](auto&& m) { Handle(m); }, ParseClientMessage(text));
    } catch (const ProtocolError& e) {
      Close(e.code());
      return;
    } catch (const Error& e) {
      Close(ErrorCodeName(e.code()));
      return;
    }
    if (!closing_) DoRead();
  }

  void Handle(const StartMessage& start) {
    if (engine_) throw ProtocolError("already_started", "session already started");
    engine_.emplace(service_.ResolveStart(start), cfg_, start.seed);
    forces_ = start.forces;
    if (start.duration_s) limit_ticks_ = std::lround(*start.duration_s * cfg_.servo_rate);
    block_.assign(static_cast<std::size_t>(kTicksPerBlock * engine_->samples_per_tick()), 0.0);
  }

  void Handle(const ClientState& state) {
    if (!engine_) throw ProtocolError("not_started", "state received before start");
    const bool first = !clock_running_;
    state_ = state;
    if (state.tap) pending_tap_ = state.tap;
    state_.tap.reset();
    if (first && !finished_) {
      clock_running_ = true;
      clock_start_ = std::chrono::steady_clock::now();
      ScheduleTick();
    }
  }

  void Handle(const StopMessage&) {
    Close("");
  }

  std::chrono::steady_clock::time_point BlockDeadline(long block) const {
    const double s = static_cast<double>(block) * kTicksPerBlock / cfg_.servo_rate;
    return clock_start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(s));
  }

  void ScheduleTick() {
    timer_.expires_at(BlockDeadline(blocks_ + 1));
    timer_.async_wait(beast::bind_front_handler(&StreamSession::OnTick, shared_from_this()));
  }

  void OnTick(beast::error_code ec) {
    if (ec || closing_) return;
    const auto now = std::chrono::steady_clock::now();
    while (!finished_ && BlockDeadline(blocks_ + 1) <= now) RenderBlock();
    DoWrite();
    if (!finished_) ScheduleTick();
  }

  void RenderBlock() {
    const int spt = engine_->samples_per_tick();
    int ticks = kTicksPerBlock;
    if (limit_ticks_ >= 0) ticks = static_cast<int>(std::min<long>(ticks, limit_ticks_ - ticks_done_));
    json forces;
    if (forces_) forces = {{"type", "forces"}, {"seq", seq_}, {"f_n", json::array()}, {"f_t", json::array()},
                           {"f_vib", json::array()}, {"f_tap", json::array()}, {"total", json::array()}};
    for (int t = 0; t < ticks; ++t) {
      ClientState s = state_;
      if (pending_tap_) {
        s.tap = pending_tap_;
        pending_tap_.reset();
      }
      render::ForceFrame frame;
      engine_->Tick(s, std::span<double>(block_.data() + t * spt, spt), frame);
      if (forces_) {
        forces["f_n"].push_back(frame.f_n);
        forces["f_t"].push_back(frame.f_t);
        forces["f_vib"].push_back(frame.f_vib);
        forces["f_tap"].push_back(frame.f_tap);
        forces["total"].push_back(frame.total);
      }
    }
    ticks_done_ += ticks;
    ++blocks_;
    const std::size_t n = static_cast<std::size_t>(ticks * spt);
    if (n > 0) {
      OutboundQueue::Item item;
      item.seq = seq_++;
      item.samples = n;
      item.binary = EncodeFrame(item.seq, std::span<const double>(block_.data(), n));
      if (forces_) item.text = forces.dump();
      samples_sent_ += n;
      queue_.Push(std::move(item));
    }
    if (limit_ticks_ >= 0 && ticks_done_ >= limit_ticks_) {
      finished_ = true;
      OutboundQueue::Item end;
      end.text = json{{"type", "end"}, {"samples", samples_sent_}, {"frames", seq_}}.dump();
      queue_.Push(std::move(end));
    }
  }

  void DoWrite() {
    if (writing_ || closing_) return;
    if (pending_text_) {
      out_ = std::move(*pending_text_);
      pending_text_.reset();
      Write(true);
      return;
    }
    if (auto gap = queue_.TakeGap()) {
      out_ = GapJson(*gap).dump();
      Write(true);
      return;
    }
    auto item = queue_.Pop();
    if (!item) return;
    if (!item->text.empty()) pending_text_ = std::move(item->text);
    if (item->binary.empty()) {
      DoWrite();
      return;
    }
    out_ = std::move(item->binary);
    Write(false);
  }

  void Write(bool text) {
    writing_ = true;
    ws_.text(text);
    ws_.binary(!text);
    ws_.async_write(net::buffer(out_), beast::bind_front_handler(&StreamSession::OnWrite, shared_from_this()));
  }

  void OnWrite(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) {
      Finish();
      return;
    }
    DoWrite();
  }

  void Close(const std::string& code) {
    if (closing_) return;
    closing_ = true;
    timer_.cancel();
    websocket::close_reason reason(code.empty() ? websocket::close_code::normal
                                                : websocket::close_code::policy_error);
    reason.reason = code;
    ws_.async_close(reason, [self = shared_from_this()](beast::error_code) {});
  }

  void Finish() {
    closing_ = true;
    timer_.cancel();
  }

  websocket::stream<beast::tcp_stream> ws_;
  net::steady_timer timer_;
  Service& service_;
  render::RenderConfig cfg_;
  beast::flat_buffer buffer_;
  std::optional<StreamEngine> engine_;
  ClientState state_;
  std::optional<double> pending_tap_;
  bool forces_ = true;
  bool clock_running_ = false;
  bool finished_ = false;
  bool closing_ = false;
  bool writing_ = false;
  std::chrono::steady_clock::time_point clock_start_;
  long blocks_ = 0;
  long ticks_done_ = 0;
  long limit_ticks_ = -1;
  std::uint32_t seq_ = 0;
  std::size_t samples_sent_ = 0;
  std::vector<double> block_;
  OutboundQueue queue_;
  std::optional<std::string> pending_text_;
  std::string out_;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Service& service) : stream_(std::move(socket)), service_(service) {}

  void Run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::DoRead, shared_from_this()));
  }

 private:
  void DoRead() {
    parser_.emplace();
    parser_->body_limit(kMaxBodyBytes);
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, *parser_,
                     beast::bind_front_handler(&HttpSession::OnRead, shared_from_this()));
  }

  void OnRead(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    if (ec) return;
    auto req = parser_->release();
    if (websocket::is_upgrade(req)) {
      const std::string_view target = View(req.target());
      if (target.substr(0, target.find('?')) != "/stream") {
        Send(req, {404, "application/json", ErrorBody("NotFound", "no stream at this path").dump()}, false);
        return;
      }
      if (!OffersSubprotocol(View(req[http::field::sec_websocket_protocol]))) {
        Send(req, {400, "application/json",
                   ErrorBody("SubprotocolRequired",
                             std::string("request the ") + kStreamSubprotocol + " subprotocol").dump()},
             false);
        return;
      }
      stream_.expires_never();
      std::make_shared<StreamSession>(stream_.release_socket(), service_)->Run(std::move(req));
      return;
    }
    const HttpResponse r = service_.Handle(View(req.method_string()), View(req.target()), req.body());
    Send(req, r, req.keep_alive());
  }

  void Send(const http::request<http::string_body>& req, const HttpResponse& r, bool keep_alive) {
    auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(r.status),
                                                                   req.version());
    res->set(http::field::server, "texgen");
    res->set(http::field::content_type, r.content_type);
    res->set(http::field::access_control_allow_origin, "*");
    res->keep_alive(keep_alive);
    res->body() = r.body;
    res->prepare_payload();
    http::async_write(stream_, *res,
                      [self = shared_from_this(), res, keep_alive](beast::error_code ec, std::size_t) {
                        if (ec) return;
                        if (!keep_alive) {
                          beast::error_code ignored;
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                          return;
                        }
                        self->DoRead();
                      });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  std::optional<http::request_parser<http::string_body>> parser_;
  Service& service_;
};

}  // namespace

struct Server::Impl {
  Impl(Service& s, std::string h, std::uint16_t p, int t)
      : service(s), host(std::move(h)), port(p), threads(t), acceptor(ioc), signals(ioc) {}

  void Accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec == net::error::operation_aborted) return;
      } else {
        std::make_shared<HttpSession>(std::move(socket), service)->Run();
      }
      Accept();
    });
  }

  Service& service;
  std::string host;
  std::uint16_t port;
  int threads;
  net::io_context ioc;
  tcp::acceptor acceptor;
  net::signal_set signals;
  std::vector<std::thread> pool;
  std::mutex join_mu;
};

Server::Server(Service& service, std::string host, std::uint16_t port, int threads)
    : impl_(std::make_unique<Impl>(service, std::move(host), port, threads)) {}

Server::~Server() {
  Stop();
  Wait();
}

void Server::Start() {
  auto& im = *impl_;
  beast::error_code ec;
  const auto address = net::ip::make_address(im.host, ec);
  if (ec) throw Error(ErrorCode::kInvalidArgument, "bad listen address: " + im.host);
  const tcp::endpoint ep(address, im.port);
  im.acceptor.open(ep.protocol(), ec);
  if (!ec) im.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) im.acceptor.bind(ep, ec);
  if (!ec) im.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot listen on " + im.host + ":" + std::to_string(im.port) + ": " + ec.message());
  im.Accept();
  im.signals.add(SIGINT);
  im.signals.add(SIGTERM);
  im.signals.async_wait([this](beast::error_code ec, int) {
    if (!ec) impl_->ioc.stop();
  });
  for (int i = 0; i < std::max(1, im.threads); ++i) im.pool.emplace_back([&im] { im.ioc.run(); });
}

void Server::Stop() { impl_->ioc.stop(); }

void Server::Wait() {
  std::lock_guard<std::mutex> lock(impl_->join_mu);
  for (auto& t : impl_->pool) {
    if (t.joinable()) t.join();
  }
}

std::uint16_t Server::port() const { return impl_->acceptor.local_endpoint().port(); }

}  // namespace texgen::service

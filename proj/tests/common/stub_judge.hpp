#pragma once

// Local HTTP judge stub. Compile with CPPHTTPLIB_OPENSSL_SUPPORT like the
// library so both sides see the same httplib types.

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <mutex>
#include <string>
#include <thread>

namespace adlab::testing {

class StubJudge {
 public:
  // Every POST waits delay and then answers with status and body.
  StubJudge(int status, std::string body, std::chrono::milliseconds delay = std::chrono::milliseconds(0))
      : status_(status), body_(std::move(body)), delay_(delay) {
    server_.Post(".*", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      {
        std::lock_guard<std::mutex> lock(mu_);
        last_request_ = req.body;
        last_auth_ = req.get_header_value("Authorization");
      }
      if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
      res.status = status_;
      res.set_content(body_, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubJudge() {
    server_.stop();
    thread_.join();
  }
  StubJudge(const StubJudge&) = delete;
  StubJudge& operator=(const StubJudge&) = delete;

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/score"; }
  int requests() const { return requests_.load(); }
  std::string last_request() const {
    std::lock_guard<std::mutex> lock(mu_);
    return last_request_;
  }
  std::string last_auth() const {
    std::lock_guard<std::mutex> lock(mu_);
    return last_auth_;
  }

 private:
  httplib::Server server_;
  int status_;
  std::string body_;
  std::chrono::milliseconds delay_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> requests_{0};
  mutable std::mutex mu_;
  std::string last_request_;
  std::string last_auth_;
};

}  // namespace adlab::testing

#pragma once

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include <chrono>
#include <mutex>
#include <string>

#include "genselect/chat_backend.hpp"

namespace genselect {

// cpp-httplib transport. `base_url` is scheme://host[:port][/prefix]; the
// prefix is prepended to every request path.
class HttpLibTransport final : public Transport {
 public:
  explicit HttpLibTransport(const std::string& base_url,
                            std::chrono::seconds timeout = std::chrono::seconds(1800)) {
    const auto scheme_end = base_url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = base_url.find('/', host_start);
    origin_ = base_url.substr(0, path_start);
    if (path_start != std::string::npos) {
      prefix_ = base_url.substr(path_start);
      while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
    timeout_ = timeout;
  }

  HttpResponse post(const std::string& path, const HttpHeaders& headers,
                    const std::string& body) override {
    // httplib::Client is not safe for concurrent use; one per call.
    httplib::Client client(origin_);
    client.set_connection_timeout(std::chrono::seconds(30));
    client.set_read_timeout(timeout_);
    client.set_write_timeout(std::chrono::seconds(60));
    httplib::Headers h;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
      if (k == "Content-Type") {
        content_type = v;
      } else {
        h.emplace(k, v);
      }
    }
    auto res = client.Post(prefix_ + path, h, body, content_type);
    HttpResponse out;
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }

 private:
  std::string origin_;
  std::string prefix_;
  std::chrono::seconds timeout_;
};

}  // namespace genselect

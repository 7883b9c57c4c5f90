#include <httplib.h>

#include <thread>

#include "cir/caption.hpp"
#include "cir/error.hpp"
#include "cir/jsonl.hpp"

namespace cir {

HttpCaptionProvider::HttpCaptionProvider(std::string base_url, RetryPolicy retry, std::chrono::seconds timeout)
    : retry_(retry), timeout_(timeout) {
  if (base_url.empty()) throw UsageError("caption provider URL is empty");
  // Split "http://host:port/prefix" into the client target and a path prefix.
  const auto scheme_end = base_url.find("://");
  const auto host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_begin = base_url.find('/', host_begin);
  if (path_begin == std::string::npos) {
    scheme_host_port_ = base_url;
  } else {
    scheme_host_port_ = base_url.substr(0, path_begin);
    path_prefix_ = base_url.substr(path_begin);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }
  if (retry_.attempts < 1) throw UsageError("retry attempts must be >= 1");
}

std::string HttpCaptionProvider::caption(const CaptionRequest& request) {
  const std::string body = json{{"image_ref", request.image_ref}, {"prompt", request.prompt}}.dump();
  std::string last_error;
  auto backoff = retry_.initial_backoff;
  for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    auto res = client.Post(path_prefix_ + "/caption", body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
    } else {
      json reply;
      try {
        reply = json::parse(res->body);
      } catch (const json::exception& e) {
        throw ProviderError("malformed caption response for image \"" + request.image_id + "\": " + e.what());
      }
      if (!reply.is_object() || !reply.contains("caption") || !reply["caption"].is_string()) {
        throw ProviderError("caption response for image \"" + request.image_id + "\" lacks a string \"caption\"");
      }
      if (reply.contains("image_id") && reply["image_id"] != request.image_id) {
        throw ProviderError("caption response id mismatch: asked for \"" + request.image_id + "\", got " +
                            reply["image_id"].dump());
      }
      return reply["caption"].get<std::string>();
    }
    if (attempt < retry_.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw ProviderError("captioning image \"" + request.image_id + "\" failed after " +
                      std::to_string(retry_.attempts) + " attempts: " + last_error);
}

}  // namespace cir

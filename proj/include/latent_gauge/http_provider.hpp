#pragma once

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "latent_gauge/harness.hpp"

namespace latent_gauge {

inline constexpr const char* kApiKeyEnv = "LATENT_GAUGE_API_KEY";

// POSTs {"model", "prompt", "temperature"} as JSON to a configurable endpoint
// (http://host:port/path). The API key, when set in LATENT_GAUGE_API_KEY, is
// sent as a bearer token. If the reply is a JSON object with a string field
// named text, content, output, completion or response, that string is the
// body; otherwise the raw reply is.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(const std::string& endpoint, int timeout_seconds = 60) : timeout_(timeout_seconds) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) throw ValidationError("endpoint must include a scheme: " + endpoint);
    const auto path_start = endpoint.find('/', scheme_end + 3);
    base_ = endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
    if (const char* key = std::getenv(kApiKeyEnv)) api_key_ = key;
  }

  std::string complete(const ProviderRequest& request) override {
    httplib::Client client(base_);
    client.set_read_timeout(timeout_, 0);
    client.set_connection_timeout(timeout_, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    const nlohmann::json payload{{"model", request.model}, {"prompt", request.prompt}, {"temperature", request.temperature}};
    auto res = client.Post(path_, headers, payload.dump(), "application/json");
    if (!res) throw ProviderError("request to " + base_ + path_ + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw ProviderError("HTTP " + std::to_string(res->status) + " from " + base_ + path_);
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) {
      for (const char* field : {"text", "content", "output", "completion", "response"}) {
        if (parsed.contains(field) && parsed[field].is_string()) return parsed[field].get<std::string>();
      }
    }
    return res->body;
  }

 private:
  std::string base_;
  std::string path_;
  std::string api_key_;
  int timeout_;
};

}  // namespace latent_gauge

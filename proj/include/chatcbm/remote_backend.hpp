#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "chatcbm/classifier.hpp"

namespace chatcbm {

struct RemoteConfig {
    // e.g. "http://127.0.0.1:8000/v1"; requests go to {base_url}/chat/completions.
    std::string base_url;
    std::string model;
    // Bearer token; when unset, read from CHATCBM_API_KEY.
    std::optional<std::string> api_key;
    // Retries after the first attempt, waiting backoff[i] before retry i.
    int max_retries = 3;
    std::vector<std::chrono::milliseconds> backoff{std::chrono::seconds(1), std::chrono::seconds(2),
                                                   std::chrono::seconds(4)};
    std::chrono::seconds timeout{120};
    std::size_t max_in_flight = 4;
    bool send_top_k = true;
};

// Chat-completions client. Retries transport failures, 408, 429 and 5xx;
// other 4xx responses fail immediately. A 4xx that rejects the top_k field
// disables top_k for the rest of the backend's life, with a warning.
class RemoteBackend : public ChatBackend {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;
    using Warn = std::function<void(const std::string&)>;

    explicit RemoteBackend(RemoteConfig config, Sleeper sleeper = {}, Warn warn = {});

    std::string complete(const ChatRequest& request) override;
    std::string name() const override { return "remote:" + config_.model; }

    std::string request_body(const ChatRequest& request) const;
    static std::string extract_content(const std::string& response_body);

    bool top_k_enabled() const;

private:
    struct Endpoint {
        std::string scheme_host_port;
        std::string path;
    };
    static Endpoint parse_base_url(const std::string& base_url);

    RemoteConfig config_;
    Endpoint endpoint_;
    Sleeper sleeper_;
    Warn warn_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::size_t in_flight_ = 0;
    bool top_k_enabled_;
};

}  // namespace chatcbm

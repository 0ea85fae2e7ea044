#include "chatcbm/remote_backend.hpp"

#include <cstdlib>
#include <iostream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "chatcbm/error.hpp"
#include "chatcbm/text.hpp"

namespace chatcbm {
namespace {

using nlohmann::json;

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

bool rejects_top_k(int status, const std::string& body) {
    return (status == 400 || status == 422) && text::contains(text::to_lower(body), "top_k");
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteConfig config, Sleeper sleeper, Warn warn)
    : config_(std::move(config)),
      endpoint_(parse_base_url(config_.base_url)),
      sleeper_(std::move(sleeper)),
      warn_(std::move(warn)),
      top_k_enabled_(config_.send_top_k) {
    if (config_.model.empty()) throw ConfigError("remote backend needs a model name");
    if (config_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (config_.max_in_flight == 0) throw ConfigError("max_in_flight must be >= 1");
    if (!config_.api_key) {
        if (const char* key = std::getenv("CHATCBM_API_KEY")) config_.api_key = key;
    }
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    if (!warn_) warn_ = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
}

RemoteBackend::Endpoint RemoteBackend::parse_base_url(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base URL must include a scheme: '" + base_url + "'");
    const auto scheme = base_url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ConfigError("unsupported URL scheme '" + scheme + "'");
    const auto path_start = base_url.find('/', scheme_end + 3);
    Endpoint ep;
    ep.scheme_host_port = base_url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    ep.path = prefix + "/chat/completions";
    return ep;
}

bool RemoteBackend::top_k_enabled() const {
    std::lock_guard lock(mu_);
    return top_k_enabled_;
}

std::string RemoteBackend::request_body(const ChatRequest& request) const {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    }
    json body{{"model", config_.model}, {"messages", messages}, {"max_tokens", request.generation.max_length}};
    if (request.generation.do_sample && top_k_enabled()) body["top_k"] = request.generation.top_k;
    if (request.generation.temperature) body["temperature"] = *request.generation.temperature;
    return body.dump();
}

std::string RemoteBackend::extract_content(const std::string& response_body) {
    try {
        const auto doc = json::parse(response_body);
        const auto& content = doc.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw BackendError("response content is not a string");
        return content.get<std::string>();
    } catch (const json::exception& e) {
        throw BackendError(std::string("malformed chat completion response: ") + e.what());
    }
}

std::string RemoteBackend::complete(const ChatRequest& request) {
    {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
        ++in_flight_;
    }
    struct Release {
        RemoteBackend* self;
        ~Release() {
            {
                std::lock_guard lock(self->mu_);
                --self->in_flight_;
            }
            self->cv_.notify_one();
        }
    } release{this};

    httplib::Client client(endpoint_.scheme_host_port);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (config_.api_key && !config_.api_key->empty()) {
        headers.emplace("Authorization", "Bearer " + *config_.api_key);
    }

    const int max_attempts = 1 + config_.max_retries;
    std::string last_error;
    int last_status = 0;
    int attempt = 0;
    int retries_used = 0;
    while (attempt < max_attempts) {
        ++attempt;
        auto res = client.Post(endpoint_.path, headers, request_body(request), "application/json");
        bool retry = false;
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            last_status = 0;
            retry = true;
        } else if (res->status >= 200 && res->status < 300) {
            return extract_content(res->body);
        } else {
            last_status = res->status;
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
            if (rejects_top_k(res->status, res->body) && top_k_enabled()) {
                {
                    std::lock_guard lock(mu_);
                    top_k_enabled_ = false;
                }
                warn_("endpoint rejected top_k; continuing without it");
                --attempt;  // resend immediately; not a transport retry
                continue;
            }
            retry = retryable_status(res->status);
        }
        if (!retry) throw BackendError(last_error, attempt, last_status);
        if (attempt < max_attempts) {
            const auto& b = config_.backoff;
            const auto delay = b.empty() ? std::chrono::milliseconds(0)
                                         : b[std::min<std::size_t>(static_cast<std::size_t>(retries_used), b.size() - 1)];
            ++retries_used;
            sleeper_(delay);
        }
    }
    throw BackendError(last_error + " (after " + std::to_string(attempt) + " attempts)", attempt, last_status);
}

}  // namespace chatcbm

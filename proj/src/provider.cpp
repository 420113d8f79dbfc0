#include "affectdyn/provider.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "affectdyn/errors.hpp"

namespace affectdyn {

using nlohmann::json;

void validate_provider_config(const ProviderConfig& cfg) {
    if (cfg.model_id.empty()) throw DataError("provider config: model_id must be non-empty");
    const std::string where = "provider \"" + cfg.model_id + "\": ";
    if (cfg.endpoint.empty()) throw DataError(where + "endpoint must be non-empty");
    if (cfg.model_name.empty()) throw DataError(where + "model_name must be non-empty");
    if (cfg.max_retries < 0) throw DataError(where + "max_retries must be >= 0");
    if (cfg.requests_per_minute < 1) throw DataError(where + "requests_per_minute must be >= 1");
    if (cfg.timeout_seconds <= 0.0) throw DataError(where + "timeout_seconds must be positive");
    if (cfg.max_in_flight < 1) throw DataError(where + "max_in_flight must be >= 1");
    if (cfg.backoff_initial_ms < 0.0) throw DataError(where + "backoff_initial_ms must be >= 0");
}

std::vector<ProviderConfig> load_provider_configs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open provider config: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("provider config " + path + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("providers") || !doc["providers"].is_array())
        throw DataError("provider config " + path + ": expected {\"providers\": [...]}");

    std::vector<ProviderConfig> out;
    for (const auto& entry : doc["providers"]) {
        ProviderConfig cfg;
        cfg.model_id = entry.value("model_id", "");
        cfg.endpoint = entry.value("endpoint", "");
        cfg.model_name = entry.value("model_name", "");
        cfg.credential_env = entry.value("credential_env", "");
        cfg.max_retries = entry.value("max_retries", cfg.max_retries);
        cfg.requests_per_minute = entry.value("requests_per_minute", cfg.requests_per_minute);
        cfg.timeout_seconds = entry.value("timeout_seconds", cfg.timeout_seconds);
        cfg.max_in_flight = entry.value("max_in_flight", cfg.max_in_flight);
        cfg.backoff_initial_ms = entry.value("backoff_initial_ms", cfg.backoff_initial_ms);
        validate_provider_config(cfg);
        for (const auto& other : out) {
            if (other.model_id == cfg.model_id)
                throw DataError("provider config " + path + ": duplicate model_id \"" +
                                cfg.model_id + "\"");
        }
        out.push_back(std::move(cfg));
    }
    if (out.empty()) throw DataError("provider config " + path + ": provider list is empty");
    return out;
}

std::string resolve_credential(const ProviderConfig& provider) {
    if (provider.credential_env.empty()) return "";
    const char* value = std::getenv(provider.credential_env.c_str());
    if (value == nullptr || *value == '\0')
        throw ProviderError("provider \"" + provider.model_id +
                            "\": credential environment variable " + provider.credential_env +
                            " is not set");
    return value;
}

namespace {

struct SplitUrl {
    std::string base; // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos)
        throw ProviderError("endpoint is not a URL: " + endpoint);
    const auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

} // namespace

ChatResult HttpChatTransport::complete(const ProviderConfig& provider,
                                       const ChatRequest& request) {
    const std::string credential = resolve_credential(provider);
    const SplitUrl url = split_url(provider.endpoint);

    httplib::Client client(url.base);
    const auto timeout =
        std::chrono::milliseconds(static_cast<long long>(provider.timeout_seconds * 1000.0));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    json body = {
        {"model", provider.model_name},
        {"messages",
         {{{"role", "system"}, {"content", request.system}},
          {{"role", "user"}, {"content", request.user}}}},
        {"temperature", 0},
    };

    httplib::Headers headers;
    if (!credential.empty()) headers.emplace("Authorization", "Bearer " + credential);

    auto res = client.Post(url.path, headers, body.dump(), "application/json");
    ChatResult out;
    if (!res) {
        out.error = "transport error: " + httplib::to_string(res.error());
        return out;
    }
    out.status = res->status;
    if (res->status != 200) {
        out.error = "HTTP status " + std::to_string(res->status);
        return out;
    }
    const auto doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("choices") || !doc["choices"].is_array() ||
        doc["choices"].empty()) {
        out.error = "malformed completion envelope";
        return out;
    }
    const auto& first = doc["choices"][0];
    if (!first.contains("message") || !first["message"].contains("content") ||
        !first["message"]["content"].is_string()) {
        out.error = "completion has no message content";
        return out;
    }
    out.ok = true;
    out.content = first["message"]["content"].get<std::string>();
    return out;
}

RateLimiter::RateLimiter(int per_minute, Clock clock, Sleep sleep)
    : per_minute_(per_minute),
      clock_(clock ? std::move(clock) : [] { return std::chrono::steady_clock::now(); }),
      sleep_(sleep ? std::move(sleep)
                   : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
    if (per_minute_ < 1) throw std::invalid_argument("RateLimiter: per_minute must be >= 1");
}

void RateLimiter::acquire() {
    using namespace std::chrono;
    for (;;) {
        milliseconds wait{0};
        {
            std::lock_guard lock(mu_);
            const auto now = clock_();
            while (!stamps_.empty() && now - stamps_.front() >= minutes(1)) stamps_.pop_front();
            if (static_cast<int>(stamps_.size()) < per_minute_) {
                stamps_.push_back(now);
                return;
            }
            wait = duration_cast<milliseconds>(stamps_.front() + minutes(1) - now) +
                   milliseconds(1);
        }
        sleep_(wait);
    }
}

Annotator::Annotator(ChatTransport& transport, RateLimiter& limiter, RateLimiter::Sleep sleep)
    : transport_(transport),
      limiter_(limiter),
      sleep_(sleep ? std::move(sleep)
                   : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

AnnotationOutcome Annotator::annotate(const Turn& turn, const ProviderConfig& provider,
                                      const Prompt& prompt, int k_max) {
    AnnotationOutcome out;
    std::string last_cause;
    for (int attempt = 0; attempt <= provider.max_retries; ++attempt) {
        if (attempt > 0) {
            const double delay = provider.backoff_initial_ms * std::pow(2.0, attempt - 1);
            sleep_(std::chrono::milliseconds(static_cast<long long>(delay)));
        }
        limiter_.acquire();
        ++out.attempts;
        const ChatResult result =
            transport_.complete(provider, ChatRequest{prompt.system, prompt.user});
        if (!result.ok) {
            last_cause = result.error;
            continue; // transport errors retry
        }
        try {
            ParsedResponse parsed = parse_response(result.content, k_max);
            out.ok = true;
            out.truncated = parsed.truncated;
            out.annotation.model_id = provider.model_id;
            out.annotation.turn_id = turn.turn_id;
            out.annotation.emotions = std::move(parsed.emotions);
            return out;
        } catch (const RangeError& e) {
            out.cause = e.what(); // invalid scores are final, not retried
            return out;
        } catch (const DuplicateLabelError& e) {
            out.cause = e.what();
            return out;
        } catch (const ParseError& e) {
            last_cause = e.what(); // unparseable output retries
        }
    }
    out.cause = "retries exhausted: " + last_cause;
    return out;
}

} // namespace affectdyn

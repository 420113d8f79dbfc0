#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "affectdyn/annotation.hpp"

namespace affectdyn {

/// Connection settings for one annotation backend. Credentials never live
/// in the config itself; credential_env names the environment variable
/// that holds the API key.
struct ProviderConfig {
    std::string model_id;
    std::string endpoint;
    std::string model_name;
    std::string credential_env;
    int max_retries = 2;
    int requests_per_minute = 60;
    double timeout_seconds = 30.0;
    int max_in_flight = 4;
    double backoff_initial_ms = 500.0;
};

/// Parses {"providers": [...]} and validates every entry.
std::vector<ProviderConfig> load_provider_configs(const std::string& path);
void validate_provider_config(const ProviderConfig& cfg);

struct ChatRequest {
    std::string system;
    std::string user;
};

struct ChatResult {
    bool ok = false;
    int status = 0;
    std::string content; // assistant text when ok
    std::string error;   // transport-level description when !ok
};

/// Abstract completion transport; the HTTP implementation speaks a JSON
/// chat-completion body. Tests substitute scripted transports.
class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual ChatResult complete(const ProviderConfig& provider, const ChatRequest& request) = 0;
};

class HttpChatTransport : public ChatTransport {
public:
    ChatResult complete(const ProviderConfig& provider, const ChatRequest& request) override;
};

/// Sliding-window limiter: at most `per_minute` acquisitions in any
/// trailing 60 s window. Clock and sleep are injectable so tests can run
/// on virtual time.
class RateLimiter {
public:
    using TimePoint = std::chrono::steady_clock::time_point;
    using Clock = std::function<TimePoint()>;
    using Sleep = std::function<void(std::chrono::milliseconds)>;

    explicit RateLimiter(int per_minute, Clock clock = nullptr, Sleep sleep = nullptr);
    void acquire();

private:
    int per_minute_;
    Clock clock_;
    Sleep sleep_;
    std::mutex mu_;
    std::deque<TimePoint> stamps_;
};

/// Terminal outcome of annotating one (turn, model) pair.
struct AnnotationOutcome {
    bool ok = false;
    ModelAnnotation annotation; // valid when ok
    bool truncated = false;
    std::string cause;    // failure description when !ok
    int attempts = 0;     // transport calls actually issued
};

/// Issues one provider request with retry. Transport failures and
/// ParseError retry with exponential backoff up to max_retries; range and
/// duplicate-label violations fail immediately. Exhausted retries yield a
/// marked failure, never fabricated scores.
class Annotator {
public:
    Annotator(ChatTransport& transport, RateLimiter& limiter,
              RateLimiter::Sleep sleep = nullptr);

    AnnotationOutcome annotate(const Turn& turn, const ProviderConfig& provider,
                               const Prompt& prompt, int k_max = kDefaultKMax);

private:
    ChatTransport& transport_;
    RateLimiter& limiter_;
    RateLimiter::Sleep sleep_;
};

/// Resolves the provider's credential or throws ProviderError.
std::string resolve_credential(const ProviderConfig& provider);

} // namespace affectdyn

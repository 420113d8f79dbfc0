#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>
#include <unistd.h>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "affectdyn/cache.hpp"
#include "affectdyn/errors.hpp"
#include "affectdyn/orchestrator.hpp"
#include "affectdyn/provider.hpp"

using namespace affectdyn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const auto dir = fs::temp_directory_path() / ("affectdyn-test-" + tag + "-" +
                                                  std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Turn turn(const std::string& id) {
    Turn t;
    t.turn_id = id;
    t.participant_id = "p";
    t.role = Role::student;
    t.text = "text of " + id;
    return t;
}

/// Transport that replays a fixed script of responses.
class ScriptedTransport : public ChatTransport {
public:
    explicit ScriptedTransport(std::vector<ChatResult> script) : script_(std::move(script)) {}

    ChatResult complete(const ProviderConfig&, const ChatRequest&) override {
        const size_t i = cursor_++;
        REQUIRE(i < script_.size());
        return script_[i];
    }

    size_t calls() const { return cursor_; }

private:
    std::vector<ChatResult> script_;
    std::atomic<size_t> cursor_{0};
};

ChatResult ok_response(const std::string& content) {
    ChatResult r;
    r.ok = true;
    r.status = 200;
    r.content = content;
    return r;
}

ChatResult transport_failure(const std::string& why) {
    ChatResult r;
    r.error = why;
    return r;
}

const char* kValidContent =
    R"({"emotions": [{"label": "calm", "valence": 6, "arousal": 2, "learning": 5}]})";

ProviderConfig test_provider() {
    ProviderConfig cfg;
    cfg.model_id = "test-model";
    cfg.endpoint = "http://127.0.0.1:1/unused";
    cfg.model_name = "test-model-v1";
    cfg.max_retries = 2;
    return cfg;
}

AnnotationRecord ok_record(const std::string& turn_id, const std::string& model = "m1") {
    AnnotationRecord rec;
    rec.turn_id = turn_id;
    rec.model_id = model;
    rec.model_name = model + "-v1";
    rec.prompt_hash = "feedbeef";
    rec.prompt_version = "v1";
    rec.status = "ok";
    rec.emotions = {RankedEmotion{"calm", 6, 2, 5, 1}};
    return rec;
}

} // namespace

TEST_CASE("provider config files load with defaults and strict validation") {
    const auto dir = fresh_dir("providers");
    const auto path = dir / "providers.json";
    {
        std::ofstream out(path);
        out << R"({"providers": [
            {"model_id": "a", "endpoint": "http://x/v1", "model_name": "a-1",
             "credential_env": "A_KEY", "requests_per_minute": 10},
            {"model_id": "b", "endpoint": "http://y/v1", "model_name": "b-2"}
        ]})";
    }
    const auto cfgs = load_provider_configs(path.string());
    REQUIRE(cfgs.size() == 2);
    CHECK(cfgs[0].requests_per_minute == 10);
    CHECK(cfgs[1].requests_per_minute == 60); // default
    CHECK(cfgs[1].max_retries == 2);
    CHECK(cfgs[1].credential_env.empty());

    {
        std::ofstream out(path);
        out << R"({"providers": [
            {"model_id": "a", "endpoint": "http://x", "model_name": "a"},
            {"model_id": "a", "endpoint": "http://y", "model_name": "b"}
        ]})";
    }
    CHECK_THROWS_AS((void)load_provider_configs(path.string()), DataError);

    {
        std::ofstream out(path);
        out << R"({"providers": [{"model_id": "", "endpoint": "e", "model_name": "m"}]})";
    }
    CHECK_THROWS_AS((void)load_provider_configs(path.string()), DataError);
    CHECK_THROWS_AS((void)load_provider_configs((dir / "missing.json").string()), DataError);

    ProviderConfig bad = test_provider();
    bad.requests_per_minute = 0;
    CHECK_THROWS_AS(validate_provider_config(bad), DataError);
    fs::remove_all(dir);
}

TEST_CASE("credentials come from the environment, never the config") {
    ProviderConfig cfg = test_provider();
    cfg.credential_env = "AFFECTDYN_TEST_KEY";
    ::unsetenv("AFFECTDYN_TEST_KEY");
    CHECK_THROWS_AS((void)resolve_credential(cfg), ProviderError);
    ::setenv("AFFECTDYN_TEST_KEY", "sk-abc", 1);
    CHECK(resolve_credential(cfg) == "sk-abc");
    ::unsetenv("AFFECTDYN_TEST_KEY");

    cfg.credential_env.clear(); // no credential configured: anonymous endpoint
    CHECK(resolve_credential(cfg).empty());
}

TEST_CASE("rate limiter enforces the sliding window on virtual time") {
    using namespace std::chrono;
    auto now = steady_clock::time_point{};
    milliseconds slept{0};
    int sleeps = 0;
    RateLimiter limiter(
        2, [&] { return now; },
        [&](milliseconds d) {
            slept += d;
            ++sleeps;
            now += d; // sleeping advances the virtual clock
        });

    limiter.acquire();
    now += milliseconds(10);
    limiter.acquire();
    CHECK(sleeps == 0);

    // window is full: the third acquisition must wait out the oldest stamp
    limiter.acquire();
    CHECK(sleeps >= 1);
    CHECK(slept >= milliseconds(59'000));
    CHECK(slept <= milliseconds(61'000));

    // after a quiet minute the window is empty again
    now += minutes(2);
    const int before = sleeps;
    limiter.acquire();
    CHECK(sleeps == before);
}

TEST_CASE("annotator returns a valid annotation on first success") {
    ScriptedTransport transport({ok_response(kValidContent)});
    RateLimiter limiter(1000);
    Annotator annotator(transport, limiter, [](std::chrono::milliseconds) {});
    const auto out = annotator.annotate(turn("t1"), test_provider(), Prompt{"s", "u", "v1", "h"});
    CHECK(out.ok);
    CHECK(out.attempts == 1);
    CHECK_FALSE(out.truncated);
    REQUIRE(out.annotation.emotions.size() == 1);
    CHECK(out.annotation.emotions[0].label == "calm");
    CHECK(out.annotation.model_id == "test-model");
    CHECK(out.annotation.turn_id == "t1");
}

TEST_CASE("transport failures retry with doubling backoff") {
    ScriptedTransport transport({transport_failure("connection reset"),
                                 transport_failure("connection reset"),
                                 ok_response(kValidContent)});
    RateLimiter limiter(1000);
    std::vector<std::chrono::milliseconds> delays;
    Annotator annotator(transport, limiter,
                        [&](std::chrono::milliseconds d) { delays.push_back(d); });
    const auto out = annotator.annotate(turn("t1"), test_provider(), Prompt{"s", "u", "v1", "h"});
    CHECK(out.ok);
    CHECK(out.attempts == 3);
    REQUIRE(delays.size() == 2);
    CHECK(delays[0] == std::chrono::milliseconds(500));
    CHECK(delays[1] == std::chrono::milliseconds(1000));
}

TEST_CASE("unparseable completions retry; scale violations do not") {
    // prose twice, then a valid object
    ScriptedTransport retried({ok_response("no json here"), ok_response("still prose"),
                               ok_response(kValidContent)});
    RateLimiter limiter(1000);
    Annotator annotator(retried, limiter, [](std::chrono::milliseconds) {});
    const auto ok = annotator.annotate(turn("t1"), test_provider(), Prompt{"s", "u", "v1", "h"});
    CHECK(ok.ok);
    CHECK(ok.attempts == 3);

    ScriptedTransport range({ok_response(
        R"({"emotions": [{"label": "joy", "valence": 42, "arousal": 5, "learning": 5}]})")});
    Annotator annotator2(range, limiter, [](std::chrono::milliseconds) {});
    const auto bad = annotator2.annotate(turn("t1"), test_provider(), Prompt{"s", "u", "v1", "h"});
    CHECK_FALSE(bad.ok);
    CHECK(bad.attempts == 1); // no second chance for out-of-scale scores
    CHECK(bad.cause.find("valence") != std::string::npos);
    CHECK(range.calls() == 1);

    ScriptedTransport dup({ok_response(
        R"({"emotions": [{"label": "joy", "valence": 5, "arousal": 5, "learning": 5},
                         {"label": "joy", "valence": 4, "arousal": 4, "learning": 4}]})")});
    Annotator annotator3(dup, limiter, [](std::chrono::milliseconds) {});
    const auto dup_out =
        annotator3.annotate(turn("t1"), test_provider(), Prompt{"s", "u", "v1", "h"});
    CHECK_FALSE(dup_out.ok);
    CHECK(dup_out.attempts == 1);
}

TEST_CASE("exhausted retries produce a marked failure, never invented scores") {
    ScriptedTransport transport({transport_failure("timeout"), transport_failure("timeout"),
                                 transport_failure("timeout")});
    RateLimiter limiter(1000);
    Annotator annotator(transport, limiter, [](std::chrono::milliseconds) {});
    const auto out = annotator.annotate(turn("t1"), test_provider(), Prompt{"s", "u", "v1", "h"});
    CHECK_FALSE(out.ok);
    CHECK(out.attempts == 3); // initial try + max_retries
    CHECK(out.annotation.emotions.empty());
    CHECK(out.cause.find("retries exhausted") != std::string::npos);
    CHECK(out.cause.find("timeout") != std::string::npos);
}

TEST_CASE("annotation records round-trip through their wire form") {
    auto rec = ok_record("t1");
    rec.truncated = true;
    const auto back = record_from_jsonl(record_to_jsonl(rec));
    CHECK(back.turn_id == rec.turn_id);
    CHECK(back.model_id == rec.model_id);
    CHECK(back.model_name == rec.model_name);
    CHECK(back.prompt_hash == rec.prompt_hash);
    CHECK(back.prompt_version == rec.prompt_version);
    CHECK(back.status == "ok");
    CHECK(back.truncated);
    REQUIRE(back.emotions.size() == 1);
    CHECK(back.emotions[0].label == "calm");
    CHECK(back.emotions[0].rank == 1);

    AnnotationRecord failed = ok_record("t2");
    failed.status = "failed";
    failed.emotions.clear();
    failed.cause = "retries exhausted: timeout";
    const auto back2 = record_from_jsonl(record_to_jsonl(failed));
    CHECK_FALSE(back2.ok());
    CHECK(back2.cause == failed.cause);
    CHECK(back2.emotions.empty());

    CHECK_THROWS_AS((void)record_from_jsonl("{}"), DataError);
    CHECK_THROWS_AS((void)record_from_jsonl("plainly broken"), DataError);
    // an ok record with out-of-scale scores is rejected on read
    std::string tampered = record_to_jsonl(ok_record("t3"));
    const auto pos = tampered.find("\"valence\":6");
    REQUIRE(pos != std::string::npos);
    tampered.replace(pos, 11, "\"valence\":0");
    CHECK_THROWS_AS((void)record_from_jsonl(tampered), DataError);
}

TEST_CASE("cache persists, indexes, and survives reopen") {
    const auto dir = fresh_dir("cache");
    {
        AnnotationCache cache(dir);
        cache.open();
        CHECK(cache.size() == 0);
        cache.put(ok_record("t1"));
        cache.put(ok_record("t2"));
        AnnotationRecord failed = ok_record("t3");
        failed.status = "failed";
        failed.emotions.clear();
        failed.cause = "boom";
        cache.put(failed);
        CHECK(cache.size() == 3);
        const auto hit =
            cache.lookup(cache_key("t1", "m1", "m1-v1", "feedbeef"));
        REQUIRE(hit.has_value());
        CHECK(hit->ok());
        CHECK_FALSE(cache.lookup(cache_key("t1", "m1", "m1-v1", "otherhash")).has_value());
    }
    AnnotationCache reopened(dir);
    reopened.open();
    CHECK(reopened.size() == 3);
    const auto miss = reopened.lookup(cache_key("t3", "m1", "m1-v1", "feedbeef"));
    REQUIRE(miss.has_value());
    CHECK_FALSE(miss->ok()); // failures persist so they are not re-issued
    fs::remove_all(dir);
}

TEST_CASE("cache rejects corrupt shard lines with file and line context") {
    const auto dir = fresh_dir("cache-corrupt");
    {
        AnnotationCache cache(dir);
        cache.open();
        cache.put(ok_record("t1", "model/with:odd chars"));
    }
    // model directories are sanitized for the filesystem
    bool found_sanitized = false;
    fs::path shard;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.path().extension() == ".jsonl") {
            shard = entry.path();
            const auto parent = entry.path().parent_path().filename().string();
            CHECK(parent.find('/') == std::string::npos);
            CHECK(parent.find(':') == std::string::npos);
            CHECK(parent.find(' ') == std::string::npos);
            found_sanitized = true;
        }
    }
    REQUIRE(found_sanitized);
    std::ofstream(shard, std::ios::app) << "{broken\n";
    AnnotationCache reopened(dir);
    try {
        reopened.open();
        FAIL_CHECK("corrupt record accepted");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(shard.filename().string()) != std::string::npos);
        CHECK(msg.find(":2") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("concurrent writers of distinct keys never lose records") {
    const auto dir = fresh_dir("cache-threads");
    {
        AnnotationCache cache(dir);
        cache.open();
        std::vector<std::thread> workers;
        for (int w = 0; w < 8; ++w) {
            workers.emplace_back([&cache, w] {
                for (int i = 0; i < 25; ++i)
                    cache.put(ok_record("t" + std::to_string(w) + "-" + std::to_string(i),
                                        "model-" + std::to_string(w % 3)));
            });
        }
        for (auto& t : workers) t.join();
        CHECK(cache.size() == 200);
    }
    AnnotationCache reopened(dir);
    reopened.open();
    CHECK(reopened.size() == 200);
    fs::remove_all(dir);
}

TEST_CASE("live annotation over http hits the endpoint once per pair, then never again") {
    httplib::Server server;
    std::atomic<int> requests{0};
    std::atomic<int> bad_auth{0};
    std::atomic<int> bad_body{0};
    // no doctest asserts in here: this lambda runs on the server thread
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++requests;
        if (req.get_header_value("Authorization") != "Bearer test-key-123") ++bad_auth;
        const auto body = nlohmann::json::parse(req.body, nullptr, false);
        if (body.is_discarded() || body.value("model", "") != "live-model-v1" ||
            !body.contains("messages") || body["messages"].size() != 2 ||
            body.value("temperature", -1) != 0)
            ++bad_body;
        nlohmann::json content = {
            {"emotions",
             {{{"label", "calm"}, {"valence", 6}, {"arousal", 2}, {"learning", 5}}}}};
        nlohmann::json envelope = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", content.dump()}}}}}}};
        res.set_content(envelope.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("AFFECTDYN_LIVE_TEST_KEY", "test-key-123", 1);
    ProviderConfig provider;
    provider.model_id = "live";
    provider.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    provider.model_name = "live-model-v1";
    provider.credential_env = "AFFECTDYN_LIVE_TEST_KEY";
    provider.backoff_initial_ms = 1.0;

    const std::vector<Turn> turns{turn("t1"), turn("t2"), turn("t3")};
    const auto dir = fresh_dir("live-cache");
    AnnotateOptions options; // real prompt, mock off

    {
        AnnotationCache cache(dir);
        cache.open();
        HttpChatTransport transport;
        const auto stats = annotate_corpus(turns, {provider}, cache, &transport, options);
        CHECK(stats.requested == 3);
        CHECK(stats.ok == 3);
        CHECK(stats.failed == 0);
        CHECK(stats.network_calls == 3);
        CHECK(stats.cache_hits == 0);
    }
    CHECK(requests.load() == 3);
    CHECK(bad_auth.load() == 0);
    CHECK(bad_body.load() == 0);

    { // warm cache: the server must not hear from us at all
        AnnotationCache cache(dir);
        cache.open();
        HttpChatTransport transport;
        const auto stats = annotate_corpus(turns, {provider}, cache, &transport, options);
        CHECK(stats.ok == 3);
        CHECK(stats.cache_hits == 3);
        CHECK(stats.network_calls == 0);
    }
    CHECK(requests.load() == 3);

    server.stop();
    server_thread.join();
    ::unsetenv("AFFECTDYN_LIVE_TEST_KEY");
    fs::remove_all(dir);
}

TEST_CASE("http failures retry and eventually cache a marked failure") {
    httplib::Server server;
    std::atomic<int> flaky_hits{0};
    std::atomic<int> broken_hits{0};
    server.Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
        if (++flaky_hits <= 2) {
            res.status = 500;
            res.set_content("overloaded", "text/plain");
            return;
        }
        nlohmann::json content = {
            {"emotions",
             {{{"label", "relief"}, {"valence", 7}, {"arousal", 3}, {"learning", 6}}}}};
        nlohmann::json envelope = {
            {"choices", {{{"message", {{"content", content.dump()}}}}}}};
        res.set_content(envelope.dump(), "application/json");
    });
    server.Post("/broken", [&](const httplib::Request&, httplib::Response& res) {
        ++broken_hits;
        res.set_content(R"({"choices": [{"message": {"content": "I cannot rate this."}}]})",
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    ProviderConfig flaky;
    flaky.model_id = "flaky";
    flaky.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/flaky";
    flaky.model_name = "flaky-v1";
    flaky.backoff_initial_ms = 1.0;

    ProviderConfig broken = flaky;
    broken.model_id = "broken";
    broken.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/broken";
    broken.model_name = "broken-v1";

    const std::vector<Turn> turns{turn("t1")};
    const auto dir = fresh_dir("flaky-cache");
    {
        AnnotationCache cache(dir);
        cache.open();
        HttpChatTransport transport;
        const auto stats = annotate_corpus(turns, {flaky, broken}, cache, &transport,
                                           AnnotateOptions{});
        CHECK(stats.ok == 1);     // flaky recovered on the third attempt
        CHECK(stats.failed == 1); // broken never produced an object
    }
    CHECK(flaky_hits.load() == 3);
    CHECK(broken_hits.load() == 3); // initial + 2 retries

    { // both outcomes are cached, including the failure
        AnnotationCache cache(dir);
        cache.open();
        HttpChatTransport transport;
        const auto stats = annotate_corpus(turns, {flaky, broken}, cache, &transport,
                                           AnnotateOptions{});
        CHECK(stats.cache_hits == 2);
        CHECK(stats.network_calls == 0);
        CHECK(stats.failed == 1);
    }
    CHECK(flaky_hits.load() == 3);
    CHECK(broken_hits.load() == 3);

    server.stop();
    server_thread.join();
    fs::remove_all(dir);
}

#include "affectdyn/orchestrator.hpp"

#include <atomic>
#include <memory>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "affectdyn/errors.hpp"

namespace affectdyn {

namespace {

struct SharedStats {
    std::atomic<std::int64_t> requested{0};
    std::atomic<std::int64_t> cache_hits{0};
    std::atomic<std::int64_t> network_calls{0};
    std::atomic<std::int64_t> ok{0};
    std::atomic<std::int64_t> failed{0};
    std::atomic<std::int64_t> truncated{0};
};

void record(SharedStats& stats, const AnnotationRecord& rec) {
    if (rec.ok()) {
        stats.ok.fetch_add(1);
        if (rec.truncated) stats.truncated.fetch_add(1);
    } else {
        stats.failed.fetch_add(1);
    }
}

} // namespace

AnnotateStats annotate_corpus(const std::vector<Turn>& turns,
                              const std::vector<ProviderConfig>& providers,
                              AnnotationCache& cache, ChatTransport* transport,
                              const AnnotateOptions& options) {
    if (providers.empty()) throw ProviderError("annotate_corpus: no providers configured");
    if (!options.mock && transport == nullptr)
        throw ProviderError("annotate_corpus: live annotation requires a transport");
    if (!options.mock) {
        // Fail fast on unusable credentials, before any request goes out.
        for (const auto& provider : providers) resolve_credential(provider);
    }

    // Context lookup for prompts that include preceding turns: the context
    // of a turn is the earlier turns of its own session.
    std::vector<std::vector<Turn>> contexts(turns.size());
    if (options.prompt.context_window > 0) {
        const auto sessions = segment_sessions(turns, options.gap_minutes);
        std::unordered_map<std::string, size_t> index_of;
        for (size_t i = 0; i < turns.size(); ++i) index_of.emplace(turns[i].turn_id, i);
        for (const auto& session : sessions) {
            std::vector<Turn> so_far;
            for (const auto& turn_id : session.turn_ids) {
                const size_t i = index_of.at(turn_id);
                contexts[i] = so_far;
                so_far.push_back(turns[i]);
            }
        }
    }

    SharedStats stats;
    const std::string prompt_hash = options.prompt.hash();

    auto annotate_one = [&](const Turn& turn, size_t turn_index,
                            const ProviderConfig& provider, Annotator* annotator) {
        stats.requested.fetch_add(1);
        const auto key = cache_key(turn.turn_id, provider.model_id, provider.model_name,
                                   prompt_hash);
        if (auto hit = cache.lookup(key)) {
            stats.cache_hits.fetch_add(1);
            record(stats, *hit);
            return;
        }

        AnnotationRecord rec;
        rec.turn_id = turn.turn_id;
        rec.model_id = provider.model_id;
        rec.model_name = provider.model_name;
        rec.prompt_hash = prompt_hash;
        rec.prompt_version = options.prompt.version;

        if (options.mock) {
            const auto ann = mock_annotate(turn.turn_id, provider.model_id, options.seed);
            rec.status = "ok";
            rec.emotions = ann.emotions;
        } else {
            Prompt prompt;
            try {
                prompt = build_prompt(turn, options.prompt, contexts[turn_index]);
            } catch (const AnnotationError& e) {
                rec.status = "failed";
                rec.cause = e.what();
                cache.put(rec);
                record(stats, rec);
                return;
            }
            const AnnotationOutcome outcome =
                annotator->annotate(turn, provider, prompt, options.k_max);
            stats.network_calls.fetch_add(outcome.attempts);
            if (outcome.ok) {
                rec.status = "ok";
                rec.emotions = outcome.annotation.emotions;
                rec.truncated = outcome.truncated;
            } else {
                rec.status = "failed";
                rec.cause = outcome.cause;
            }
        }
        cache.put(rec);
        record(stats, rec);
    };

    // One worker pool per provider; a slow or throttled backend never
    // stalls the others.
    std::vector<std::thread> workers;
    std::vector<std::unique_ptr<RateLimiter>> limiters;
    std::vector<std::unique_ptr<Annotator>> annotators;
    std::vector<std::unique_ptr<std::atomic<size_t>>> cursors;
    for (const auto& provider : providers) {
        validate_provider_config(provider);
        limiters.push_back(std::make_unique<RateLimiter>(provider.requests_per_minute));
        annotators.push_back(transport ? std::make_unique<Annotator>(*transport, *limiters.back())
                                       : nullptr);
        cursors.push_back(std::make_unique<std::atomic<size_t>>(0));
    }

    std::mutex error_mu;
    std::exception_ptr first_error;

    for (size_t p = 0; p < providers.size(); ++p) {
        const auto& provider = providers[p];
        const int pool = std::min(provider.max_in_flight, 8);
        for (int w = 0; w < pool; ++w) {
            workers.emplace_back([&, p] {
                try {
                    for (;;) {
                        const size_t i = cursors[p]->fetch_add(1);
                        if (i >= turns.size()) return;
                        annotate_one(turns[i], i, providers[p], annotators[p].get());
                    }
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            });
        }
    }
    for (auto& worker : workers) worker.join();
    if (first_error) std::rethrow_exception(first_error);

    AnnotateStats out;
    out.requested = stats.requested.load();
    out.cache_hits = stats.cache_hits.load();
    out.network_calls = stats.network_calls.load();
    out.ok = stats.ok.load();
    out.failed = stats.failed.load();
    out.truncated = stats.truncated.load();
    return out;
}

} // namespace affectdyn

#pragma once

#include <cstdint>
#include <vector>

#include "affectdyn/cache.hpp"
#include "affectdyn/corpus.hpp"
#include "affectdyn/provider.hpp"

namespace affectdyn {

struct AnnotateOptions {
    PromptTemplate prompt;
    int k_max = kDefaultKMax;
    bool mock = false;
    std::uint64_t seed = 0;
    double gap_minutes = 60.0; // session boundaries for context lookup
};

struct AnnotateStats {
    std::int64_t requested = 0;
    std::int64_t cache_hits = 0;
    std::int64_t network_calls = 0;
    std::int64_t ok = 0;
    std::int64_t failed = 0;
    std::int64_t truncated = 0;
};

/// Annotates every turn with every provider, through the cache. Each
/// provider gets its own worker pool bounded by max_in_flight and its own
/// rate limiter; distinct turns complete in any order. A cache hit (same
/// turn, model, model name, prompt hash) never touches the transport.
/// Failures are cached too, so a warm re-run issues zero requests.
AnnotateStats annotate_corpus(const std::vector<Turn>& turns,
                              const std::vector<ProviderConfig>& providers,
                              AnnotationCache& cache, ChatTransport* transport,
                              const AnnotateOptions& options);

} // namespace affectdyn

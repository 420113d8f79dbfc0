#include "affectdyn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>

#include <json.hpp>

#include "affectdyn/errors.hpp"
#include "affectdyn/timeutil.hpp"

namespace affectdyn {

using ordered_json = nlohmann::ordered_json;

namespace {

std::vector<ProviderConfig> default_mock_providers() {
    std::vector<ProviderConfig> providers;
    for (const char* id : {"mock-alpha", "mock-beta", "mock-gamma"}) {
        ProviderConfig cfg;
        cfg.model_id = id;
        cfg.endpoint = "mock://local";
        cfg.model_name = id;
        providers.push_back(std::move(cfg));
    }
    return providers;
}

std::string now_rfc3339() {
    const auto now = std::chrono::system_clock::now();
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    return format_rfc3339_ms(ms);
}

const char* role_filter_name(RoleFilter filter) {
    switch (filter) {
    case RoleFilter::student: return "student";
    case RoleFilter::tutor: return "tutor";
    case RoleFilter::all: return "all";
    }
    return "?";
}

} // namespace

ResolvedConfig resolve_config(PipelineConfig config) {
    if (config.k_max < 1) throw DataError("config: k_max must be >= 1");
    if (config.beta <= 0.0) throw DataError("config: beta must be positive");
    if (config.session_gap_minutes <= 0.0)
        throw DataError("config: session_gap_minutes must be positive");
    if (config.top_n < 1) throw DataError("config: top_n must be >= 1");
    if (config.context_window < 0) throw DataError("config: context_window must be >= 0");

    ResolvedConfig resolved;
    if (config.providers_file) {
        resolved.providers = load_provider_configs(config.providers_file->string());
    } else if (config.mock) {
        resolved.providers = default_mock_providers();
    } else {
        throw DataError("config: provider list required unless running with --mock");
    }

    if (config.prompt_file) {
        resolved.prompt = load_prompt_template(config.prompt_file->string(),
                                               config.context_window);
    } else {
        resolved.prompt.context_window = config.context_window;
    }
    resolved.config = std::move(config);
    return resolved;
}

std::string config_snapshot_json(const ResolvedConfig& resolved) {
    const auto& cfg = resolved.config;
    ordered_json doc;
    doc["input"] = cfg.input.string();
    doc["cache_dir"] = cfg.cache_dir.string();
    doc["output_dir"] = cfg.output_dir.string();
    doc["k_max"] = cfg.k_max;
    doc["beta"] = cfg.beta;
    doc["session_gap_minutes"] = cfg.session_gap_minutes;
    doc["role_filter"] = role_filter_name(cfg.role_filter);
    doc["mock"] = cfg.mock;
    if (cfg.mock) doc["seed"] = cfg.seed;
    doc["top_n"] = cfg.top_n;
    doc["context_window"] = cfg.context_window;
    ordered_json providers = ordered_json::array();
    for (const auto& p : resolved.providers) {
        providers.push_back({{"model_id", p.model_id},
                             {"model_name", p.model_name},
                             {"endpoint", p.endpoint},
                             {"credential_env", p.credential_env}});
    }
    doc["providers"] = std::move(providers);
    return doc.dump();
}

std::vector<FusedAnnotation> fuse_records(const std::vector<AnnotationRecord>& records,
                                          std::int64_t* unfusable_turns) {
    // turn_id -> model_id -> record, rejecting conflicting duplicates.
    std::map<std::string, std::map<std::string, const AnnotationRecord*>> by_turn;
    for (const auto& rec : records) {
        auto& models = by_turn[rec.turn_id];
        auto [it, inserted] = models.emplace(rec.model_id, &rec);
        if (!inserted) {
            const AnnotationRecord& prior = *it->second;
            const bool same = prior.status == rec.status && prior.cause == rec.cause &&
                              prior.emotions.size() == rec.emotions.size() &&
                              std::equal(prior.emotions.begin(), prior.emotions.end(),
                                         rec.emotions.begin(), [](const auto& a, const auto& b) {
                                             return a.rank == b.rank && a.label == b.label &&
                                                    a.valence == b.valence &&
                                                    a.arousal == b.arousal &&
                                                    a.learning == b.learning;
                                         });
            if (!same)
                throw DataError("conflicting annotation records for turn \"" + rec.turn_id +
                                "\", model \"" + rec.model_id +
                                "\" (mixed prompt versions in the annotation set?)");
        }
    }

    std::vector<FusedAnnotation> fused;
    std::int64_t unfusable = 0;
    for (const auto& [turn_id, models] : by_turn) {
        std::vector<ModelAnnotation> anns;
        for (const auto& [model_id, rec] : models) {
            if (rec->ok()) anns.push_back(rec->to_annotation());
        }
        if (anns.empty()) {
            ++unfusable; // every backend failed for this turn
            continue;
        }
        fused.push_back(fuse_turn(std::move(anns)));
    }
    if (unfusable_turns) *unfusable_turns = unfusable;
    return fused; // std::map iteration keeps turn_id order
}

RunManifest run_pipeline(const ResolvedConfig& resolved, ChatTransport* transport) {
    const auto& cfg = resolved.config;
    RunManifest manifest;
    manifest.started_at = now_rfc3339();
    manifest.prompt_version = resolved.prompt.version;
    manifest.prompt_hash = resolved.prompt.hash();
    manifest.config_json = config_snapshot_json(resolved);

    const auto turns = parse_corpus_file(cfg.input.string());
    if (turns.empty())
        throw DataError("ingest stage: input contains no turns: " + cfg.input.string());
    const auto sessions = segment_sessions(turns, cfg.session_gap_minutes);
    manifest.counts.turns = static_cast<std::int64_t>(turns.size());
    manifest.counts.sessions = static_cast<std::int64_t>(sessions.size());
    const CorpusSummary summary = summarize_corpus(turns, sessions);
    manifest.counts.participants = summary.participants;

    std::filesystem::create_directories(cfg.output_dir);
    const auto marker = cfg.output_dir / ".run-in-progress";
    std::ofstream(marker) << "started " << manifest.started_at << "\n";

    AnnotationCache cache(cfg.cache_dir);
    cache.open();

    AnnotateOptions options;
    options.prompt = resolved.prompt;
    options.k_max = cfg.k_max;
    options.mock = cfg.mock;
    options.seed = cfg.seed;
    options.gap_minutes = cfg.session_gap_minutes;

    HttpChatTransport default_transport;
    if (!cfg.mock && transport == nullptr) transport = &default_transport;

    AnnotateStats stats;
    try {
        stats = annotate_corpus(turns, resolved.providers, cache, transport, options);
    } catch (const ProviderError&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(std::string("annotate stage: ") + e.what());
    }
    manifest.counts.annotations_requested = stats.requested;
    manifest.counts.cache_hits = stats.cache_hits;
    manifest.counts.network_calls = stats.network_calls;
    manifest.counts.annotations_ok = stats.ok;
    manifest.counts.annotations_failed = stats.failed;
    manifest.counts.truncated_responses = stats.truncated;
    manifest.full_cache_hit = stats.requested > 0 && stats.cache_hits == stats.requested;

    // Fuse from the annotation set of this run's prompt version only.
    std::vector<AnnotationRecord> records;
    const std::string prompt_hash = resolved.prompt.hash();
    for (const auto& turn : turns) {
        for (const auto& provider : resolved.providers) {
            const auto key =
                cache_key(turn.turn_id, provider.model_id, provider.model_name, prompt_hash);
            if (auto rec = cache.lookup(key)) records.push_back(std::move(*rec));
        }
    }
    std::vector<FusedAnnotation> fused;
    try {
        fused = fuse_records(records, &manifest.counts.turns_unfusable);
    } catch (const std::exception& e) {
        throw DataError(std::string("fuse stage: ") + e.what());
    }
    if (fused.empty()) throw DataError("fuse stage: no turn has a valid annotation");
    manifest.counts.turns_fused = static_cast<std::int64_t>(fused.size());
    write_fused_file((cfg.output_dir / "fused.jsonl").string(), fused);

    AnalysisOptions analysis_options;
    analysis_options.beta = cfg.beta;
    analysis_options.top_n = cfg.top_n;
    analysis_options.role_filter = cfg.role_filter;
    AnalysisResult analysis;
    try {
        analysis = analyze_dynamics(turns, sessions, fused, analysis_options);
    } catch (const std::exception& e) {
        throw DataError(std::string("analyze stage: ") + e.what());
    }

    manifest.counts.reports_written = emit_reports(cfg.output_dir, summary, analysis);
    manifest.finished_at = now_rfc3339();
    write_manifest(cfg.output_dir / "run_manifest.json", manifest);

    std::filesystem::remove(marker);
    return manifest;
}

} // namespace affectdyn

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "affectdyn/cache.hpp"
#include "affectdyn/dynamics.hpp"
#include "affectdyn/orchestrator.hpp"
#include "affectdyn/report.hpp"

namespace affectdyn {

struct PipelineConfig {
    std::filesystem::path input;
    std::filesystem::path cache_dir;
    std::filesystem::path output_dir;
    std::optional<std::filesystem::path> providers_file;
    std::optional<std::filesystem::path> prompt_file;
    int k_max = kDefaultKMax;
    double beta = 1.0;
    double session_gap_minutes = 60.0;
    RoleFilter role_filter = RoleFilter::student;
    bool mock = false;
    std::uint64_t seed = 0;
    int top_n = 10;
    int context_window = 0;
};

/// Checks ranges, loads providers (or installs the three mock backends),
/// and loads the prompt template. Throws DataError on bad settings.
struct ResolvedConfig {
    PipelineConfig config;
    std::vector<ProviderConfig> providers;
    PromptTemplate prompt;
};

ResolvedConfig resolve_config(PipelineConfig config);

std::string config_snapshot_json(const ResolvedConfig& resolved);

/// Groups ok-records by turn and fuses each turn with at least one valid
/// annotation. Records must not conflict: two ok-records for the same
/// (turn, model) with different emotions are a DataError (identical
/// duplicates are collapsed). Output is sorted by turn_id.
std::vector<FusedAnnotation> fuse_records(const std::vector<AnnotationRecord>& records,
                                          std::int64_t* unfusable_turns = nullptr);

/// Runs ingest -> annotate -> fuse -> analyze -> report. Writes
/// fused.jsonl, the four CSV reports, and run_manifest.json into
/// output_dir. With a warm cache the annotate stage issues zero requests
/// and every report byte is reproduced identically. A transport of
/// nullptr selects the built-in HTTP transport (mock runs never touch a
/// transport).
RunManifest run_pipeline(const ResolvedConfig& resolved, ChatTransport* transport = nullptr);

} // namespace affectdyn

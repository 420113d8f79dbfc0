#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "affectdyn/corpus.hpp"
#include "affectdyn/dynamics.hpp"

namespace affectdyn {

inline constexpr const char* kToolVersion = "0.1.0";

/// Number formatting shared by every CSV: up to 6 significant digits,
/// trailing zeros trimmed, so goldens are stable across platforms.
std::string format_number(double value);

struct StageCounts {
    std::int64_t turns = 0;
    std::int64_t participants = 0;
    std::int64_t sessions = 0;
    std::int64_t annotations_requested = 0;
    std::int64_t cache_hits = 0;
    std::int64_t network_calls = 0;
    std::int64_t annotations_ok = 0;
    std::int64_t annotations_failed = 0;
    std::int64_t truncated_responses = 0;
    std::int64_t turns_fused = 0;
    std::int64_t turns_unfusable = 0;
    std::int64_t reports_written = 0;
};

struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string started_at;  // RFC 3339 UTC
    std::string finished_at; // RFC 3339 UTC
    std::string prompt_version;
    std::string prompt_hash;
    std::string config_json; // snapshot of the effective configuration
    StageCounts counts;
    bool full_cache_hit = false;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

// Report writers. Each writes to a temp file in the target directory and
// renames into place, so readers never observe a half-written report.
void write_val_histograms_csv(const std::filesystem::path& path, const ValDistributions& dists);
void write_label_frequencies_csv(const std::filesystem::path& path,
                                 const LabelFrequencyReport& report);
void write_transition_csv(const std::filesystem::path& path, const TransitionModel& model);
void write_corpus_summary_csv(const std::filesystem::path& path, const CorpusSummary& summary);

/// Writes the full fixed report set into output_dir. Returns the number of
/// files written.
int emit_reports(const std::filesystem::path& output_dir, const CorpusSummary& summary,
                 const AnalysisResult& analysis);

} // namespace affectdyn

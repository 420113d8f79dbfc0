#include "affectdyn/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "affectdyn/errors.hpp"
#include "affectdyn/timeutil.hpp"

namespace affectdyn {

using ordered_json = nlohmann::ordered_json;

std::string format_number(double value) {
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    if (std::isnan(value)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", value);
    return buf;
}

namespace {

std::string format_count(std::int64_t value) {
    return std::to_string(value);
}

// Temp-write plus rename keeps partially written reports invisible.
void write_atomically(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.parent_path() / (path.filename().string() + ".partial");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write report file: " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void summary_row(std::ostream& out, const char* metric, const char* scope,
                 const std::string& value, const std::optional<MedianIqr>& rollup) {
    out << metric << ',' << scope << ',' << value << ',';
    if (rollup) {
        out << format_number(rollup->median) << ',' << format_number(rollup->q1) << ','
            << format_number(rollup->q3);
    } else {
        out << ",,";
    }
    out << '\n';
}

} // namespace

void write_val_histograms_csv(const std::filesystem::path& path, const ValDistributions& dists) {
    std::ostringstream out;
    out << "dimension,bin_1,bin_2,bin_3,bin_4,bin_5,bin_6,bin_7,bin_8,bin_9,"
           "median,q1,q3,n\n";
    const std::pair<const char*, const DimensionDistribution*> rows[] = {
        {"valence", &dists.valence},
        {"arousal", &dists.arousal},
        {"learning", &dists.learning},
    };
    for (const auto& [name, dist] : rows) {
        out << name;
        for (const auto count : dist->histogram) out << ',' << format_count(count);
        out << ',' << format_number(dist->stats.median) << ',' << format_number(dist->stats.q1)
            << ',' << format_number(dist->stats.q3) << ',' << format_count(dists.n) << '\n';
    }
    write_atomically(path, out.str());
}

void write_label_frequencies_csv(const std::filesystem::path& path,
                                 const LabelFrequencyReport& report) {
    std::ostringstream out;
    out << "rank,label,count,share,denominator\n";
    int rank = 0;
    for (const auto& entry : report.top) {
        out << ++rank << ',' << entry.label << ',' << format_count(entry.count) << ','
            << format_number(entry.share) << ',' << format_count(report.denominator) << '\n';
    }
    out << "coverage,," << format_count(report.covered) << ',' << format_number(report.coverage)
        << ',' << format_count(report.denominator) << '\n';
    write_atomically(path, out.str());
}

void write_transition_csv(const std::filesystem::path& path, const TransitionModel& model) {
    std::ostringstream out;
    out << "from,count_to_negative,count_to_neutral,count_to_positive,"
           "p_to_negative,p_to_neutral,p_to_positive,dwell\n";
    static const ValenceState states[] = {ValenceState::negative, ValenceState::neutral,
                                          ValenceState::positive};
    for (const auto state : states) {
        const auto i = static_cast<size_t>(state);
        out << to_string(state);
        for (size_t j = 0; j < 3; ++j) out << ',' << format_count(model.counts[i][j]);
        for (size_t j = 0; j < 3; ++j) out << ',' << format_number(model.probs[i][j]);
        out << ',' << format_number(model.dwell[i]) << '\n';
    }
    write_atomically(path, out.str());
}

void write_corpus_summary_csv(const std::filesystem::path& path, const CorpusSummary& s) {
    std::ostringstream out;
    out << "metric,scope,value,median,q1,q3\n";
    summary_row(out, "participants", "overall", format_count(s.participants), std::nullopt);
    summary_row(out, "sessions", "overall", format_count(s.sessions), std::nullopt);
    summary_row(out, "turns", "overall", format_count(s.turns), std::nullopt);
    summary_row(out, "tokens", "overall", format_count(s.tokens), std::nullopt);
    summary_row(out, "code_snippets", "overall", format_count(s.code_snippets), std::nullopt);
    summary_row(out, "conversation_span_days", "overall", format_count(s.span_days),
                std::nullopt);
    summary_row(out, "days_active", "overall", format_count(s.days_active), std::nullopt);
    summary_row(out, "session_duration_minutes", "overall",
                format_number(s.total_session_minutes), std::nullopt);
    summary_row(out, "first_activity", "overall",
                s.first_activity_ms ? format_rfc3339_ms(*s.first_activity_ms) : "", std::nullopt);
    summary_row(out, "last_activity", "overall",
                s.last_activity_ms ? format_rfc3339_ms(*s.last_activity_ms) : "", std::nullopt);

    summary_row(out, "sessions", "per_participant", "", s.pp_sessions);
    summary_row(out, "conversation_span_days", "per_participant", "", s.pp_span_days);
    summary_row(out, "days_active", "per_participant", "", s.pp_days_active);
    summary_row(out, "turns", "per_participant", "", s.pp_turns);
    summary_row(out, "turns_per_session", "per_participant", "", s.pp_turns_per_session);
    summary_row(out, "tokens", "per_participant", "", s.pp_tokens);
    summary_row(out, "tokens_per_turn", "per_participant", "", s.pp_tokens_per_turn);
    summary_row(out, "code_snippets", "per_participant", "", s.pp_code_snippets);
    summary_row(out, "code_snippets_per_turn", "per_participant", "",
                s.pp_code_snippets_per_turn);
    summary_row(out, "session_duration_minutes", "per_participant", "", s.pp_session_minutes);

    summary_row(out, "turns_per_session", "per_session", "", s.ps_turns);
    summary_row(out, "session_duration_minutes", "per_session", "", s.ps_minutes);
    summary_row(out, "tokens_per_turn", "per_turn", "", s.pt_tokens);
    write_atomically(path, out.str());
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
    ordered_json doc;
    doc["tool_version"] = manifest.tool_version;
    doc["started_at"] = manifest.started_at;
    doc["finished_at"] = manifest.finished_at;
    doc["prompt_version"] = manifest.prompt_version;
    doc["prompt_hash"] = manifest.prompt_hash;
    doc["config"] = ordered_json::parse(manifest.config_json.empty() ? "{}"
                                                                     : manifest.config_json);
    ordered_json counts;
    counts["turns"] = manifest.counts.turns;
    counts["participants"] = manifest.counts.participants;
    counts["sessions"] = manifest.counts.sessions;
    counts["annotations_requested"] = manifest.counts.annotations_requested;
    counts["cache_hits"] = manifest.counts.cache_hits;
    counts["network_calls"] = manifest.counts.network_calls;
    counts["annotations_ok"] = manifest.counts.annotations_ok;
    counts["annotations_failed"] = manifest.counts.annotations_failed;
    counts["truncated_responses"] = manifest.counts.truncated_responses;
    counts["turns_fused"] = manifest.counts.turns_fused;
    counts["turns_unfusable"] = manifest.counts.turns_unfusable;
    counts["reports_written"] = manifest.counts.reports_written;
    doc["counts"] = std::move(counts);
    doc["full_cache_hit"] = manifest.full_cache_hit;
    write_atomically(path, doc.dump(2) + "\n");
}

int emit_reports(const std::filesystem::path& output_dir, const CorpusSummary& summary,
                 const AnalysisResult& analysis) {
    std::filesystem::create_directories(output_dir);
    write_corpus_summary_csv(output_dir / "corpus_summary.csv", summary);
    write_val_histograms_csv(output_dir / "val_histograms.csv", analysis.distributions);
    write_label_frequencies_csv(output_dir / "label_frequencies.csv", analysis.labels);
    write_transition_csv(output_dir / "transition_matrix.csv", analysis.transitions);
    return 4;
}

} // namespace affectdyn

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "affectdyn/errors.hpp"
#include "affectdyn/pipeline.hpp"

namespace {

using namespace affectdyn;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitProvider = 3;

struct CommonArgs {
    std::string input;
    std::string role_filter = "student";
    double session_gap_minutes = 60.0;
};

RoleFilter parse_role_filter(const std::string& value) {
    auto filter = role_filter_from_string(value);
    if (!filter) throw CLI::ValidationError("--role-filter", "must be student, tutor, or all");
    return *filter;
}

void print_annotate_stats(const AnnotateStats& stats) {
    std::cout << "annotated: " << stats.ok << " ok, " << stats.failed << " failed, "
              << stats.cache_hits << " cache hits, " << stats.network_calls
              << " network calls\n";
}

int run_annotate(const CommonArgs& common, const std::string& providers_file,
                 const std::string& cache_dir, const std::string& prompt_file, bool mock,
                 std::uint64_t seed, int k_max, int context_window) {
    PipelineConfig cfg;
    cfg.input = common.input;
    cfg.cache_dir = cache_dir;
    cfg.mock = mock;
    cfg.seed = seed;
    cfg.k_max = k_max;
    cfg.context_window = context_window;
    cfg.session_gap_minutes = common.session_gap_minutes;
    if (!providers_file.empty()) cfg.providers_file = providers_file;
    if (!prompt_file.empty()) cfg.prompt_file = prompt_file;
    const ResolvedConfig resolved = resolve_config(std::move(cfg));

    const auto turns = parse_corpus_file(resolved.config.input.string());
    if (turns.empty()) throw DataError("input contains no turns");

    AnnotationCache cache(resolved.config.cache_dir);
    cache.open();
    AnnotateOptions options;
    options.prompt = resolved.prompt;
    options.k_max = resolved.config.k_max;
    options.mock = resolved.config.mock;
    options.seed = resolved.config.seed;
    options.gap_minutes = resolved.config.session_gap_minutes;

    HttpChatTransport transport;
    const auto stats = annotate_corpus(turns, resolved.providers, cache,
                                       options.mock ? nullptr : &transport, options);
    print_annotate_stats(stats);
    return kExitOk;
}

int run_fuse(const std::string& annotations_dir, const std::string& output,
             const std::string& prompt_hash) {
    auto records = AnnotationCache::load_all(annotations_dir);
    if (!prompt_hash.empty()) {
        std::erase_if(records,
                      [&](const AnnotationRecord& r) { return r.prompt_hash != prompt_hash; });
    }
    if (records.empty()) throw DataError("no annotation records under " + annotations_dir);
    std::int64_t unfusable = 0;
    const auto fused = fuse_records(records, &unfusable);
    if (fused.empty()) throw DataError("no turn has a valid annotation");
    write_fused_file(output, fused);
    std::cout << "fused " << fused.size() << " turns (" << unfusable
              << " unfusable) -> " << output << "\n";
    return kExitOk;
}

AnalysisResult analyze_files(const CommonArgs& common, const std::string& fused_path,
                             double beta, int top_n, std::vector<Turn>* turns_out = nullptr,
                             std::vector<Session>* sessions_out = nullptr) {
    const auto turns = parse_corpus_file(common.input);
    const auto sessions = segment_sessions(turns, common.session_gap_minutes);
    const auto fused = read_fused_file(fused_path);
    if (fused.empty()) throw DataError("fused file is empty: " + fused_path);
    AnalysisOptions options;
    options.beta = beta;
    options.top_n = top_n;
    options.role_filter = parse_role_filter(common.role_filter);
    auto analysis = analyze_dynamics(turns, sessions, fused, options);
    if (turns_out) *turns_out = turns;
    if (sessions_out) *sessions_out = sessions;
    return analysis;
}

int run_analyze(const CommonArgs& common, const std::string& fused_path, double beta, int top_n,
                const std::string& output_dir) {
    const auto analysis = analyze_files(common, fused_path, beta, top_n);
    std::filesystem::create_directories(output_dir);
    write_val_histograms_csv(std::filesystem::path(output_dir) / "val_histograms.csv",
                             analysis.distributions);
    write_label_frequencies_csv(std::filesystem::path(output_dir) / "label_frequencies.csv",
                                analysis.labels);
    write_transition_csv(std::filesystem::path(output_dir) / "transition_matrix.csv",
                         analysis.transitions);
    std::cout << "analyzed " << analysis.turns_analyzed << " turns (role filter: "
              << common.role_filter << "); reports in " << output_dir << "\n";
    return kExitOk;
}

int run_report(const CommonArgs& common, const std::string& fused_path, double beta, int top_n,
               const std::string& output_dir) {
    std::vector<Turn> turns;
    std::vector<Session> sessions;
    const auto analysis = analyze_files(common, fused_path, beta, top_n, &turns, &sessions);
    const auto summary = summarize_corpus(turns, sessions);
    emit_reports(output_dir, summary, analysis);

    std::cout << "corpus: " << summary.participants << " participants, " << summary.sessions
              << " sessions, " << summary.turns << " turns\n";
    std::cout << "analyzed turns: " << analysis.turns_analyzed
              << " (role filter: " << common.role_filter << ")\n";
    std::cout << "top label: "
              << (analysis.labels.top.empty() ? std::string("-") : analysis.labels.top[0].label)
              << "; coverage of top " << analysis.labels.top.size() << ": "
              << format_number(analysis.labels.coverage) << "\n";
    std::cout << "reports in " << output_dir << "\n";
    return kExitOk;
}

int run_full(const CommonArgs& common, const std::string& providers_file,
             const std::string& cache_dir, const std::string& output_dir,
             const std::string& prompt_file, bool mock, std::uint64_t seed, int k_max,
             int context_window, double beta, int top_n) {
    PipelineConfig cfg;
    cfg.input = common.input;
    cfg.cache_dir = cache_dir;
    cfg.output_dir = output_dir;
    cfg.mock = mock;
    cfg.seed = seed;
    cfg.k_max = k_max;
    cfg.context_window = context_window;
    cfg.beta = beta;
    cfg.top_n = top_n;
    cfg.session_gap_minutes = common.session_gap_minutes;
    cfg.role_filter = parse_role_filter(common.role_filter);
    if (!providers_file.empty()) cfg.providers_file = providers_file;
    if (!prompt_file.empty()) cfg.prompt_file = prompt_file;

    const auto manifest = run_pipeline(resolve_config(std::move(cfg)));
    std::cout << "turns: " << manifest.counts.turns << ", sessions: " << manifest.counts.sessions
              << ", fused: " << manifest.counts.turns_fused << "\n";
    std::cout << "annotations: " << manifest.counts.annotations_ok << " ok, "
              << manifest.counts.annotations_failed << " failed, "
              << manifest.counts.cache_hits << " cache hits, "
              << manifest.counts.network_calls << " network calls\n";
    std::cout << "outputs in " << output_dir << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Affect annotation, ensemble fusion, and dynamics analysis for dialogue logs"};
    app.require_subcommand(1);
    app.set_version_flag("--version", affectdyn::kToolVersion);

    CommonArgs common;
    std::string providers_file, cache_dir = "cache", output_dir = "out", prompt_file;
    std::string fused_path = "fused.jsonl", fuse_output = "fused.jsonl", annotations_dir;
    std::string prompt_hash;
    bool mock = false;
    std::uint64_t seed = 0;
    int k_max = affectdyn::kDefaultKMax;
    int context_window = 0;
    double beta = 1.0;
    int top_n = 10;

    auto add_common = [&](CLI::App* cmd, bool needs_input) {
        if (needs_input)
            cmd->add_option("--input", common.input, "turns file (JSON lines)")->required();
        cmd->add_option("--session-gap-minutes", common.session_gap_minutes,
                        "inactivity threshold that splits sessions")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--role-filter", common.role_filter, "student, tutor, or all");
    };
    auto add_provider_opts = [&](CLI::App* cmd) {
        cmd->add_option("--providers", providers_file, "provider config (JSON)");
        cmd->add_option("--cache-dir", cache_dir, "annotation cache directory");
        cmd->add_option("--prompt-file", prompt_file, "system prompt override");
        cmd->add_flag("--mock", mock, "use deterministic built-in annotators");
        cmd->add_option("--seed", seed, "seed for --mock");
        cmd->add_option("--k-max", k_max, "max ranked emotions kept per model")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--context-window", context_window,
                        "preceding turns included in each prompt")
            ->check(CLI::NonNegativeNumber);
    };

    auto* annotate = app.add_subcommand("annotate", "annotate turns with every provider");
    add_common(annotate, true);
    add_provider_opts(annotate);

    auto* fuse = app.add_subcommand("fuse", "fuse cached annotations into per-turn records");
    fuse->add_option("--annotations", annotations_dir, "annotation records directory")
        ->required();
    fuse->add_option("--output", fuse_output, "fused output file (JSON lines)");
    fuse->add_option("--prompt-hash", prompt_hash, "only fuse records with this prompt hash");

    auto* analyze = app.add_subcommand("analyze", "distributions, label ranks, transitions");
    add_common(analyze, true);
    analyze->add_option("--fused", fused_path, "fused records file")->required();
    analyze->add_option("--beta", beta, "Laplace smoothing constant")->check(CLI::PositiveNumber);
    analyze->add_option("--top-n", top_n, "labels listed in the frequency table")
        ->check(CLI::PositiveNumber);
    analyze->add_option("--output-dir", output_dir, "where analysis CSVs go");

    auto* report = app.add_subcommand("report", "full report set from existing fused records");
    add_common(report, true);
    report->add_option("--fused", fused_path, "fused records file")->required();
    report->add_option("--beta", beta, "Laplace smoothing constant")->check(CLI::PositiveNumber);
    report->add_option("--top-n", top_n, "labels listed in the frequency table")
        ->check(CLI::PositiveNumber);
    report->add_option("--output-dir", output_dir, "where report CSVs go");

    auto* run = app.add_subcommand("run", "all stages: annotate, fuse, analyze, report");
    add_common(run, true);
    add_provider_opts(run);
    run->add_option("--output-dir", output_dir, "where fused records and reports go");
    run->add_option("--beta", beta, "Laplace smoothing constant")->check(CLI::PositiveNumber);
    run->add_option("--top-n", top_n, "labels listed in the frequency table")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help / --version exit 0; everything else is a usage error.
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (annotate->parsed())
            return run_annotate(common, providers_file, cache_dir, prompt_file, mock, seed, k_max,
                                context_window);
        if (fuse->parsed()) return run_fuse(annotations_dir, fuse_output, prompt_hash);
        if (analyze->parsed())
            return run_analyze(common, fused_path, beta, top_n, output_dir);
        if (report->parsed()) return run_report(common, fused_path, beta, top_n, output_dir);
        if (run->parsed())
            return run_full(common, providers_file, cache_dir, output_dir, prompt_file, mock,
                            seed, k_max, context_window, beta, top_n);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const affectdyn::ProviderError& e) {
        std::cerr << "provider error: " << e.what() << "\n";
        return kExitProvider;
    } catch (const affectdyn::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

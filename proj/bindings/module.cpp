// Python bindings for the dialogue-affect pipeline. Containers cross the
// boundary as plain dicts/lists so callers never depend on C++ layout.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "affectdyn/errors.hpp"
#include "affectdyn/pipeline.hpp"
#include "affectdyn/timeutil.hpp"

namespace py = pybind11;
using namespace affectdyn;

namespace {

py::dict turn_to_py(const Turn& t) {
    py::dict d;
    d["turn_id"] = t.turn_id;
    d["participant_id"] = t.participant_id;
    d["timestamp"] = format_rfc3339_ms(t.timestamp_ms);
    d["role"] = to_string(t.role);
    d["text"] = t.text;
    d["code_snippet_count"] = t.code_snippet_count;
    d["token_count"] = t.token_count;
    return d;
}

py::dict session_to_py(const Session& s) {
    py::dict d;
    d["session_id"] = s.session_id;
    d["participant_id"] = s.participant_id;
    d["turn_ids"] = s.turn_ids;
    d["duration_minutes"] = s.duration_minutes;
    return d;
}

py::dict annotation_to_py(const ModelAnnotation& ann) {
    py::list emotions;
    for (const auto& e : ann.emotions) {
        py::dict ed;
        ed["label"] = e.label;
        ed["valence"] = e.valence;
        ed["arousal"] = e.arousal;
        ed["learning"] = e.learning;
        ed["rank"] = e.rank;
        emotions.append(ed);
    }
    py::dict d;
    d["model_id"] = ann.model_id;
    d["turn_id"] = ann.turn_id;
    d["emotions"] = emotions;
    return d;
}

ModelAnnotation annotation_from_py(const py::dict& d) {
    ModelAnnotation ann;
    ann.model_id = py::cast<std::string>(d["model_id"]);
    ann.turn_id = py::cast<std::string>(d["turn_id"]);
    int rank = 0;
    for (const auto& item : py::cast<py::list>(d["emotions"])) {
        const auto ed = py::cast<py::dict>(item);
        RankedEmotion e;
        e.label = py::cast<std::string>(ed["label"]);
        e.valence = py::cast<int>(ed["valence"]);
        e.arousal = py::cast<int>(ed["arousal"]);
        e.learning = py::cast<int>(ed["learning"]);
        e.rank = ed.contains("rank") ? py::cast<int>(ed["rank"]) : ++rank;
        rank = e.rank;
        ann.emotions.push_back(std::move(e));
    }
    return ann;
}

py::dict fused_to_py(const FusedAnnotation& f) {
    py::dict d;
    d["turn_id"] = f.turn_id;
    d["v_bar"] = f.v_bar;
    d["a_bar"] = f.a_bar;
    d["l_bar"] = f.l_bar;
    d["consensus_label"] = f.consensus_label;
    d["models"] = f.contributing_models;
    d["label_votes"] = f.label_votes;
    return d;
}

py::dict counts_to_py(const StageCounts& c) {
    py::dict d;
    d["turns"] = c.turns;
    d["participants"] = c.participants;
    d["sessions"] = c.sessions;
    d["annotations_requested"] = c.annotations_requested;
    d["cache_hits"] = c.cache_hits;
    d["network_calls"] = c.network_calls;
    d["annotations_ok"] = c.annotations_ok;
    d["annotations_failed"] = c.annotations_failed;
    d["truncated_responses"] = c.truncated_responses;
    d["turns_fused"] = c.turns_fused;
    d["turns_unfusable"] = c.turns_unfusable;
    d["reports_written"] = c.reports_written;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Dialogue affect annotation, ensemble fusion, and dynamics analysis";
    m.attr("__version__") = kToolVersion;

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<ProviderError>(m, "ProviderError", PyExc_RuntimeError);
    py::register_exception<AnnotationError>(m, "AnnotationError", PyExc_ValueError);
    py::register_exception<TurnUnfusable>(m, "TurnUnfusable", PyExc_ValueError);

    m.def(
        "parse_corpus",
        [](const std::string& path) {
            py::list out;
            for (const auto& t : parse_corpus_file(path)) out.append(turn_to_py(t));
            return out;
        },
        py::arg("path"), "Read a JSONL turn log, validated and sorted.");

    m.def(
        "segment_sessions",
        [](const std::string& path, double gap_minutes) {
            const auto turns = parse_corpus_file(path);
            py::list out;
            for (const auto& s : segment_sessions(turns, gap_minutes)) {
                out.append(session_to_py(s));
            }
            return out;
        },
        py::arg("path"), py::arg("gap_minutes") = 60.0,
        "Split a turn log into per-participant inactivity-bounded sessions.");

    m.def("normalize_label", &normalize_label, py::arg("raw"),
          "Trim, lowercase, and collapse whitespace in an emotion label.");

    m.def("rank_weights", &rank_weights, py::arg("k"),
          "Linearly decaying weights for k ranked entries; sums to 1.");

    m.def(
        "quantile",
        [](std::vector<double> values, double p) { return quantile(std::move(values), p); },
        py::arg("values"), py::arg("p"),
        "Linear-interpolation quantile of an unsorted sample.");

    m.def(
        "median_iqr",
        [](std::vector<double> values) {
            const auto mi = median_iqr(std::move(values));
            return py::make_tuple(mi.median, mi.q1, mi.q3);
        },
        py::arg("values"), "Returns (median, q1, q3).");

    m.def(
        "mock_annotate",
        [](const std::string& turn_id, const std::string& model_id, std::uint64_t seed) {
            return annotation_to_py(mock_annotate(turn_id, model_id, seed));
        },
        py::arg("turn_id"), py::arg("model_id"), py::arg("seed") = 0,
        "Deterministic offline annotation keyed by (turn_id, model_id, seed).");

    m.def(
        "fuse_turn",
        [](const py::list& annotations) {
            std::vector<ModelAnnotation> anns;
            anns.reserve(annotations.size());
            for (const auto& item : annotations) {
                anns.push_back(annotation_from_py(py::cast<py::dict>(item)));
            }
            return fused_to_py(fuse_turn(std::move(anns)));
        },
        py::arg("annotations"),
        "Three-stage ensemble fusion of one turn's model annotations.");

    m.def(
        "run",
        [](const std::string& input, const std::string& cache_dir, const std::string& output_dir,
           const std::optional<std::string>& providers, const std::optional<std::string>& prompt_file,
           bool mock, std::uint64_t seed, int k_max, double beta, double session_gap_minutes,
           const std::string& role_filter, int top_n, int context_window) {
            PipelineConfig cfg;
            cfg.input = input;
            cfg.cache_dir = cache_dir;
            cfg.output_dir = output_dir;
            if (providers) cfg.providers_file = *providers;
            if (prompt_file) cfg.prompt_file = *prompt_file;
            cfg.mock = mock;
            cfg.seed = seed;
            cfg.k_max = k_max;
            cfg.beta = beta;
            cfg.session_gap_minutes = session_gap_minutes;
            const auto filter = role_filter_from_string(role_filter);
            if (!filter) throw DataError("role_filter must be student, tutor, or all");
            cfg.role_filter = *filter;
            cfg.top_n = top_n;
            cfg.context_window = context_window;

            RunManifest manifest;
            {
                py::gil_scoped_release release;
                manifest = run_pipeline(resolve_config(std::move(cfg)));
            }
            py::dict d;
            d["tool_version"] = manifest.tool_version;
            d["started_at"] = manifest.started_at;
            d["finished_at"] = manifest.finished_at;
            d["prompt_version"] = manifest.prompt_version;
            d["prompt_hash"] = manifest.prompt_hash;
            d["full_cache_hit"] = manifest.full_cache_hit;
            d["counts"] = counts_to_py(manifest.counts);
            return d;
        },
        py::arg("input"), py::arg("cache_dir"), py::arg("output_dir"),
        py::arg("providers") = std::nullopt, py::arg("prompt_file") = std::nullopt,
        py::arg("mock") = false, py::arg("seed") = 0, py::arg("k_max") = kDefaultKMax,
        py::arg("beta") = 1.0, py::arg("session_gap_minutes") = 60.0,
        py::arg("role_filter") = "student", py::arg("top_n") = 10,
        py::arg("context_window") = 0,
        "Full pipeline: annotate, fuse, analyze, and write reports. Returns "
        "the run manifest.");
}

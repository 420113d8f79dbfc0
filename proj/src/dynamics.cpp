#include "affectdyn/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "affectdyn/errors.hpp"

namespace affectdyn {

const char* to_string(ValenceState state) {
    switch (state) {
    case ValenceState::negative: return "negative";
    case ValenceState::neutral: return "neutral";
    case ValenceState::positive: return "positive";
    }
    return "?";
}

TertileCuts compute_tertiles(std::vector<double> values) {
    if (values.size() < 3)
        throw std::invalid_argument("compute_tertiles: need at least 3 values, got " +
                                    std::to_string(values.size()));
    std::sort(values.begin(), values.end());
    TertileCuts cuts;
    cuts.t1 = quantile(values, 1.0 / 3.0);
    cuts.t2 = quantile(values, 2.0 / 3.0);
    return cuts;
}

ValenceState classify_valence(double v, const TertileCuts& cuts) {
    if (cuts.t1 > cuts.t2)
        throw std::invalid_argument("classify_valence: cuts out of order");
    if (cuts.t1 == cuts.t2) return ValenceState::neutral;
    if (v < cuts.t1) return ValenceState::negative;
    if (v > cuts.t2) return ValenceState::positive;
    return ValenceState::neutral;
}

TransitionCounts count_transitions(const std::vector<std::vector<ValenceState>>& sequences) {
    TransitionCounts counts{};
    for (const auto& seq : sequences) {
        // First state of each session is excluded; pairs never straddle
        // session boundaries.
        for (size_t i = 2; i < seq.size(); ++i) {
            const auto from = static_cast<size_t>(seq[i - 1]);
            const auto to = static_cast<size_t>(seq[i]);
            counts[from][to] += 1;
        }
    }
    return counts;
}

TransitionProbs smooth_and_normalize(const TransitionCounts& counts, double beta) {
    if (beta <= 0.0) throw std::invalid_argument("smooth_and_normalize: beta must be positive");
    TransitionProbs probs{};
    for (size_t i = 0; i < 3; ++i) {
        std::int64_t row_sum = 0;
        for (size_t j = 0; j < 3; ++j) {
            if (counts[i][j] < 0)
                throw std::invalid_argument("smooth_and_normalize: negative count");
            row_sum += counts[i][j];
        }
        const double denom = static_cast<double>(row_sum) + 3.0 * beta;
        for (size_t j = 0; j < 3; ++j)
            probs[i][j] = (static_cast<double>(counts[i][j]) + beta) / denom;
    }
    return probs;
}

std::array<double, 3> dwell_times(const TransitionProbs& probs) {
    std::array<double, 3> dwell{};
    for (size_t s = 0; s < 3; ++s) {
        const double p = probs[s][s];
        dwell[s] = p >= 1.0 ? std::numeric_limits<double>::infinity() : 1.0 / (1.0 - p);
    }
    return dwell;
}

TransitionModel build_transition_model(const TransitionCounts& counts, double beta) {
    TransitionModel model;
    model.counts = counts;
    model.beta = beta;
    model.probs = smooth_and_normalize(counts, beta);
    model.dwell = dwell_times(model.probs);
    return model;
}

LabelFrequencyReport label_frequencies(const std::vector<FusedAnnotation>& fused, int top_n) {
    if (top_n < 1) throw std::invalid_argument("label_frequencies: top_n must be >= 1");
    if (fused.empty()) throw std::invalid_argument("label_frequencies: no fused annotations");

    std::map<std::string, std::int64_t> counts;
    for (const auto& f : fused) counts[f.consensus_label] += 1;

    std::vector<LabelFrequency> ranked;
    ranked.reserve(counts.size());
    const auto total = static_cast<std::int64_t>(fused.size());
    for (const auto& [label, count] : counts)
        ranked.push_back({label, count, static_cast<double>(count) / static_cast<double>(total)});
    std::sort(ranked.begin(), ranked.end(), [](const LabelFrequency& a, const LabelFrequency& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.label < b.label;
    });

    LabelFrequencyReport report;
    report.denominator = total;
    report.distinct_labels = static_cast<std::int64_t>(ranked.size());
    const size_t keep = std::min(ranked.size(), static_cast<size_t>(top_n));
    report.top.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep));
    for (const auto& entry : report.top) {
        report.coverage += entry.share;
        report.covered += entry.count;
    }
    return report;
}

int histogram_bin(double v) {
    const int bin = static_cast<int>(std::floor(v + 0.5));
    return std::clamp(bin, 1, 9);
}

ValDistributions val_distributions(const std::vector<FusedAnnotation>& fused) {
    if (fused.empty()) throw std::invalid_argument("val_distributions: no fused annotations");
    ValDistributions out;
    out.n = static_cast<std::int64_t>(fused.size());
    std::vector<double> v, a, l;
    v.reserve(fused.size());
    a.reserve(fused.size());
    l.reserve(fused.size());
    for (const auto& f : fused) {
        out.valence.histogram[static_cast<size_t>(histogram_bin(f.v_bar) - 1)] += 1;
        out.arousal.histogram[static_cast<size_t>(histogram_bin(f.a_bar) - 1)] += 1;
        out.learning.histogram[static_cast<size_t>(histogram_bin(f.l_bar) - 1)] += 1;
        v.push_back(f.v_bar);
        a.push_back(f.a_bar);
        l.push_back(f.l_bar);
    }
    out.valence.stats = median_iqr(std::move(v));
    out.arousal.stats = median_iqr(std::move(a));
    out.learning.stats = median_iqr(std::move(l));
    return out;
}

AnalysisResult analyze_dynamics(const std::vector<Turn>& turns,
                                const std::vector<Session>& sessions,
                                const std::vector<FusedAnnotation>& fused,
                                const AnalysisOptions& options) {
    if (options.beta <= 0.0) throw std::invalid_argument("analyze_dynamics: beta must be positive");

    std::unordered_map<std::string, const Turn*> turn_by_id;
    for (const auto& t : turns) turn_by_id.emplace(t.turn_id, &t);
    std::unordered_map<std::string, const FusedAnnotation*> fused_by_id;
    for (const auto& f : fused) {
        if (!turn_by_id.count(f.turn_id))
            throw DataError("analyze_dynamics: fused record references unknown turn \"" +
                            f.turn_id + "\"");
        fused_by_id.emplace(f.turn_id, &f);
    }

    // Role-filtered fused turns drive everything downstream.
    std::vector<FusedAnnotation> filtered;
    for (const auto& f : fused) {
        if (role_matches(turn_by_id.at(f.turn_id)->role, options.role_filter))
            filtered.push_back(f);
    }
    if (filtered.empty())
        throw DataError("analyze_dynamics: no fused turns match the role filter");

    AnalysisResult result;
    result.role_filter = options.role_filter;
    result.turns_analyzed = static_cast<std::int64_t>(filtered.size());

    std::vector<double> valences;
    valences.reserve(filtered.size());
    for (const auto& f : filtered) valences.push_back(f.v_bar);
    result.cuts = compute_tertiles(valences);

    result.distributions = val_distributions(filtered);
    result.labels = label_frequencies(filtered, options.top_n);

    // Per-session state sequences over the filtered turns, in timestamp
    // order. Turns without a fused annotation (all models failed) are
    // skipped rather than breaking the session.
    std::vector<std::vector<ValenceState>> sequences;
    sequences.reserve(sessions.size());
    for (const auto& session : sessions) {
        std::vector<ValenceState> seq;
        for (const auto& turn_id : session.turn_ids) {
            auto turn_it = turn_by_id.find(turn_id);
            if (turn_it == turn_by_id.end())
                throw DataError("analyze_dynamics: session \"" + session.session_id +
                                "\" references unknown turn \"" + turn_id + "\"");
            if (!role_matches(turn_it->second->role, options.role_filter)) continue;
            auto fused_it = fused_by_id.find(turn_id);
            if (fused_it == fused_by_id.end()) continue;
            seq.push_back(classify_valence(fused_it->second->v_bar, result.cuts));
        }
        if (!seq.empty()) sequences.push_back(std::move(seq));
    }
    result.transitions = build_transition_model(count_transitions(sequences), options.beta);
    return result;
}

} // namespace affectdyn

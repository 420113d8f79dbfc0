#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "affectdyn/corpus.hpp"
#include "affectdyn/fusion.hpp"
#include "affectdyn/stats.hpp"

namespace affectdyn {

/// Valence band of a turn. The numeric order is the state index used by
/// every 3x3 matrix here: negative = 0, neutral = 1, positive = 2.
enum class ValenceState { negative = 0, neutral = 1, positive = 2 };

const char* to_string(ValenceState state);

/// Global 1/3 and 2/3 valence quantiles.
struct TertileCuts {
    double t1 = 0.0;
    double t2 = 0.0;
};

using TransitionCounts = std::array<std::array<std::int64_t, 3>, 3>;
using TransitionProbs = std::array<std::array<double, 3>, 3>;

/// Counts, the Laplace-smoothed row-stochastic matrix, and per-state
/// expected dwell times (1 / (1 - P_ss), infinity at P_ss = 1).
struct TransitionModel {
    TransitionCounts counts{};
    double beta = 1.0;
    TransitionProbs probs{};
    std::array<double, 3> dwell{};
};

/// 1/3 and 2/3 quantiles by the shared interpolation rule. Needs at least
/// 3 values.
TertileCuts compute_tertiles(std::vector<double> values);

/// v < t1 is negative, v > t2 is positive, the closed interval [t1, t2] is
/// neutral. Degenerate cuts (t1 == t2) classify everything neutral.
ValenceState classify_valence(double v, const TertileCuts& cuts);

/// Counts consecutive state pairs within each sequence after dropping the
/// sequence's first state. Never pairs across sequences.
TransitionCounts count_transitions(const std::vector<std::vector<ValenceState>>& sequences);

/// probs[i][j] = (counts[i][j] + beta) / (row_sum_i + 3 beta). beta must be
/// positive, making every entry strictly positive and each row sum to 1.
TransitionProbs smooth_and_normalize(const TransitionCounts& counts, double beta = 1.0);

/// Expected consecutive turns spent in each state.
std::array<double, 3> dwell_times(const TransitionProbs& probs);

TransitionModel build_transition_model(const TransitionCounts& counts, double beta = 1.0);

struct LabelFrequency {
    std::string label;
    std::int64_t count = 0;
    double share = 0.0;
};

struct LabelFrequencyReport {
    std::vector<LabelFrequency> top; // count descending, ties lexicographic
    double coverage = 0.0;           // sum of the listed shares
    std::int64_t covered = 0;        // sum of the listed counts
    std::int64_t denominator = 0;    // total turns behind the shares
    std::int64_t distinct_labels = 0;
};

/// Ranks consensus labels by frequency. top_n must be >= 1; fewer labels
/// than top_n simply yields a shorter list.
LabelFrequencyReport label_frequencies(const std::vector<FusedAnnotation>& fused, int top_n);

struct DimensionDistribution {
    std::array<std::int64_t, 9> histogram{}; // integer bins 1..9, half-up rounding
    MedianIqr stats;                         // computed on unrounded values
};

struct ValDistributions {
    DimensionDistribution valence;
    DimensionDistribution arousal;
    DimensionDistribution learning;
    std::int64_t n = 0;
};

/// Histogram bin for a fused score: round half-up, clamped to 1..9.
int histogram_bin(double v);

ValDistributions val_distributions(const std::vector<FusedAnnotation>& fused);

/// Everything the analysis stage derives from one corpus + fused set.
struct AnalysisResult {
    RoleFilter role_filter = RoleFilter::student;
    std::int64_t turns_analyzed = 0; // fused turns passing the role filter
    TertileCuts cuts;
    ValDistributions distributions;
    LabelFrequencyReport labels;
    TransitionModel transitions;
};

struct AnalysisOptions {
    double beta = 1.0;
    int top_n = 10;
    RoleFilter role_filter = RoleFilter::student;
};

/// Joins fused annotations with their turns, applies the role filter,
/// computes global tertiles over the filtered fused valences, builds
/// per-session state sequences (session order = ascending timestamp), and
/// derives distributions, label frequencies, and the transition model.
AnalysisResult analyze_dynamics(const std::vector<Turn>& turns,
                                const std::vector<Session>& sessions,
                                const std::vector<FusedAnnotation>& fused,
                                const AnalysisOptions& options);

} // namespace affectdyn

#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "affectdyn/annotation.hpp"

namespace affectdyn {

/// One model's rank-pooled scores for a turn.
struct PooledScores {
    std::string model_id;
    double v_hat = 0.0;
    double a_hat = 0.0;
    double l_hat = 0.0;
};

struct FusedScalars {
    double v_bar = 0.0;
    double a_bar = 0.0;
    double l_bar = 0.0;
};

/// Ensemble result for one turn: fused scalar triplet, plurality label,
/// the vote map behind it, and which models contributed.
struct FusedAnnotation {
    std::string turn_id;
    double v_bar = 0.0;
    double a_bar = 0.0;
    double l_bar = 0.0;
    std::string consensus_label;
    std::vector<std::string> contributing_models; // sorted
    std::map<std::string, int> label_votes;       // normalized label -> #models
};

struct TurnUnfusable : std::runtime_error {
    explicit TurnUnfusable(const std::string& what) : std::runtime_error(what) {}
};

/// Linearly decaying rank weights: w_r = (K - r + 1) / (K (K + 1) / 2).
/// Strictly decreasing, strictly positive, sum exactly normalized.
std::vector<double> rank_weights(int k);

/// Stage 1: weighted mean of each dimension over the annotation's ranks.
PooledScores pool_intra_model(const ModelAnnotation& ann);

/// Stage 2: unweighted arithmetic mean per dimension over the models that
/// produced a valid annotation.
FusedScalars aggregate_scalars(std::span<const PooledScores> pools);

struct ConsensusResult {
    std::string label;
    std::map<std::string, int> votes;
};

/// Stage 3: each model votes once for every distinct label it emitted, at
/// any rank. Plurality wins; ties break by the label-conditional mean
/// valence (over every (model, rank) occurrence of the label), then by
/// ascending lexicographic order.
ConsensusResult consensus_label(std::span<const ModelAnnotation> anns);

/// Runs stages 1-3 for one turn. Annotations are canonically ordered by
/// model_id internally, so any input permutation produces bit-identical
/// output. Requires >= 1 annotation with distinct model_ids, all for the
/// same turn.
FusedAnnotation fuse_turn(std::vector<ModelAnnotation> anns);

std::string fused_to_jsonl(const FusedAnnotation& fused);
FusedAnnotation fused_from_jsonl(const std::string& line);

std::vector<FusedAnnotation> read_fused_file(const std::string& path);
void write_fused_file(const std::string& path, const std::vector<FusedAnnotation>& fused);

} // namespace affectdyn

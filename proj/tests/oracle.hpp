#pragma once
// Brute-force reference for the three fusion stages, written separately
// from the library so the two implementations can check each other.
// Everything here favors the most literal possible reading of the math
// over speed, and shares no code with src/.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "affectdyn/annotation.hpp"

namespace oracle {

struct Fused {
    double v = 0.0;
    double a = 0.0;
    double l = 0.0;
    std::string label;
};

// Stage 1 for one model and one dimension: sum over ranks of
// (K - r + 1) / (K (K + 1) / 2) times the score at rank r.
inline double pooled_dim(const affectdyn::ModelAnnotation& ann, char dim) {
    const int k = static_cast<int>(ann.emotions.size());
    const double denom = k * (k + 1) / 2.0;
    double acc = 0.0;
    for (int r = 1; r <= k; ++r) {
        const auto& e = ann.emotions[static_cast<size_t>(r - 1)];
        const int score = dim == 'v' ? e.valence : dim == 'a' ? e.arousal : e.learning;
        acc += (k - r + 1) / denom * score;
    }
    return acc;
}

// Stages 1-3 end to end. Annotations may arrive in any order; every
// choice below is order-free by construction.
inline Fused fuse(const std::vector<affectdyn::ModelAnnotation>& anns) {
    Fused out;

    // Stage 2: plain arithmetic mean of the pooled scores.
    for (const auto& ann : anns) {
        out.v += pooled_dim(ann, 'v');
        out.a += pooled_dim(ann, 'a');
        out.l += pooled_dim(ann, 'l');
    }
    const double m = static_cast<double>(anns.size());
    out.v /= m;
    out.a /= m;
    out.l /= m;

    // Stage 3: one vote per model per distinct label.
    std::map<std::string, int> votes;
    for (const auto& ann : anns) {
        std::set<std::string> seen;
        for (const auto& e : ann.emotions) seen.insert(e.label);
        for (const auto& s : seen) votes[s] += 1;
    }

    // Label-conditional valence as exact integer (sum, count) pairs over
    // every ranked occurrence of the label in any model.
    std::map<std::string, std::pair<long long, long long>> valence;
    for (const auto& ann : anns) {
        for (const auto& e : ann.emotions) {
            valence[e.label].first += e.valence;
            valence[e.label].second += 1;
        }
    }

    std::vector<std::string> labels;
    labels.reserve(votes.size());
    for (const auto& [label, n] : votes) {
        (void)n;
        labels.push_back(label);
    }
    std::sort(labels.begin(), labels.end(), [&](const std::string& x, const std::string& y) {
        if (votes[x] != votes[y]) return votes[x] > votes[y];
        const auto [sx, cx] = valence[x];
        const auto [sy, cy] = valence[y];
        // sx/cx versus sy/cy without ever dividing.
        if (sx * cy != sy * cx) return sx * cy > sy * cx;
        return x < y;
    });
    out.label = labels.front();
    return out;
}

} // namespace oracle

#include "affectdyn/fusion.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "affectdyn/errors.hpp"

namespace affectdyn {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::vector<double> rank_weights(int k) {
    if (k < 1) throw std::invalid_argument("rank_weights: K must be >= 1");
    const double denom = static_cast<double>(k) * (static_cast<double>(k) + 1.0) / 2.0;
    std::vector<double> weights(static_cast<size_t>(k));
    for (int r = 1; r <= k; ++r)
        weights[static_cast<size_t>(r - 1)] = static_cast<double>(k - r + 1) / denom;
    return weights;
}

PooledScores pool_intra_model(const ModelAnnotation& ann) {
    if (ann.emotions.empty())
        throw std::invalid_argument("pool_intra_model: annotation has no emotions");
    const auto weights = rank_weights(static_cast<int>(ann.emotions.size()));
    PooledScores pooled;
    pooled.model_id = ann.model_id;
    for (size_t i = 0; i < ann.emotions.size(); ++i) {
        pooled.v_hat += weights[i] * ann.emotions[i].valence;
        pooled.a_hat += weights[i] * ann.emotions[i].arousal;
        pooled.l_hat += weights[i] * ann.emotions[i].learning;
    }
    return pooled;
}

FusedScalars aggregate_scalars(std::span<const PooledScores> pools) {
    if (pools.empty()) throw std::invalid_argument("aggregate_scalars: no pooled scores");
    FusedScalars out;
    for (const auto& p : pools) {
        out.v_bar += p.v_hat;
        out.a_bar += p.a_hat;
        out.l_bar += p.l_hat;
    }
    const double m = static_cast<double>(pools.size());
    out.v_bar /= m;
    out.a_bar /= m;
    out.l_bar /= m;
    return out;
}

ConsensusResult consensus_label(std::span<const ModelAnnotation> anns) {
    if (anns.empty()) throw std::invalid_argument("consensus_label: no annotations");

    ConsensusResult out;
    // Label -> integer sum and count of valence over every (model, rank)
    // occurrence, for the tie-break. Votes count each model once per label.
    std::map<std::string, std::pair<std::int64_t, std::int64_t>> valence_acc;
    bool any = false;
    for (const auto& ann : anns) {
        std::set<std::string> seen;
        for (const auto& e : ann.emotions) {
            any = true;
            const std::string label = normalize_label(e.label);
            if (seen.insert(label).second) out.votes[label] += 1;
            auto& [sum, n] = valence_acc[label];
            sum += e.valence;
            n += 1;
        }
    }
    if (!any) throw std::invalid_argument("consensus_label: annotations have no emotions");

    // Mean-valence comparison by integer cross-multiplication, so the
    // tie-break is exact and independent of accumulation order. std::map
    // iterates ascending, so remaining ties keep the lexicographically
    // smallest label.
    int best_votes = 0;
    std::pair<std::int64_t, std::int64_t> best_acc{0, 1};
    for (const auto& [label, votes] : out.votes) {
        const auto& acc = valence_acc[label];
        const bool higher_valence = acc.first * best_acc.second > best_acc.first * acc.second;
        if (out.label.empty() || votes > best_votes ||
            (votes == best_votes && higher_valence)) {
            out.label = label;
            best_votes = votes;
            best_acc = acc;
        }
    }
    return out;
}

FusedAnnotation fuse_turn(std::vector<ModelAnnotation> anns) {
    if (anns.empty()) throw TurnUnfusable("fuse_turn: no valid annotations");
    // Canonical order makes every downstream float sum independent of the
    // caller's ordering.
    std::sort(anns.begin(), anns.end(), [](const ModelAnnotation& a, const ModelAnnotation& b) {
        return a.model_id < b.model_id;
    });
    const std::string& turn_id = anns.front().turn_id;
    for (size_t i = 0; i < anns.size(); ++i) {
        if (anns[i].turn_id != turn_id)
            throw std::invalid_argument("fuse_turn: annotations span multiple turns (\"" +
                                        turn_id + "\" vs \"" + anns[i].turn_id + "\")");
        if (i > 0 && anns[i].model_id == anns[i - 1].model_id)
            throw std::invalid_argument("fuse_turn: duplicate model_id \"" + anns[i].model_id +
                                        "\" for turn \"" + turn_id + "\"");
        validate_annotation(anns[i]);
    }

    std::vector<PooledScores> pools;
    pools.reserve(anns.size());
    for (const auto& ann : anns) pools.push_back(pool_intra_model(ann));
    const FusedScalars scalars = aggregate_scalars(pools);
    ConsensusResult consensus = consensus_label(anns);

    FusedAnnotation fused;
    fused.turn_id = turn_id;
    fused.v_bar = scalars.v_bar;
    fused.a_bar = scalars.a_bar;
    fused.l_bar = scalars.l_bar;
    fused.consensus_label = std::move(consensus.label);
    fused.label_votes = std::move(consensus.votes);
    for (const auto& ann : anns) fused.contributing_models.push_back(ann.model_id);
    return fused;
}

std::string fused_to_jsonl(const FusedAnnotation& fused) {
    ordered_json doc;
    doc["turn_id"] = fused.turn_id;
    doc["v_bar"] = fused.v_bar;
    doc["a_bar"] = fused.a_bar;
    doc["l_bar"] = fused.l_bar;
    doc["consensus_label"] = fused.consensus_label;
    ordered_json votes = ordered_json::object();
    for (const auto& [label, count] : fused.label_votes) votes[label] = count;
    doc["label_votes"] = std::move(votes);
    doc["contributing_models"] = fused.contributing_models;
    return doc.dump();
}

FusedAnnotation fused_from_jsonl(const std::string& line) {
    const auto doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw DataError("fused record is not a JSON object: " + line);
    FusedAnnotation fused;
    try {
        fused.turn_id = doc.at("turn_id").get<std::string>();
        fused.v_bar = doc.at("v_bar").get<double>();
        fused.a_bar = doc.at("a_bar").get<double>();
        fused.l_bar = doc.at("l_bar").get<double>();
        fused.consensus_label = doc.at("consensus_label").get<std::string>();
        for (const auto& [label, count] : doc.at("label_votes").items())
            fused.label_votes[label] = count.get<int>();
        fused.contributing_models =
            doc.at("contributing_models").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed fused record: ") + e.what());
    }
    if (fused.contributing_models.empty())
        throw DataError("fused record for turn \"" + fused.turn_id +
                        "\" has no contributing models");
    for (double v : {fused.v_bar, fused.a_bar, fused.l_bar}) {
        if (v < kScoreMin || v > kScoreMax)
            throw DataError("fused record for turn \"" + fused.turn_id +
                            "\" has a score outside [1, 9]");
    }
    if (fused.label_votes.find(fused.consensus_label) == fused.label_votes.end())
        throw DataError("fused record for turn \"" + fused.turn_id +
                        "\": consensus label missing from vote map");
    return fused;
}

std::vector<FusedAnnotation> read_fused_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open fused file: " + path);
    std::vector<FusedAnnotation> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(fused_from_jsonl(line));
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_fused_file(const std::string& path, const std::vector<FusedAnnotation>& fused) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open fused output file: " + path);
    for (const auto& f : fused) out << fused_to_jsonl(f) << '\n';
    if (!out) throw DataError("write to fused output file failed: " + path);
}

} // namespace affectdyn

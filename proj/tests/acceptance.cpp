// Acceptance gate: eight checks that the pipeline's arithmetic and
// behavior hold end to end. Each criterion prints exactly one PASS/FAIL
// line; the process exits nonzero if any failed.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "affectdyn/annotation.hpp"
#include "affectdyn/corpus.hpp"
#include "affectdyn/dynamics.hpp"
#include "affectdyn/fusion.hpp"
#include "affectdyn/pipeline.hpp"
#include "oracle.hpp"

using namespace affectdyn;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::vector<std::string> g_notes; // per-criterion failure details

#define EXPECT(cond, note)                                   \
    do {                                                     \
        if (!(cond)) {                                       \
            g_notes.push_back(note);                         \
            ok = false;                                      \
        }                                                    \
    } while (0)

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void report(int n, const std::string& what, bool ok, double ms) {
    if (ok) {
        std::cout << "PASS criterion " << n << ": " << what << " (" << static_cast<int>(ms)
                  << " ms)\n";
    } else {
        ++g_failures;
        std::cout << "FAIL criterion " << n << ": " << what << "\n";
        for (const auto& note : g_notes) std::cout << "       - " << note << "\n";
    }
    g_notes.clear();
}

RankedEmotion emo(std::string label, int v, int a, int l, int rank) {
    return RankedEmotion{std::move(label), v, a, l, rank};
}

// Random fusion instance shared by criteria 2 and 6.
std::vector<ModelAnnotation> random_instance(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> score(1, 9), kdist(1, 5), mdist(1, 3);
    const std::vector<std::string> labels{"joy",       "calm",    "confusion", "curiosity",
                                          "boredom",   "anxiety", "relief",    "surprise",
                                          "puzzlement"};
    const int m = mdist(rng);
    std::vector<ModelAnnotation> anns;
    for (int i = 0; i < m; ++i) {
        ModelAnnotation ann;
        ann.model_id = "model-" + std::to_string(i);
        ann.turn_id = "t";
        std::vector<std::string> pool = labels;
        std::shuffle(pool.begin(), pool.end(), rng);
        const int k = kdist(rng);
        for (int r = 1; r <= k; ++r)
            ann.emotions.push_back(
                emo(pool[static_cast<size_t>(r - 1)], score(rng), score(rng), score(rng), r));
        anns.push_back(std::move(ann));
    }
    return anns;
}

fs::path fresh_dir(const std::string& tag) {
    const auto dir =
        fs::temp_directory_path() / ("affectdyn-accept-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "<unreadable: " + path.string() + ">";
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

// 1. Reference self-loop probabilities map to the expected dwell times.
void criterion_1() {
    const auto start = Clock::now();
    bool ok = true;
    TransitionProbs probs{};
    probs[0] = {0.57, 0.33, 0.10};
    probs[1] = {0.31, 0.49, 0.20};
    probs[2] = {0.41, 0.30, 0.29};
    const auto dwell = dwell_times(probs);
    const double expected[3] = {2.33, 1.96, 1.41};
    for (int s = 0; s < 3; ++s) {
        EXPECT(std::abs(dwell[static_cast<size_t>(s)] - expected[s]) <= 0.005,
               "state " + std::to_string(s) + ": dwell " +
                   std::to_string(dwell[static_cast<size_t>(s)]) + " vs " +
                   std::to_string(expected[s]));
    }
    const double ms = elapsed_ms(start);
    EXPECT(ms < 1000.0, "runtime " + std::to_string(ms) + " ms exceeds 1 s");
    report(1, "self-loop probabilities 0.57/0.49/0.29 give dwell times 2.33/1.96/1.41", ok, ms);
}

// 2. The production fusion agrees with the brute-force reference.
void criterion_2() {
    const auto start = Clock::now();
    bool ok = true;
    std::mt19937_64 rng(0x5eed2);
    int checked = 0;
    for (int inst = 0; inst < 1000 && ok; ++inst) {
        auto anns = random_instance(rng);
        const auto expected = oracle::fuse(anns);
        const auto got = fuse_turn(std::move(anns));
        EXPECT(std::abs(got.v_bar - expected.v) <= 1e-12,
               "instance " + std::to_string(inst) + ": v_bar off by " +
                   std::to_string(got.v_bar - expected.v));
        EXPECT(std::abs(got.a_bar - expected.a) <= 1e-12,
               "instance " + std::to_string(inst) + ": a_bar mismatch");
        EXPECT(std::abs(got.l_bar - expected.l) <= 1e-12,
               "instance " + std::to_string(inst) + ": l_bar mismatch");
        EXPECT(got.consensus_label == expected.label,
               "instance " + std::to_string(inst) + ": label \"" + got.consensus_label +
                   "\" vs \"" + expected.label + "\"");
        ++checked;
    }
    EXPECT(checked == 1000 || !ok, "early stop");
    const double ms = elapsed_ms(start);
    EXPECT(ms < 10'000.0, "runtime " + std::to_string(ms) + " ms exceeds 10 s");
    report(2, "1000 random fusion instances match the brute-force reference", ok, ms);
}

// 3. Rank weights follow the linear-decay law for K in 1..10.
void criterion_3() {
    const auto start = Clock::now();
    bool ok = true;
    for (int k = 1; k <= 10; ++k) {
        const auto w = rank_weights(k);
        EXPECT(static_cast<int>(w.size()) == k, "K=" + std::to_string(k) + ": wrong length");
        double sum = 0.0;
        for (int r = 1; r <= k; ++r) {
            const double expected = (k - r + 1) / (k * (k + 1) / 2.0);
            EXPECT(std::abs(w[static_cast<size_t>(r - 1)] - expected) <= 1e-15,
                   "K=" + std::to_string(k) + " r=" + std::to_string(r) + ": weight mismatch");
            if (r > 1)
                EXPECT(w[static_cast<size_t>(r - 1)] < w[static_cast<size_t>(r - 2)],
                       "K=" + std::to_string(k) + ": weights not strictly decreasing");
            sum += w[static_cast<size_t>(r - 1)];
        }
        EXPECT(std::abs(sum - 1.0) <= 1e-12, "K=" + std::to_string(k) + ": sum " +
                                                 std::to_string(sum));
    }
    report(3, "rank weights equal (K-r+1)/(K(K+1)/2), sum to 1, strictly decrease",
           ok, elapsed_ms(start));
}

// 4. A planted Markov chain is recovered from 10,000 sampled transitions.
void criterion_4() {
    const auto start = Clock::now();
    bool ok = true;

    const double planted[3][3] = {
        {0.60, 0.30, 0.10},
        {0.20, 0.50, 0.30},
        {0.25, 0.25, 0.50},
    };
    std::mt19937_64 rng(0x5eed4); // pinned: the margin below was verified for this seed
    std::vector<std::vector<ValenceState>> sequences;
    int transitions = 0;
    while (transitions < 10'000) {
        std::vector<ValenceState> seq;
        int state = static_cast<int>(rng() % 3);
        seq.push_back(static_cast<ValenceState>(state)); // dropped by the estimator
        state = static_cast<int>(rng() % 3);
        seq.push_back(static_cast<ValenceState>(state));
        for (int step = 0; step < 100 && transitions < 10'000; ++step) {
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            const double u = unit(rng);
            int next = 0;
            double acc = 0.0;
            for (int j = 0; j < 3; ++j) {
                acc += planted[state][j];
                if (u <= acc) {
                    next = j;
                    break;
                }
                next = j;
            }
            seq.push_back(static_cast<ValenceState>(next));
            state = next;
            ++transitions;
        }
        sequences.push_back(std::move(seq));
    }

    const auto counts = count_transitions(sequences);
    std::int64_t counted = 0;
    for (const auto& row : counts)
        for (auto c : row) counted += c;
    EXPECT(counted == 10'000, "counted " + std::to_string(counted) + " transitions");

    const auto probs = smooth_and_normalize(counts, 1.0);
    double max_err = 0.0;
    for (int i = 0; i < 3; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < 3; ++j) {
            max_err = std::max(max_err,
                               std::abs(probs[static_cast<size_t>(i)][static_cast<size_t>(j)] -
                                        planted[i][j]));
            row_sum += probs[static_cast<size_t>(i)][static_cast<size_t>(j)];
        }
        EXPECT(std::abs(row_sum - 1.0) <= 1e-12,
               "row " + std::to_string(i) + " sums to " + std::to_string(row_sum));
    }
    EXPECT(max_err <= 0.02, "max entrywise error " + std::to_string(max_err));

    // no data at all: beta = 1 gives the exact uniform matrix
    const auto uniform = smooth_and_normalize(TransitionCounts{}, 1.0);
    for (const auto& row : uniform) {
        double row_sum = 0.0;
        for (double p : row) {
            EXPECT(p == 1.0 / 3.0, "zero-data entry is not exactly 1/3");
            row_sum += p;
        }
        EXPECT(std::abs(row_sum - 1.0) <= 1e-12, "zero-data row sum off");
    }
    report(4, "planted 3-state chain recovered within 0.02 from 10,000 transitions",
           ok, elapsed_ms(start));
}

// 5. Session boundaries behave exactly at the one-hour threshold, and
//    segmentation is idempotent under re-flattening.
void criterion_5() {
    const auto start = Clock::now();
    bool ok = true;

    auto turn_at = [](const std::string& id, const std::string& pid, std::int64_t ms) {
        Turn t;
        t.turn_id = id;
        t.participant_id = pid;
        t.timestamp_ms = ms;
        t.role = Role::student;
        t.text = "x";
        return t;
    };

    const struct {
        double gap_minutes;
        size_t sessions;
    } boundary[] = {{59.99, 1}, {60.00, 2}, {60.01, 2}};
    for (const auto& c : boundary) {
        const std::vector<Turn> turns{
            turn_at("a", "p", 0),
            turn_at("b", "p", static_cast<std::int64_t>(c.gap_minutes * 60'000.0))};
        const auto sessions = segment_sessions(turns, 60.0);
        EXPECT(sessions.size() == c.sessions,
               std::to_string(c.gap_minutes) + " min gap gave " +
                   std::to_string(sessions.size()) + " sessions, wanted " +
                   std::to_string(c.sessions));
    }

    std::mt19937_64 rng(0x5eed5);
    for (int corpus = 0; corpus < 500 && ok; ++corpus) {
        std::vector<Turn> turns;
        const int participants = 1 + static_cast<int>(rng() % 4);
        for (int p = 0; p < participants; ++p) {
            std::int64_t t = static_cast<std::int64_t>(rng() % 1'000'000);
            const int n = 1 + static_cast<int>(rng() % 20);
            for (int i = 0; i < n; ++i) {
                // gaps cluster around the threshold to stress the boundary
                const std::int64_t gap_ms = static_cast<std::int64_t>(rng() % 7'200'000);
                t += gap_ms;
                turns.push_back(turn_at("p" + std::to_string(p) + "-t" + std::to_string(i),
                                        "p" + std::to_string(p), t));
            }
        }
        const auto sessions = segment_sessions(turns, 60.0);

        // re-flatten: each session's turns, segmented alone, must stay one session
        size_t turns_covered = 0;
        for (const auto& s : sessions) {
            std::vector<Turn> subset;
            for (const auto& turn : turns)
                if (std::find(s.turn_ids.begin(), s.turn_ids.end(), turn.turn_id) !=
                    s.turn_ids.end())
                    subset.push_back(turn);
            turns_covered += subset.size();
            const auto again = segment_sessions(subset, 60.0);
            EXPECT(again.size() == 1, "corpus " + std::to_string(corpus) + ": session \"" +
                                          s.session_id + "\" re-split");
            if (again.size() == 1)
                EXPECT(again[0].turn_ids == s.turn_ids,
                       "corpus " + std::to_string(corpus) + ": membership changed");
        }
        EXPECT(turns_covered == turns.size(),
               "corpus " + std::to_string(corpus) + ": sessions do not partition the turns");
    }
    report(5, "59.99/60.00/60.01 minute gaps give 1/2/2 sessions; idempotent on 500 corpora",
           ok, elapsed_ms(start));
}

// 6. Model order cannot influence fused output, bit for bit.
void criterion_6() {
    const auto start = Clock::now();
    bool ok = true;
    std::mt19937_64 rng(0x5eed6);
    for (int i = 0; i < 500 && ok; ++i) {
        auto anns = random_instance(rng);
        const auto base = fuse_turn(anns);
        for (int shuffle = 0; shuffle < 3; ++shuffle) {
            auto permuted = anns;
            std::shuffle(permuted.begin(), permuted.end(), rng);
            const auto again = fuse_turn(std::move(permuted));
            EXPECT(base.v_bar == again.v_bar, "turn " + std::to_string(i) + ": v_bar drifted");
            EXPECT(base.a_bar == again.a_bar, "turn " + std::to_string(i) + ": a_bar drifted");
            EXPECT(base.l_bar == again.l_bar, "turn " + std::to_string(i) + ": l_bar drifted");
            EXPECT(base.consensus_label == again.consensus_label,
                   "turn " + std::to_string(i) + ": label changed under permutation");
        }
    }
    report(6, "500 random turns fuse bit-identically under model permutations",
           ok, elapsed_ms(start));
}

// 7. The golden synthetic run is deterministic and fully cache-served on
//    the second pass.
void criterion_7() {
    const auto start = Clock::now();
    bool ok = true;

    const auto cache = fresh_dir("c7-cache");
    const auto out1 = fresh_dir("c7-out1");
    const auto out2 = fresh_dir("c7-out2");

    PipelineConfig cfg;
    cfg.input = std::string(AFFECTDYN_TEST_DATA_DIR) + "/synthetic_50.jsonl";
    cfg.cache_dir = cache;
    cfg.mock = true;
    cfg.seed = 7;

    auto first = cfg;
    first.output_dir = out1;
    const auto m1 = run_pipeline(resolve_config(std::move(first)));
    auto second = cfg;
    second.output_dir = out2;
    const auto m2 = run_pipeline(resolve_config(std::move(second)));

    EXPECT(m1.counts.turns == 50, "expected 50 turns");
    EXPECT(m1.counts.annotations_requested == 150, "expected 150 annotation requests");
    EXPECT(m2.counts.network_calls == 0,
           "second run issued " + std::to_string(m2.counts.network_calls) + " network calls");
    EXPECT(m2.counts.cache_hits == 150,
           "second run had " + std::to_string(m2.counts.cache_hits) + " cache hits");
    EXPECT(m2.full_cache_hit, "second run not marked fully cache-served");

    for (const char* name : {"fused.jsonl", "val_histograms.csv", "label_frequencies.csv",
                             "transition_matrix.csv", "corpus_summary.csv"}) {
        EXPECT(slurp(out1 / name) == slurp(out2 / name),
               std::string(name) + " differs between consecutive runs");
    }

    fs::remove_all(cache);
    fs::remove_all(out1);
    fs::remove_all(out2);
    report(7, "50-turn synthetic run reproduces byte-identical outputs with a silent second pass",
           ok, elapsed_ms(start));
}

// 8. Every malformed-response fixture lands on its documented outcome.
void criterion_8() {
    const auto start = Clock::now();
    bool ok = true;

    std::ifstream in(std::string(AFFECTDYN_TEST_DATA_DIR) + "/malformed_cases.jsonl");
    EXPECT(in.good(), "cannot open malformed_cases.jsonl");
    std::string line;
    int cases = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = nlohmann::json::parse(line);
        const std::string name = c.at("name");
        const std::string raw = c.at("raw");
        const std::string expect = c.at("expect");
        ++cases;
        try {
            const auto parsed = parse_response(raw);
            if (expect == "ok") {
                EXPECT(parsed.emotions.size() == c.at("k").get<size_t>(),
                       name + ": wrong emotion count");
                EXPECT(parsed.truncated == c.at("truncated").get<bool>(),
                       name + ": wrong truncation flag");
                EXPECT(parsed.emotions.at(0).label == c.at("first_label").get<std::string>(),
                       name + ": wrong first label");
            } else {
                EXPECT(false, name + ": expected " + expect + " outcome, parse succeeded");
            }
        } catch (const RangeError& e) {
            EXPECT(expect == "range", name + ": unexpected range error");
            if (expect == "range")
                EXPECT(e.field == c.at("field").get<std::string>(),
                       name + ": wrong field \"" + e.field + "\"");
        } catch (const DuplicateLabelError& e) {
            EXPECT(expect == "duplicate", name + ": unexpected duplicate error");
            if (expect == "duplicate")
                EXPECT(e.label == c.at("label").get<std::string>(),
                       name + ": wrong label \"" + e.label + "\"");
        } catch (const ParseError&) {
            EXPECT(expect == "parse", name + ": unexpected parse error");
        }
    }
    EXPECT(cases == 20, "fixture set has " + std::to_string(cases) + " cases, wanted 20");
    report(8, "all 20 malformed response fixtures hit their documented outcome",
           ok, elapsed_ms(start));
}

} // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    if (g_failures != 0) {
        std::cout << g_failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all 8 criteria passed\n";
    return 0;
}

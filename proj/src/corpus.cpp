#include "affectdyn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "affectdyn/errors.hpp"
#include "affectdyn/timeutil.hpp"

namespace affectdyn {

using nlohmann::json;

const char* to_string(Role role) {
    return role == Role::student ? "student" : "tutor";
}

std::optional<Role> role_from_string(const std::string& s) {
    if (s == "student") return Role::student;
    if (s == "tutor") return Role::tutor;
    return std::nullopt;
}

std::optional<RoleFilter> role_filter_from_string(const std::string& s) {
    if (s == "student") return RoleFilter::student;
    if (s == "tutor") return RoleFilter::tutor;
    if (s == "all") return RoleFilter::all;
    return std::nullopt;
}

bool role_matches(Role role, RoleFilter filter) {
    switch (filter) {
    case RoleFilter::student: return role == Role::student;
    case RoleFilter::tutor: return role == Role::tutor;
    case RoleFilter::all: return true;
    }
    return false;
}

std::int64_t whitespace_token_count(const std::string& text) {
    std::int64_t count = 0;
    bool in_token = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++count;
        }
    }
    return count;
}

namespace {

[[noreturn]] void line_error(size_t line, const std::string& field, const std::string& message) {
    throw DataError("line " + std::to_string(line) + ": field \"" + field + "\": " + message);
}

std::string require_string(const json& rec, const char* field, size_t line) {
    auto it = rec.find(field);
    if (it == rec.end()) line_error(line, field, "missing");
    if (!it->is_string()) line_error(line, field, "expected a string");
    return it->get<std::string>();
}

std::int64_t optional_count(const json& rec, const char* field, size_t line,
                            std::int64_t fallback) {
    auto it = rec.find(field);
    if (it == rec.end() || it->is_null()) return fallback;
    if (!it->is_number_integer())
        line_error(line, field, "expected a non-negative integer");
    const auto v = it->get<std::int64_t>();
    if (v < 0) line_error(line, field, "must be non-negative, got " + std::to_string(v));
    return v;
}

} // namespace

std::vector<Turn> parse_corpus(std::istream& in) {
    std::vector<Turn> turns;
    std::unordered_map<std::string, size_t> first_line_of_id;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("line " + std::to_string(line_no) +
                            ": not a valid JSON record: " + e.what());
        }
        if (!rec.is_object())
            throw DataError("line " + std::to_string(line_no) + ": record must be a JSON object");

        Turn turn;
        turn.turn_id = require_string(rec, "turn_id", line_no);
        if (turn.turn_id.empty()) line_error(line_no, "turn_id", "must be non-empty");
        auto [it, inserted] = first_line_of_id.emplace(turn.turn_id, line_no);
        if (!inserted)
            line_error(line_no, "turn_id",
                       "duplicate turn_id \"" + turn.turn_id + "\" (first seen at line " +
                           std::to_string(it->second) + ")");

        turn.participant_id = require_string(rec, "participant_id", line_no);
        if (turn.participant_id.empty()) line_error(line_no, "participant_id", "must be non-empty");

        const std::string stamp = require_string(rec, "timestamp", line_no);
        try {
            turn.timestamp_ms = parse_rfc3339_ms(stamp);
        } catch (const std::invalid_argument& e) {
            line_error(line_no, "timestamp", e.what());
        }

        const std::string role_text = require_string(rec, "role", line_no);
        auto role = role_from_string(role_text);
        if (!role)
            line_error(line_no, "role",
                       "must be \"student\" or \"tutor\", got \"" + role_text + "\"");
        turn.role = *role;

        auto text_it = rec.find("text");
        if (text_it == rec.end()) line_error(line_no, "text", "missing");
        if (!text_it->is_string()) line_error(line_no, "text", "expected a string");
        turn.text = text_it->get<std::string>();

        turn.code_snippet_count = optional_count(rec, "code_snippet_count", line_no, 0);
        turn.token_count =
            optional_count(rec, "token_count", line_no, whitespace_token_count(turn.text));

        turns.push_back(std::move(turn));
    }

    std::stable_sort(turns.begin(), turns.end(), [](const Turn& a, const Turn& b) {
        if (a.participant_id != b.participant_id) return a.participant_id < b.participant_id;
        return a.timestamp_ms < b.timestamp_ms;
    });
    return turns;
}

std::vector<Turn> parse_corpus_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open input file: " + path);
    return parse_corpus(in);
}

std::vector<Session> segment_sessions(const std::vector<Turn>& turns, double gap_minutes) {
    if (gap_minutes <= 0.0) throw std::invalid_argument("segment_sessions: gap_minutes must be positive");

    // Sorted-input check: participants must form contiguous blocks with
    // non-decreasing timestamps inside each block.
    std::unordered_map<std::string, size_t> seen_block;
    for (size_t i = 0; i < turns.size(); ++i) {
        if (i == 0 || turns[i].participant_id != turns[i - 1].participant_id) {
            auto [it, inserted] = seen_block.emplace(turns[i].participant_id, i);
            if (!inserted)
                throw DataError("segment_sessions: turns not sorted by (participant_id, timestamp): "
                                "participant \"" + turns[i].participant_id +
                                "\" appears in more than one block");
        } else if (turns[i].timestamp_ms < turns[i - 1].timestamp_ms) {
            throw DataError("segment_sessions: turns not sorted by (participant_id, timestamp) near "
                            "turn \"" + turns[i].turn_id + "\"");
        }
    }

    const double gap_ms = gap_minutes * 60000.0;
    std::vector<Session> sessions;
    size_t i = 0;
    while (i < turns.size()) {
        const std::string& participant = turns[i].participant_id;
        int index_within_participant = 0;
        size_t start = i;
        for (size_t j = i; j < turns.size() && turns[j].participant_id == participant; ++j) {
            const bool opens_new = j > start &&
                static_cast<double>(turns[j].timestamp_ms - turns[j - 1].timestamp_ms) >= gap_ms;
            if (opens_new) {
                ++index_within_participant;
                Session s;
                s.participant_id = participant;
                s.session_id = participant + "-s" + std::to_string(index_within_participant);
                for (size_t k = start; k < j; ++k) s.turn_ids.push_back(turns[k].turn_id);
                s.duration_minutes =
                    static_cast<double>(turns[j - 1].timestamp_ms - turns[start].timestamp_ms) /
                    60000.0;
                sessions.push_back(std::move(s));
                start = j;
            }
            i = j + 1;
        }
        ++index_within_participant;
        Session s;
        s.participant_id = participant;
        s.session_id = participant + "-s" + std::to_string(index_within_participant);
        for (size_t k = start; k < i; ++k) s.turn_ids.push_back(turns[k].turn_id);
        s.duration_minutes =
            static_cast<double>(turns[i - 1].timestamp_ms - turns[start].timestamp_ms) / 60000.0;
        sessions.push_back(std::move(s));
    }
    return sessions;
}

namespace {

struct ParticipantAgg {
    std::int64_t turns = 0;
    std::int64_t tokens = 0;
    std::int64_t code_snippets = 0;
    std::int64_t sessions = 0;
    double session_minutes_sum = 0.0;
    std::int64_t first_ms = 0;
    std::int64_t last_ms = 0;
    std::vector<std::int64_t> day_numbers;
};

std::optional<MedianIqr> rollup(const std::vector<double>& values) {
    if (values.empty()) return std::nullopt;
    return median_iqr(values);
}

} // namespace

CorpusSummary summarize_corpus(const std::vector<Turn>& turns,
                               const std::vector<Session>& sessions) {
    CorpusSummary out;
    std::unordered_map<std::string, const Turn*> by_id;
    for (const auto& t : turns) by_id.emplace(t.turn_id, &t);

    std::map<std::string, ParticipantAgg> per_participant;
    for (const auto& t : turns) {
        auto& agg = per_participant[t.participant_id];
        if (agg.turns == 0) {
            agg.first_ms = t.timestamp_ms;
            agg.last_ms = t.timestamp_ms;
        }
        agg.turns += 1;
        agg.tokens += t.token_count;
        agg.code_snippets += t.code_snippet_count;
        agg.first_ms = std::min(agg.first_ms, t.timestamp_ms);
        agg.last_ms = std::max(agg.last_ms, t.timestamp_ms);
        agg.day_numbers.push_back(utc_day_number(t.timestamp_ms));
    }

    std::vector<double> session_turn_counts;
    std::vector<double> session_minutes;
    for (const auto& s : sessions) {
        if (s.turn_ids.empty()) throw DataError("summarize_corpus: session \"" + s.session_id +
                                                "\" has no turns");
        for (const auto& id : s.turn_ids) {
            if (!by_id.count(id))
                throw DataError("summarize_corpus: session \"" + s.session_id +
                                "\" references unknown turn_id \"" + id + "\"");
        }
        auto& agg = per_participant[s.participant_id];
        agg.sessions += 1;
        agg.session_minutes_sum += s.duration_minutes;
        session_turn_counts.push_back(static_cast<double>(s.turn_ids.size()));
        session_minutes.push_back(s.duration_minutes);
        out.total_session_minutes += s.duration_minutes;
    }

    out.participants = static_cast<std::int64_t>(per_participant.size());
    out.sessions = static_cast<std::int64_t>(sessions.size());
    out.turns = static_cast<std::int64_t>(turns.size());

    std::vector<double> pp_sessions, pp_span, pp_days, pp_turns, pp_tps, pp_tokens, pp_tokpt,
        pp_snip, pp_snippt, pp_sessmin;
    std::vector<std::int64_t> all_days;
    for (auto& [id, agg] : per_participant) {
        out.tokens += agg.tokens;
        out.code_snippets += agg.code_snippets;
        pp_turns.push_back(static_cast<double>(agg.turns));
        pp_tokens.push_back(static_cast<double>(agg.tokens));
        pp_snip.push_back(static_cast<double>(agg.code_snippets));
        pp_tokpt.push_back(static_cast<double>(agg.tokens) / static_cast<double>(agg.turns));
        pp_snippt.push_back(static_cast<double>(agg.code_snippets) /
                            static_cast<double>(agg.turns));
        pp_sessions.push_back(static_cast<double>(agg.sessions));
        if (agg.sessions > 0) {
            pp_tps.push_back(static_cast<double>(agg.turns) / static_cast<double>(agg.sessions));
            pp_sessmin.push_back(agg.session_minutes_sum / static_cast<double>(agg.sessions));
        }
        pp_span.push_back(static_cast<double>(utc_day_number(agg.last_ms) -
                                              utc_day_number(agg.first_ms)));
        std::sort(agg.day_numbers.begin(), agg.day_numbers.end());
        agg.day_numbers.erase(std::unique(agg.day_numbers.begin(), agg.day_numbers.end()),
                              agg.day_numbers.end());
        pp_days.push_back(static_cast<double>(agg.day_numbers.size()));
        all_days.insert(all_days.end(), agg.day_numbers.begin(), agg.day_numbers.end());
    }

    if (!turns.empty()) {
        auto [min_it, max_it] = std::minmax_element(
            turns.begin(), turns.end(),
            [](const Turn& a, const Turn& b) { return a.timestamp_ms < b.timestamp_ms; });
        out.first_activity_ms = min_it->timestamp_ms;
        out.last_activity_ms = max_it->timestamp_ms;
        out.span_days = utc_day_number(max_it->timestamp_ms) - utc_day_number(min_it->timestamp_ms);
        std::sort(all_days.begin(), all_days.end());
        all_days.erase(std::unique(all_days.begin(), all_days.end()), all_days.end());
        out.days_active = static_cast<std::int64_t>(all_days.size());
    }

    out.pp_sessions = rollup(pp_sessions);
    out.pp_span_days = rollup(pp_span);
    out.pp_days_active = rollup(pp_days);
    out.pp_turns = rollup(pp_turns);
    out.pp_turns_per_session = rollup(pp_tps);
    out.pp_tokens = rollup(pp_tokens);
    out.pp_tokens_per_turn = rollup(pp_tokpt);
    out.pp_code_snippets = rollup(pp_snip);
    out.pp_code_snippets_per_turn = rollup(pp_snippt);
    out.pp_session_minutes = rollup(pp_sessmin);
    out.ps_turns = rollup(session_turn_counts);
    out.ps_minutes = rollup(session_minutes);

    std::vector<double> per_turn_tokens;
    per_turn_tokens.reserve(turns.size());
    for (const auto& t : turns) per_turn_tokens.push_back(static_cast<double>(t.token_count));
    out.pt_tokens = rollup(per_turn_tokens);
    return out;
}

} // namespace affectdyn

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "affectdyn/stats.hpp"

namespace affectdyn {

enum class Role { student, tutor };

const char* to_string(Role role);
std::optional<Role> role_from_string(const std::string& s);

enum class RoleFilter { student, tutor, all };

std::optional<RoleFilter> role_filter_from_string(const std::string& s);
bool role_matches(Role role, RoleFilter filter);

/// One utterance from the dialogue log. Timestamps are UTC epoch
/// milliseconds; the input format carries RFC 3339 strings.
struct Turn {
    std::string turn_id;
    std::string participant_id;
    std::int64_t timestamp_ms = 0;
    Role role = Role::student;
    std::string text;
    std::int64_t code_snippet_count = 0;
    std::int64_t token_count = 0;
};

/// Maximal run of one participant's turns whose inter-turn gaps stay below
/// the inactivity threshold. turn_ids are in ascending timestamp order.
struct Session {
    std::string session_id;
    std::string participant_id;
    std::vector<std::string> turn_ids;
    double duration_minutes = 0.0;
};

struct CorpusSummary {
    std::int64_t participants = 0;
    std::int64_t sessions = 0;
    std::int64_t turns = 0;
    std::int64_t tokens = 0;
    std::int64_t code_snippets = 0;
    // Whole-calendar-day difference between first and last activity (UTC).
    std::int64_t span_days = 0;
    std::int64_t days_active = 0;
    double total_session_minutes = 0.0;
    std::optional<std::int64_t> first_activity_ms;
    std::optional<std::int64_t> last_activity_ms;

    // Median/(q1,q3) across participants. "per turn"/"per session" metrics
    // are the participant's mean.
    std::optional<MedianIqr> pp_sessions;
    std::optional<MedianIqr> pp_span_days;
    std::optional<MedianIqr> pp_days_active;
    std::optional<MedianIqr> pp_turns;
    std::optional<MedianIqr> pp_turns_per_session;
    std::optional<MedianIqr> pp_tokens;
    std::optional<MedianIqr> pp_tokens_per_turn;
    std::optional<MedianIqr> pp_code_snippets;
    std::optional<MedianIqr> pp_code_snippets_per_turn;
    std::optional<MedianIqr> pp_session_minutes;

    // Median/(q1,q3) across sessions and across turns.
    std::optional<MedianIqr> ps_turns;
    std::optional<MedianIqr> ps_minutes;
    std::optional<MedianIqr> pt_tokens;
};

/// Reads line-delimited JSON turn records. Unknown fields are ignored.
/// Returns turns sorted by (participant_id, timestamp); ties keep input
/// order. Throws DataError naming the line number and offending field;
/// duplicate turn_id errors name both lines. A record without token_count
/// gets a whitespace-split token count of its text.
std::vector<Turn> parse_corpus(std::istream& in);
std::vector<Turn> parse_corpus_file(const std::string& path);

/// Splits each participant's turns into sessions. A gap of gap_minutes or
/// more (threshold inclusive) starts a new session. Input must already be
/// sorted by (participant_id, timestamp); unsorted input is a DataError,
/// never silently re-sorted.
std::vector<Session> segment_sessions(const std::vector<Turn>& turns, double gap_minutes = 60.0);

/// Overall counts plus median/IQR rollups. Sessions must reference only
/// known turn_ids (DataError otherwise). Empty corpus yields zero counts
/// and absent rollups.
CorpusSummary summarize_corpus(const std::vector<Turn>& turns,
                               const std::vector<Session>& sessions);

std::int64_t whitespace_token_count(const std::string& text);

} // namespace affectdyn

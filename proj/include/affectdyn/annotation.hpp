#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "affectdyn/corpus.hpp"

namespace affectdyn {

inline constexpr int kScoreMin = 1;
inline constexpr int kScoreMax = 9;
inline constexpr int kDefaultKMax = 5;

/// One ranked entry of a backend's output: a free-text emotion label plus
/// integer valence/arousal/learning ratings on the shared 1-9 scale.
struct RankedEmotion {
    std::string label; // normalized: trimmed, lowercased, inner whitespace collapsed
    int valence = 0;
    int arousal = 0;
    int learning = 0;
    int rank = 0; // 1-based, contiguous within an annotation
};

/// One backend's full output for one turn.
struct ModelAnnotation {
    std::string model_id;
    std::string turn_id;
    std::vector<RankedEmotion> emotions;
};

struct AnnotationError : std::runtime_error {
    explicit AnnotationError(const std::string& what) : std::runtime_error(what) {}
};

/// No machine-parseable object could be extracted, or the object violates
/// the response schema.
struct ParseError : AnnotationError {
    explicit ParseError(const std::string& what) : AnnotationError(what) {}
};

/// A score field lies outside [1, 9] or is not an integer.
struct RangeError : AnnotationError {
    RangeError(std::string field_name, const std::string& what)
        : AnnotationError(what), field(std::move(field_name)) {}
    std::string field;
};

/// The same normalized label appears twice within one annotation.
struct DuplicateLabelError : AnnotationError {
    DuplicateLabelError(std::string dup, const std::string& what)
        : AnnotationError(what), label(std::move(dup)) {}
    std::string label;
};

/// Trim, lowercase (ASCII), collapse internal whitespace runs to one space.
std::string normalize_label(const std::string& raw);

/// Throws AnnotationError unless ranks are 1..K contiguous, scores are all
/// within [1, 9], and normalized labels are distinct and non-empty.
void validate_annotation(const ModelAnnotation& ann);

/// FNV-1a 64-bit, stable across platforms and runs.
std::uint64_t fnv1a64(const std::string& data);
std::string to_hex(std::uint64_t value);

// Versioned annotator instructions: the system prompt is fixed across
// backends; only the user section varies with the turn.
extern const char* const kSystemPromptV1;
inline constexpr const char* kPromptVersionV1 = "v1";

struct Prompt {
    std::string system;
    std::string user;
    std::string version;
    std::string hash; // hex digest identifying (system template, context window)
};

struct PromptTemplate {
    std::string system = kSystemPromptV1;
    std::string version = kPromptVersionV1;
    int context_window = 0; // previous turns included in the user section

    std::string hash() const;
};

PromptTemplate load_prompt_template(const std::string& path, int context_window = 0);

/// Renders the shared prompt for one turn. context holds the preceding
/// turns of the same dialogue, oldest first; at most
/// tmpl.context_window of its latest entries are included. Empty turn
/// text is an AnnotationError.
Prompt build_prompt(const Turn& turn, const PromptTemplate& tmpl = PromptTemplate{},
                    const std::vector<Turn>& context = {});

struct ParsedResponse {
    std::vector<RankedEmotion> emotions;
    bool truncated = false; // more than k_max entries were supplied
};

/// Extracts the first well-formed JSON object from a raw completion
/// (surrounding prose and code fences are skipped), then validates it
/// against the response schema. Lists longer than k_max are truncated to
/// the first k_max entries and flagged, not rejected.
ParsedResponse parse_response(const std::string& raw, int k_max = kDefaultKMax);

/// Deterministic stand-in for a live backend: emotions are derived from a
/// stable hash of (turn_id, model_id, seed). Same inputs, same output,
/// on any platform.
ModelAnnotation mock_annotate(const std::string& turn_id, const std::string& model_id,
                              std::uint64_t seed);

} // namespace affectdyn

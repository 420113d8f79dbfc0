#include "affectdyn/annotation.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace affectdyn {

using nlohmann::json;

const char* const kSystemPromptV1 =
    "You are an affect annotation system for tutoring dialogue.\n"
    "Rate the single dialogue turn given in the user message.\n"
    "Respond with exactly one JSON object and nothing else, shaped as:\n"
    "{\"emotions\": [{\"label\": \"<emotion word>\", \"valence\": <integer>, "
    "\"arousal\": <integer>, \"learning\": <integer>}]}\n"
    "List between 1 and 5 emotions, ordered from most to least applicable,\n"
    "with no label repeated. Each entry carries three integer ratings from 1\n"
    "(lowest) to 9 (highest): valence (unpleasant to pleasant), arousal (calm\n"
    "to activated), and learning (hinders understanding to advances\n"
    "understanding). Choose whatever emotion words fit best; \"neutral\" is\n"
    "the only suggested example.\n";

std::string normalize_label(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (unsigned char c : raw) {
        if (std::isspace(c)) {
            if (!out.empty()) pending_space = true;
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    return out;
}

void validate_annotation(const ModelAnnotation& ann) {
    if (ann.emotions.empty())
        throw AnnotationError("annotation for turn \"" + ann.turn_id + "\" has no emotions");
    std::set<std::string> labels;
    for (size_t i = 0; i < ann.emotions.size(); ++i) {
        const auto& e = ann.emotions[i];
        if (e.rank != static_cast<int>(i) + 1)
            throw AnnotationError("annotation for turn \"" + ann.turn_id +
                                  "\": ranks not contiguous at position " + std::to_string(i + 1));
        for (auto [value, name] : {std::pair{e.valence, "valence"},
                                   std::pair{e.arousal, "arousal"},
                                   std::pair{e.learning, "learning"}}) {
            if (value < kScoreMin || value > kScoreMax)
                throw RangeError(name, "annotation for turn \"" + ann.turn_id + "\": " + name +
                                           " out of range: " + std::to_string(value));
        }
        const std::string norm = normalize_label(e.label);
        if (norm.empty())
            throw AnnotationError("annotation for turn \"" + ann.turn_id +
                                  "\": empty label at rank " + std::to_string(e.rank));
        if (norm != e.label)
            throw AnnotationError("annotation for turn \"" + ann.turn_id +
                                  "\": label not normalized: \"" + e.label + "\"");
        if (!labels.insert(norm).second)
            throw DuplicateLabelError(norm, "annotation for turn \"" + ann.turn_id +
                                                "\": duplicate label \"" + norm + "\"");
    }
}

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

std::string PromptTemplate::hash() const {
    return to_hex(fnv1a64(system + "\x1f" + version + "\x1f" + std::to_string(context_window)));
}

PromptTemplate load_prompt_template(const std::string& path, int context_window) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AnnotationError("cannot open prompt file: " + path);
    std::ostringstream body;
    body << in.rdbuf();
    PromptTemplate tmpl;
    tmpl.system = body.str();
    if (tmpl.system.empty()) throw AnnotationError("prompt file is empty: " + path);
    // Version = file stem, so a renamed prompt is a new version.
    std::string name = path;
    if (auto slash = name.find_last_of("/\\"); slash != std::string::npos)
        name = name.substr(slash + 1);
    if (auto dot = name.find_last_of('.'); dot != std::string::npos && dot > 0)
        name = name.substr(0, dot);
    tmpl.version = name;
    tmpl.context_window = context_window;
    return tmpl;
}

Prompt build_prompt(const Turn& turn, const PromptTemplate& tmpl,
                    const std::vector<Turn>& context) {
    if (turn.text.empty())
        throw AnnotationError("cannot build prompt for turn \"" + turn.turn_id +
                              "\": empty text");
    std::ostringstream user;
    if (tmpl.context_window > 0 && !context.empty()) {
        const size_t take = std::min(context.size(), static_cast<size_t>(tmpl.context_window));
        user << "Preceding turns, oldest first:\n";
        for (size_t i = context.size() - take; i < context.size(); ++i) {
            user << "[" << to_string(context[i].role) << "] " << context[i].text << "\n";
        }
        user << "\n";
    }
    user << "Dialogue turn (speaker: " << to_string(turn.role) << "):\n" << turn.text;
    Prompt p;
    p.system = tmpl.system;
    p.user = user.str();
    p.version = tmpl.version;
    p.hash = tmpl.hash();
    return p;
}

namespace {

const json* find_first_object(const std::string& raw, json& storage) {
    for (size_t start = raw.find('{'); start != std::string::npos;
         start = raw.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (size_t i = start; i < raw.size(); ++i) {
            const char c = raw[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}') {
                --depth;
                if (depth == 0) {
                    const auto candidate =
                        json::parse(raw.substr(start, i - start + 1), nullptr, false);
                    if (!candidate.is_discarded() && candidate.is_object()) {
                        storage = candidate;
                        return &storage;
                    }
                    break; // balanced but unparseable; try the next '{'
                }
            }
        }
    }
    return nullptr;
}

int score_field(const json& entry, const char* name, size_t index) {
    const std::string where = "emotions[" + std::to_string(index) + "]." + name;
    auto it = entry.find(name);
    if (it == entry.end()) throw ParseError("missing field " + where);
    if (it->is_number_integer()) {
        const auto v = it->get<std::int64_t>();
        if (v < kScoreMin || v > kScoreMax)
            throw RangeError(where, where + " out of range [1, 9]: " + std::to_string(v));
        return static_cast<int>(v);
    }
    if (it->is_number_float()) {
        const double v = it->get<double>();
        if (v == std::floor(v) && v >= kScoreMin && v <= kScoreMax) return static_cast<int>(v);
        throw RangeError(where, where + " must be an integer in [1, 9], got " +
                                    it->dump());
    }
    throw RangeError(where, where + " must be an integer in [1, 9], got " + it->dump());
}

} // namespace

ParsedResponse parse_response(const std::string& raw, int k_max) {
    if (k_max < 1) throw std::invalid_argument("parse_response: k_max must be >= 1");
    json obj;
    if (find_first_object(raw, obj) == nullptr)
        throw ParseError("no parseable JSON object in response");

    auto emotions_it = obj.find("emotions");
    if (emotions_it == obj.end() || !emotions_it->is_array())
        throw ParseError("response object has no \"emotions\" array");
    if (emotions_it->empty()) throw ParseError("\"emotions\" array is empty");

    ParsedResponse out;
    size_t count = emotions_it->size();
    if (count > static_cast<size_t>(k_max)) {
        count = static_cast<size_t>(k_max);
        out.truncated = true;
    }

    std::set<std::string> seen;
    for (size_t i = 0; i < count; ++i) {
        const json& entry = (*emotions_it)[i];
        if (!entry.is_object())
            throw ParseError("emotions[" + std::to_string(i) + "] is not an object");
        auto label_it = entry.find("label");
        if (label_it == entry.end() || !label_it->is_string())
            throw ParseError("emotions[" + std::to_string(i) + "].label missing or not a string");
        RankedEmotion e;
        e.label = normalize_label(label_it->get<std::string>());
        if (e.label.empty())
            throw ParseError("emotions[" + std::to_string(i) + "].label empty after trimming");
        if (!seen.insert(e.label).second)
            throw DuplicateLabelError(e.label, "duplicate label \"" + e.label + "\" in response");
        e.valence = score_field(entry, "valence", i);
        e.arousal = score_field(entry, "arousal", i);
        e.learning = score_field(entry, "learning", i);
        if (auto rank_it = entry.find("rank"); rank_it != entry.end()) {
            if (!rank_it->is_number_integer() ||
                rank_it->get<std::int64_t>() != static_cast<std::int64_t>(i) + 1)
                throw ParseError("emotions[" + std::to_string(i) + "].rank must equal " +
                                 std::to_string(i + 1));
        }
        e.rank = static_cast<int>(i) + 1;
        out.emotions.push_back(std::move(e));
    }
    return out;
}

namespace {

// splitmix64; fixed arithmetic, never std::hash.
std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

const std::array<const char*, 12> kMockLabels = {
    "neutral",     "confusion", "curiosity", "frustration", "joy",    "anticipation",
    "puzzlement",  "boredom",   "anxiety",   "calm",        "relief", "surprise",
};

} // namespace

ModelAnnotation mock_annotate(const std::string& turn_id, const std::string& model_id,
                              std::uint64_t seed) {
    ModelAnnotation ann;
    ann.model_id = model_id;
    ann.turn_id = turn_id;
    std::uint64_t state =
        fnv1a64(turn_id + "\x1f" + model_id + "\x1f" + std::to_string(seed));
    const int k = 1 + static_cast<int>(splitmix64(state) % kDefaultKMax);

    std::array<size_t, kMockLabels.size()> order{};
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = 0; i < static_cast<size_t>(k); ++i) {
        const size_t j = i + splitmix64(state) % (order.size() - i);
        std::swap(order[i], order[j]);
    }

    for (int r = 1; r <= k; ++r) {
        RankedEmotion e;
        e.label = kMockLabels[order[static_cast<size_t>(r - 1)]];
        e.valence = 1 + static_cast<int>(splitmix64(state) % 9);
        e.arousal = 1 + static_cast<int>(splitmix64(state) % 9);
        e.learning = 1 + static_cast<int>(splitmix64(state) % 9);
        e.rank = r;
        ann.emotions.push_back(std::move(e));
    }
    return ann;
}

} // namespace affectdyn

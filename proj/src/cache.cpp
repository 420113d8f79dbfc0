#include "affectdyn/cache.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "affectdyn/errors.hpp"

namespace affectdyn {

using ordered_json = nlohmann::ordered_json;
using nlohmann::json;

ModelAnnotation AnnotationRecord::to_annotation() const {
    ModelAnnotation ann;
    ann.model_id = model_id;
    ann.turn_id = turn_id;
    ann.emotions = emotions;
    return ann;
}

std::string cache_key(const std::string& turn_id, const std::string& model_id,
                      const std::string& model_name, const std::string& prompt_hash) {
    return turn_id + "\x1f" + model_id + "\x1f" + model_name + "\x1f" + prompt_hash;
}

std::string record_to_jsonl(const AnnotationRecord& rec) {
    ordered_json doc;
    doc["turn_id"] = rec.turn_id;
    doc["model_id"] = rec.model_id;
    doc["model_name"] = rec.model_name;
    doc["prompt_hash"] = rec.prompt_hash;
    doc["prompt_version"] = rec.prompt_version;
    doc["status"] = rec.status;
    if (rec.ok()) {
        ordered_json emotions = ordered_json::array();
        for (const auto& e : rec.emotions) {
            emotions.push_back({{"rank", e.rank},
                                {"label", e.label},
                                {"valence", e.valence},
                                {"arousal", e.arousal},
                                {"learning", e.learning}});
        }
        doc["emotions"] = std::move(emotions);
        if (rec.truncated) doc["truncated"] = true;
    } else {
        doc["cause"] = rec.cause;
    }
    return doc.dump();
}

AnnotationRecord record_from_jsonl(const std::string& line) {
    const auto doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw DataError("cache record is not a JSON object: " + line);
    AnnotationRecord rec;
    try {
        rec.turn_id = doc.at("turn_id").get<std::string>();
        rec.model_id = doc.at("model_id").get<std::string>();
        rec.model_name = doc.value("model_name", "");
        rec.prompt_hash = doc.value("prompt_hash", "");
        rec.prompt_version = doc.value("prompt_version", "");
        rec.status = doc.at("status").get<std::string>();
        rec.truncated = doc.value("truncated", false);
        rec.cause = doc.value("cause", "");
        if (doc.contains("emotions")) {
            for (const auto& e : doc.at("emotions")) {
                RankedEmotion emotion;
                emotion.rank = e.at("rank").get<int>();
                emotion.label = e.at("label").get<std::string>();
                emotion.valence = e.at("valence").get<int>();
                emotion.arousal = e.at("arousal").get<int>();
                emotion.learning = e.at("learning").get<int>();
                rec.emotions.push_back(std::move(emotion));
            }
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed cache record: ") + e.what());
    }
    if (rec.status != "ok" && rec.status != "failed")
        throw DataError("cache record has unknown status \"" + rec.status + "\"");
    if (rec.ok()) {
        // Persisted annotations must still satisfy the invariants.
        try {
            validate_annotation(rec.to_annotation());
        } catch (const AnnotationError& e) {
            throw DataError(std::string("cache record fails validation on read: ") + e.what());
        }
    }
    return rec;
}

namespace {

std::string sanitize_for_path(const std::string& name) {
    std::string out;
    out.reserve(name.size());
    for (char c : name) {
        const bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                          (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
        out.push_back(safe ? c : '_');
    }
    return out.empty() ? std::string("provider") : out;
}

} // namespace

AnnotationCache::AnnotationCache(std::filesystem::path root, int shards)
    : root_(std::move(root)), shards_(shards) {
    if (shards_ < 1) throw std::invalid_argument("AnnotationCache: shards must be >= 1");
    for (int i = 0; i < shards_; ++i) shard_mu_.push_back(std::make_unique<std::mutex>());
}

std::filesystem::path AnnotationCache::shard_path(const AnnotationRecord& rec) const {
    const auto shard = fnv1a64(rec.turn_id) % static_cast<std::uint64_t>(shards_);
    std::string name = std::to_string(shard);
    if (name.size() < 2) name.insert(name.begin(), '0');
    return root_ / sanitize_for_path(rec.model_id) / ("shard-" + name + ".jsonl");
}

void AnnotationCache::open() {
    std::filesystem::create_directories(root_);
    auto records = load_all(root_);
    std::lock_guard lock(index_mu_);
    for (auto& rec : records) {
        const auto key = cache_key(rec.turn_id, rec.model_id, rec.model_name, rec.prompt_hash);
        index_.insert_or_assign(key, std::move(rec));
    }
}

std::optional<AnnotationRecord> AnnotationCache::lookup(const std::string& key) const {
    std::lock_guard lock(index_mu_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

void AnnotationCache::put(const AnnotationRecord& rec) {
    const auto path = shard_path(rec);
    const auto shard = fnv1a64(rec.turn_id) % static_cast<std::uint64_t>(shards_);
    {
        std::lock_guard file_lock(*shard_mu_[static_cast<size_t>(shard)]);
        std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::app | std::ios::binary);
        if (!out) throw DataError("cannot open cache shard for append: " + path.string());
        out << record_to_jsonl(rec) << '\n';
        out.flush();
        if (!out) throw DataError("write to cache shard failed: " + path.string());
    }
    std::lock_guard lock(index_mu_);
    index_.insert_or_assign(cache_key(rec.turn_id, rec.model_id, rec.model_name, rec.prompt_hash),
                            rec);
}

size_t AnnotationCache::size() const {
    std::lock_guard lock(index_mu_);
    return index_.size();
}

std::vector<AnnotationRecord> AnnotationCache::load_all(const std::filesystem::path& dir) {
    std::vector<AnnotationRecord> out;
    if (!std::filesystem::exists(dir)) return out;

    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    for (const auto& file : files) {
        std::ifstream in(file, std::ios::binary);
        if (!in) throw DataError("cannot open cache file: " + file.string());
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                out.push_back(record_from_jsonl(line));
            } catch (const DataError& e) {
                throw DataError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
    }
    return out;
}

} // namespace affectdyn

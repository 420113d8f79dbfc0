#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "affectdyn/annotation.hpp"

namespace affectdyn {

/// One persisted annotation attempt. status is "ok" or "failed"; failed
/// records carry a cause and no emotions, so a warm cache never re-issues
/// requests for pairs that already failed.
struct AnnotationRecord {
    std::string turn_id;
    std::string model_id;
    std::string model_name;
    std::string prompt_hash;
    std::string prompt_version;
    std::string status; // "ok" | "failed"
    std::vector<RankedEmotion> emotions;
    std::string cause;
    bool truncated = false;

    bool ok() const { return status == "ok"; }
    ModelAnnotation to_annotation() const;
};

std::string cache_key(const std::string& turn_id, const std::string& model_id,
                      const std::string& model_name, const std::string& prompt_hash);

std::string record_to_jsonl(const AnnotationRecord& rec);
AnnotationRecord record_from_jsonl(const std::string& line);

/// Append-only store of AnnotationRecords, one JSONL file per
/// (model_id, shard) under a root directory. Keyed by
/// (turn_id, model_id, model_name, prompt_hash); a prompt change misses
/// the cache by construction. put() makes the record durable and indexed
/// before returning; writers of distinct keys may run concurrently.
class AnnotationCache {
public:
    explicit AnnotationCache(std::filesystem::path root, int shards = 8);

    /// Loads every record already on disk into the index. ok-records are
    /// re-validated; a corrupt record is a DataError.
    void open();

    std::optional<AnnotationRecord> lookup(const std::string& key) const;
    void put(const AnnotationRecord& rec);
    size_t size() const;

    const std::filesystem::path& root() const { return root_; }

    /// Reads all records under a directory tree (any *.jsonl layout), with
    /// the same validation as open().
    static std::vector<AnnotationRecord> load_all(const std::filesystem::path& dir);

private:
    std::filesystem::path shard_path(const AnnotationRecord& rec) const;

    std::filesystem::path root_;
    int shards_;
    mutable std::mutex index_mu_;
    std::map<std::string, AnnotationRecord> index_;
    std::vector<std::unique_ptr<std::mutex>> shard_mu_;
};

} // namespace affectdyn

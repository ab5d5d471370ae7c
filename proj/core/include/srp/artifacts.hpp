#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "srp/rdb.hpp"

namespace srp {

/// Content hash of a database directory: schema.json plus every table CSV.
std::uint64_t hash_database_dir(const std::filesystem::path& dir, const Schema& schema);

struct StageRecord {
    std::string stage;
    std::string input_hash;          // hex
    std::vector<std::string> paths;  // relative to the run directory
    std::int64_t created = 0;        // unix seconds
};

/// Line-oriented record of the offline stages of one output directory.
///
///   config <hex>
///   stage <name> <input hex> <unix seconds> <path> [<path> ...]
class RunManifest {
  public:
    static RunManifest load(const std::filesystem::path& file);
    void save(const std::filesystem::path& file) const;

    const std::string& config_hash() const { return config_hash_; }
    void set_config_hash(std::string hash) { config_hash_ = std::move(hash); }

    const StageRecord* find(const std::string& stage) const;
    /// True when `stage` was recorded with `input_hash` and all its files exist under `dir`.
    bool is_fresh(const std::string& stage, const std::string& input_hash, const std::filesystem::path& dir) const;
    void record(StageRecord record);

    const std::vector<StageRecord>& stages() const { return stages_; }

  private:
    std::string config_hash_;
    std::vector<StageRecord> stages_;
};

}  // namespace srp

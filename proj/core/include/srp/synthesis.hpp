#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "srp/rdb.hpp"

namespace srp {

enum class HopDirection {
    forward,   // from-table holds the FK; join the referenced row
    backward,  // to-table holds the FK referencing from-table; aggregate the group
};

struct Hop {
    std::string from_table;
    std::string fk_table;  // table owning the FK column
    std::string fk_column;
    std::string to_table;
    HopDirection direction = HopDirection::forward;

    bool operator==(const Hop&) const = default;
};

/// FK-PK walk from the target table. Rendered as e.g. `User-user_id<Review+item_id>Item`:
/// `+col>T` joins through the current table's FK `col`, `-col<T` aggregates the
/// rows of T whose FK `col` points at the current row.
struct SynthesisPath {
    std::vector<Hop> hops;

    const std::string& start() const { return hops.front().from_table; }
    const std::string& end() const { return hops.back().to_table; }
    bool aggregates() const;
    std::string to_string() const;
    static SynthesisPath parse(const std::string& text, const Schema& schema);

    bool operator==(const SynthesisPath&) const = default;
};

/// Depth-first enumeration of FK-PK paths from the target table. Tables and FK
/// columns are visited in schema order and no path revisits a table.
std::vector<SynthesisPath> find_synthesis_paths(const Schema& schema, std::size_t max_depth);

enum class AggregatorKind { COUNT, MEAN, MAX, MIN, JOIN_TEXT, MODE, FA };

std::string_view to_string(AggregatorKind kind);
AggregatorKind parse_aggregator(std::string_view name);

/// Category -> occurrence count. Ordered, so iteration is lexicographic.
using FrequencyMap = std::map<std::string, std::int64_t>;

using AggregateResult = std::variant<Value, FrequencyMap>;

/// Applies one aggregator to a group. Missing entries are dropped first; an
/// empty group yields Missing, except COUNT which yields 0.
/// Throws ConfigError when the aggregator does not fit the value kind.
AggregateResult aggregate(std::span<const Value> group, AggregatorKind kind);

// --- Feature tables -------------------------------------------------------------

enum class FeatureKind { numeric, categorical, text, frequency };

/// Provenance of one feature column. Original target-table columns have an
/// empty path and no aggregator; joined columns have a path and no aggregator.
struct FeatureTag {
    std::string path;
    std::string column;
    std::optional<AggregatorKind> aggregator;

    /// `path__column__AGG`; joins use `VALUE` and original columns the bare name.
    std::string header() const;
    static FeatureTag parse_header(const std::string& header);

    bool operator==(const FeatureTag&) const = default;
};

struct FeatureColumn {
    FeatureTag tag;
    FeatureKind kind = FeatureKind::numeric;
    std::vector<Value> values;                            // unless kind == frequency
    std::vector<std::optional<FrequencyMap>> frequencies;  // kind == frequency

    std::size_t size() const { return kind == FeatureKind::frequency ? frequencies.size() : values.size(); }
};

/// Column-major feature matrix aligned with the target table's rows.
struct FeatureTable {
    std::size_t rows = 0;
    std::vector<FeatureColumn> columns;

    const FeatureColumn* find(const FeatureTag& tag) const;
};

/// Feature columns of a table: every numeric, categorical and text column,
/// excluding keys, timestamps and (for the target table) the label.
std::vector<std::size_t> feature_columns(const Database& db, std::size_t table);

/// The target table's own feature columns, in schema order.
FeatureTable original_features(const Database& db);

/// Features of an arbitrary table's rows (used for graph node features).
FeatureTable table_features(const Database& db, std::size_t table);

/// Target-table original features followed by every synthesized column.
/// With `cutoff_aware`, rows of timestamped tables take part only when their
/// timestamp is strictly below the target row's timestamp.
FeatureTable synthesize_features(const Database& db, std::span<const SynthesisPath> paths,
                                 bool cutoff_aware);

/// CSV dump with tagged headers. Frequency cells are JSON objects.
void write_feature_table(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable read_feature_table(const std::filesystem::path& path, const Database& db);

}  // namespace srp

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "srp/rdb.hpp"

namespace srp {

// --- Quantile discretization ------------------------------------------------------

/// Thresholds b_1..b_B of one numeric column; b_B is the column maximum.
struct QuantileBins {
    std::vector<double> thresholds;

    std::size_t bins() const { return thresholds.size(); }
};

/// b_k is the smallest order statistic whose cumulative fraction reaches k/B
/// (lower interpolation). Missing values are ignored; throws DataError when
/// nothing is left and ConfigError when bins < 2.
QuantileBins fit_quantiles(std::span<const Value> column, std::size_t bins);
QuantileBins fit_quantiles(std::vector<double> values, std::size_t bins);

/// Category in 1..B: the smallest k with v <= b_k, clamped to B above b_B.
std::size_t discretize(double v, const QuantileBins& bins);
std::optional<std::size_t> discretize(const Value& v, const QuantileBins& bins);

/// Per numeric feature column (by name) of one table.
struct DiscretizationModel {
    std::map<std::string, QuantileBins> columns;
};

/// Fits thresholds on `visible_rows` only.
DiscretizationModel fit_discretization(const Database& db, std::size_t table,
                                       std::span<const std::size_t> visible_rows, std::size_t bins);

// --- Coded tables and the index -----------------------------------------------------

inline constexpr std::int64_t kMissingCode = -1;

/// Integer-coded feature matrix of one table: every retrieval feature becomes
/// a category code, numeric columns via their quantile bins. Only equality of
/// codes within a column matters.
struct CodedTable {
    std::string table;
    std::vector<std::string> columns;
    std::size_t rows = 0;
    std::vector<std::int64_t> codes;  // row-major, rows x columns.size()
    std::optional<std::vector<std::int64_t>> timestamps;

    std::size_t width() const { return columns.size(); }
    std::int64_t code(std::size_t row, std::size_t column) const { return codes[row * width() + column]; }
};

/// Codes the feature columns of `table` (keys, timestamps and the label are
/// excluded). Numeric columns absent from `model` are coded as Missing.
CodedTable code_table(const Database& db, std::size_t table, const DiscretizationModel& model);

/// Per-column value frequencies of a coded table.
///
/// Besides corpus counts N(x), the index keeps each value's sorted row
/// timestamps so that frequencies can be taken over the rows strictly before a
/// cutoff; time-aware retrieval uses those so that later rows never influence
/// an earlier query.
class RetrievalIndex {
  public:
    RetrievalIndex() = default;
    explicit RetrievalIndex(const CodedTable& table);

    std::size_t rows() const { return rows_; }
    std::size_t columns() const { return columns_.size(); }

    std::size_t count(std::size_t column, std::int64_t code) const;
    std::size_t rows_before(std::int64_t cutoff) const;
    std::size_t count_before(std::size_t column, std::int64_t code, std::int64_t cutoff) const;

    /// Rows holding `code` in `column`, ascending.
    std::span<const std::uint32_t> postings(std::size_t column, std::int64_t code) const;

    /// value -> N(value) for one column (Missing uncounted).
    std::map<std::int64_t, std::size_t> frequencies(std::size_t column) const;

  private:
    struct Entry {
        std::vector<std::uint32_t> rows;
        std::vector<std::int64_t> sorted_timestamps;
    };
    std::size_t rows_ = 0;
    std::vector<std::unordered_map<std::int64_t, Entry>> columns_;
    std::vector<std::int64_t> sorted_timestamps_;
};

RetrievalIndex build_index(const CodedTable& table);

/// log((N - n + 0.5) / (n + 0.5)); negative for values held by most rows
/// unless `clamp` is set.
double idf_weight(std::size_t total, std::size_t count, bool clamp = false);

/// Sum of idf weights over columns where both rows hold the same non-Missing
/// code, with corpus statistics.
double similarity(const CodedTable& table, std::size_t query, std::size_t key,
                  const RetrievalIndex& index, bool clamp_idf = false);

/// Same, with statistics over the rows strictly before `cutoff`.
double similarity_before(const CodedTable& table, std::size_t query, std::size_t key,
                         const RetrievalIndex& index, std::int64_t cutoff, bool clamp_idf = false);

// --- Top-K and dummy tables ---------------------------------------------------------

struct RetrievalLink {
    std::size_t query = 0;
    std::size_t retrieved = 0;
    double score = 0.0;

    bool operator==(const RetrievalLink&) const = default;
};

/// Materialized retrieval result of one table, links grouped by query in row
/// order and by descending score within a query.
struct DummyTable {
    std::string source_table;
    std::vector<RetrievalLink> links;

    std::string name() const { return source_table + "__retrieval"; }
};

/// For every row, the K highest-scoring other rows (ties: lower row index).
/// With `time_cutoffs`, a key qualifies only when its timestamp is strictly
/// below the query's cutoff, and frequencies are taken over those rows.
/// Throws ConfigError when k == 0.
DummyTable retrieve_topk(const CodedTable& table, std::size_t k, const RetrievalIndex& index,
                         std::optional<std::span<const std::int64_t>> time_cutoffs = std::nullopt,
                         bool clamp_idf = false);

struct RetrievalConfig {
    std::size_t k = 3;
    std::size_t bins = 10;
    bool clamp_idf = false;
    bool time_filter = true;
    std::size_t min_feature_columns = 2;
};

/// Tables eligible for retrieval: a primary key, at least
/// `min_feature_columns` features, and not themselves a dummy table.
std::vector<std::size_t> retrievable_tables(const Database& db, const RetrievalConfig& config);

/// Runs retrieval on every eligible table. Quantiles are fitted on rows whose
/// timestamp precedes `visible_cutoff` (all rows of untimed tables).
std::vector<DummyTable> retrieve_all(const Database& db, const RetrievalConfig& config,
                                     std::optional<std::int64_t> visible_cutoff);

/// Dummy table as an ordinary two-FK table (`query_id`, `retrieved_id`) with no
/// primary key; it inherits timestamps from its query row.
Table to_table(const DummyTable& dummy, const Database& db);

/// Copy of `db` with every dummy table registered.
Database with_dummy_tables(const Database& db, std::span<const DummyTable> dummies);

/// `query_id,retrieved_id` CSV with the source table's primary key values.
void write_dummy_csv(const DummyTable& dummy, const Database& db, const std::filesystem::path& path);
DummyTable read_dummy_csv(const std::filesystem::path& path, const Database& db,
                          const std::string& source_table);

}  // namespace srp

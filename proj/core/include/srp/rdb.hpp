#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace srp {

enum class ColumnKind { numeric, categorical, text, timestamp, primary_key, foreign_key };

std::string_view to_string(ColumnKind kind);
ColumnKind parse_column_kind(std::string_view name);

enum class TaskKind { binary, multiclass, regression };

std::string_view to_string(TaskKind task);
TaskKind parse_task_kind(std::string_view name);

struct ColumnRef {
    std::string table;
    std::string column;

    bool operator==(const ColumnRef&) const = default;
};

struct ColumnDef {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::optional<ColumnRef> fk_target;  // present iff kind == foreign_key

    bool is_key() const { return kind == ColumnKind::primary_key || kind == ColumnKind::foreign_key; }
};

struct TableDef {
    std::string name;
    std::vector<ColumnDef> columns;
    std::optional<std::string> timestamp_column;
    // Tables without their own clock may borrow the timestamp of the row one
    // of their foreign keys points at (retrieval dummy tables use the query row).
    std::optional<std::string> timestamp_from;

    std::optional<std::size_t> column_index(std::string_view column) const;
    std::optional<std::size_t> primary_key() const;
    std::optional<std::size_t> timestamp_index() const;
    std::vector<std::size_t> foreign_keys() const;
};

struct TargetSpec {
    std::string table;
    std::string column;
    TaskKind task = TaskKind::binary;
};

struct Schema {
    std::vector<TableDef> tables;
    TargetSpec target;

    const TableDef* find(std::string_view table) const;
    std::optional<std::size_t> table_index(std::string_view table) const;

    /// Structural checks shared by load_schema and Database::add_table.
    /// Throws ConfigError naming the first violated rule.
    void validate() const;
};

// --- Values ----------------------------------------------------------------

struct Category {
    std::string value;
    bool operator==(const Category&) const = default;
};
struct Text {
    std::string value;
    bool operator==(const Text&) const = default;
};
struct Timestamp {
    std::int64_t seconds = 0;
    bool operator==(const Timestamp&) const = default;
};

/// A single cell. Key columns (PK/FK) hold Category values.
class Value {
  public:
    Value() = default;
    static Value number(double v) { return Value(v); }
    static Value category(std::string v) { return Value(Category{std::move(v)}); }
    static Value text(std::string v) { return Value(Text{std::move(v)}); }
    static Value timestamp(std::int64_t s) { return Value(Timestamp{s}); }

    bool is_missing() const { return std::holds_alternative<std::monostate>(data_); }
    bool is_number() const { return std::holds_alternative<double>(data_); }
    bool is_category() const { return std::holds_alternative<Category>(data_); }
    bool is_text() const { return std::holds_alternative<Text>(data_); }
    bool is_timestamp() const { return std::holds_alternative<Timestamp>(data_); }

    double as_number() const { return std::get<double>(data_); }
    const std::string& as_category() const { return std::get<Category>(data_).value; }
    const std::string& as_text() const { return std::get<Text>(data_).value; }
    std::int64_t as_timestamp() const { return std::get<Timestamp>(data_).seconds; }

    /// Category or text payload regardless of which one is held.
    const std::string& as_string() const;

    /// Canonical CSV cell text; Missing renders as the empty string.
    std::string to_cell() const;

    bool operator==(const Value&) const = default;

  private:
    using Storage = std::variant<std::monostate, double, Category, Text, Timestamp>;
    template <typename T>
    explicit Value(T v) : data_(std::move(v)) {}
    Storage data_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);

/// Parses a cell according to the column kind. Returns nullopt when the cell
/// is non-empty but cannot be coerced (numbers, timestamps).
std::optional<Value> parse_cell(std::string_view cell, bool quoted, ColumnKind kind);

// --- Tables ------------------------------------------------------------------

struct Table {
    TableDef def;
    std::vector<std::vector<Value>> rows;

    std::size_t size() const { return rows.size(); }
    const Value& at(std::size_t row, std::size_t column) const { return rows[row][column]; }
};

struct LoadReport {
    // (table, column) -> number of non-empty cells coerced to Missing
    std::map<std::pair<std::string, std::string>, std::size_t> coercions;

    std::size_t total_coercions() const;
};

/// A validated relational database. Once loaded it is only read; tables may be
/// appended (retrieval dummy tables) through add_table, which re-validates.
class Database {
  public:
    Database() = default;

    /// Builds from in-memory tables; throws DataError on any integrity violation.
    Database(Schema schema, std::vector<Table> tables);

    const Schema& schema() const { return schema_; }
    const std::vector<Table>& tables() const { return tables_; }
    const Table& table(std::string_view name) const;
    const Table& table(std::size_t index) const { return tables_[index]; }
    std::size_t table_index(std::string_view name) const;
    const Table& target_table() const { return table(schema_.target.table); }
    std::size_t target_column() const;

    /// Row index holding `key` in the primary key of `table`, if any.
    std::optional<std::size_t> find_row(std::size_t table, const std::string& key) const;

    /// Per row of `table`, the row its foreign key column points to (nullopt
    /// for Missing).
    std::vector<std::optional<std::size_t>> resolve_foreign_key(std::size_t table,
                                                                std::size_t column) const;

    /// Effective per-row timestamp of a table: its own timestamp column, or the
    /// timestamp inherited through `timestamp_from`. Nullopt for untimed
    /// tables; Missing timestamps are reported as INT64_MAX.
    std::optional<std::vector<std::int64_t>> row_timestamps(std::size_t table) const;

    void add_table(Table table);

    LoadReport& report() { return report_; }
    const LoadReport& report() const { return report_; }

  private:
    void index_and_check(std::size_t table);
    void check_foreign_keys(std::size_t table) const;

    Schema schema_;
    std::vector<Table> tables_;
    std::vector<std::unordered_map<std::string, std::size_t>> pk_rows_;
    LoadReport report_;
};

/// Parses and validates a schema descriptor (JSON).
Schema load_schema(const std::filesystem::path& path);
Schema parse_schema(std::string_view json_text);
std::string schema_to_json(const Schema& schema);
void save_schema(const Schema& schema, const std::filesystem::path& path);

/// Loads `<dir>/<table>.csv` for every table of the schema.
Database load_database(const Schema& schema, const std::filesystem::path& dir);

/// Writes one table as canonical CSV (header row, shortest round-trip numbers).
void write_table_csv(const Table& table, std::ostream& out);
void write_table_csv(const Table& table, const std::filesystem::path& path);

/// Writes schema.json plus one CSV per table into `dir`.
void save_database(const Database& db, const std::filesystem::path& dir);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> valid;
    std::vector<std::size_t> test;
};

/// Ratio split over target rows sorted by (timestamp, row index). Rows with a
/// Missing label are excluded from every part.
Split temporal_split(const Database& db, double train_frac, double valid_frac);

}  // namespace srp

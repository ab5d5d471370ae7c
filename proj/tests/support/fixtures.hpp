#pragma once

// Shared helpers for unit and acceptance tests: temporary directories,
// databases built from inline CSV, and random generators.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

#include "srp/random.hpp"
#include "srp/rdb.hpp"
#include "srp/synthgen.hpp"

namespace srp::testing {

class TempDir {
  public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("srp_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Loads a database from a schema JSON and one CSV text per table.
inline Database make_db(const std::string& schema_json, const std::map<std::string, std::string>& csvs) {
    TempDir dir;
    write_text(dir.path() / "schema.json", schema_json);
    for (const auto& [name, text] : csvs) {
        write_text(dir.path() / (name + ".csv"), text);
    }
    return load_database(load_schema(dir.path() / "schema.json"), dir.path());
}

/// User(id, age, country) <- Review(id, user_id, item_id, ts, price, rating, label) -> Item(id, brand)
inline const char* kReviewSchema = R"({
  "tables": [
    {"name": "User", "columns": [
      {"name": "id", "kind": "primary_key"},
      {"name": "age", "kind": "numeric"},
      {"name": "country", "kind": "categorical"}]},
    {"name": "Item", "columns": [
      {"name": "id", "kind": "primary_key"},
      {"name": "brand", "kind": "categorical"}]},
    {"name": "Review", "timestamp_column": "ts", "columns": [
      {"name": "id", "kind": "primary_key"},
      {"name": "user_id", "kind": "foreign_key", "fk_target": {"table": "User", "column": "id"}},
      {"name": "item_id", "kind": "foreign_key", "fk_target": {"table": "Item", "column": "id"}},
      {"name": "ts", "kind": "timestamp"},
      {"name": "price", "kind": "numeric"},
      {"name": "rating", "kind": "categorical"},
      {"name": "label", "kind": "categorical"}]}
  ],
  "target": {"table": "Review", "column": "label", "task": "binary"}
})";

/// Small review database with 3 users, 2 items and 10 timestamped reviews.
inline Database review_db() {
    return make_db(kReviewSchema,
                   {{"User", "id,age,country\nu1,30,fr\nu2,45,de\nu3,,fr\n"},
                    {"Item", "id,brand\nt1,acme\nt2,zeta\n"},
                    {"Review",
                     "id,user_id,item_id,ts,price,rating,label\n"
                     "r1,u1,t1,1,10,good,1\n"
                     "r2,u1,t2,2,30,bad,0\n"
                     "r3,u2,t1,3,20,good,1\n"
                     "r4,u2,t1,4,25,good,1\n"
                     "r5,u3,t2,5,5,bad,0\n"
                     "r6,u1,t1,6,12,good,1\n"
                     "r7,u2,t2,7,40,bad,0\n"
                     "r8,u3,t1,8,8,good,1\n"
                     "r9,u1,t2,9,33,bad,0\n"
                     "r10,u3,t1,10,15,good,0\n"}});
}

/// Small planted-signal database for model tests.
inline SynthData small_synthetic(std::uint64_t seed, std::size_t interactions = 600) {
    SynthSpec spec;
    spec.seed = seed;
    spec.n_users = 40;
    spec.n_items = 20;
    spec.n_interactions = interactions;
    return generate_synthetic(spec);
}

// --- Random relational databases ---------------------------------------------------

struct RandomDbOptions {
    std::size_t min_tables = 2;
    std::size_t max_tables = 5;
    std::size_t max_rows = 40;
    double missing_rate = 0.15;
    bool allow_link_tables = true;  // PK-less two-FK tables
};

/// Random schema whose FKs only point at earlier tables, with optional
/// PK-less two-FK link tables. The last entity table is the target.
inline Database random_database(Rng& rng, const RandomDbOptions& opt = {}) {
    Schema schema;
    std::vector<Table> tables;
    const std::size_t n = opt.min_tables + rng.below(opt.max_tables - opt.min_tables + 1);
    std::vector<std::size_t> keyed;  // tables with a PK
    std::size_t target = 0;
    for (std::size_t t = 0; t < n; ++t) {
        TableDef def;
        def.name = "T" + std::to_string(t);
        const bool link = opt.allow_link_tables && keyed.size() >= 1 && t > 0 && rng.bernoulli(0.3);
        if (!link) {
            def.columns.push_back({"id", ColumnKind::primary_key, std::nullopt});
        }
        const std::size_t fks = link ? 2 : (keyed.empty() ? 0 : rng.below(std::min<std::size_t>(keyed.size(), 2) + 1));
        for (std::size_t f = 0; f < fks; ++f) {
            const std::size_t ref = keyed[rng.below(keyed.size())];
            def.columns.push_back({"fk" + std::to_string(f), ColumnKind::foreign_key,
                                   ColumnRef{"T" + std::to_string(ref), "id"}});
        }
        if (!link) {
            def.columns.push_back({"num", ColumnKind::numeric, std::nullopt});
            def.columns.push_back({"cat", ColumnKind::categorical, std::nullopt});
        }
        schema.tables.push_back(def);
        if (!link) {
            keyed.push_back(t);
            target = t;
        }
    }
    schema.target = TargetSpec{schema.tables[target].name, "cat", TaskKind::multiclass};

    for (std::size_t t = 0; t < n; ++t) {
        Table table;
        table.def = schema.tables[t];
        const std::size_t rows = 1 + rng.below(opt.max_rows);
        for (std::size_t r = 0; r < rows; ++r) {
            std::vector<Value> row;
            for (const auto& c : table.def.columns) {
                switch (c.kind) {
                    case ColumnKind::primary_key:
                        row.push_back(Value::category("k" + std::to_string(r)));
                        break;
                    case ColumnKind::foreign_key: {
                        const std::size_t ref = schema.table_index(c.fk_target->table).value();
                        if (rng.bernoulli(opt.missing_rate)) {
                            row.emplace_back();
                        } else {
                            row.push_back(Value::category("k" + std::to_string(rng.below(tables[ref].size()))));
                        }
                        break;
                    }
                    case ColumnKind::numeric:
                        row.push_back(rng.bernoulli(opt.missing_rate) ? Value{}
                                                                       : Value::number(static_cast<double>(rng.below(7))));
                        break;
                    default:
                        row.push_back(Value::category(std::string(1, static_cast<char>('a' + rng.below(3)))));
                        break;
                }
            }
            table.rows.push_back(std::move(row));
        }
        tables.push_back(std::move(table));
    }
    return Database(std::move(schema), std::move(tables));
}

}  // namespace srp::testing

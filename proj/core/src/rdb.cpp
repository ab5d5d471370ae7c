#include "srp/rdb.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "srp/csv.hpp"
#include "srp/errors.hpp"

namespace srp {

using nlohmann::json;

std::string_view to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::numeric: return "numeric";
        case ColumnKind::categorical: return "categorical";
        case ColumnKind::text: return "text";
        case ColumnKind::timestamp: return "timestamp";
        case ColumnKind::primary_key: return "primary_key";
        case ColumnKind::foreign_key: return "foreign_key";
    }
    return "?";
}

ColumnKind parse_column_kind(std::string_view name) {
    for (auto kind : {ColumnKind::numeric, ColumnKind::categorical, ColumnKind::text,
                      ColumnKind::timestamp, ColumnKind::primary_key, ColumnKind::foreign_key}) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    throw ConfigError("unknown column kind '" + std::string(name) + "'");
}

std::string_view to_string(TaskKind task) {
    switch (task) {
        case TaskKind::binary: return "binary";
        case TaskKind::multiclass: return "multiclass";
        case TaskKind::regression: return "regression";
    }
    return "?";
}

TaskKind parse_task_kind(std::string_view name) {
    for (auto task : {TaskKind::binary, TaskKind::multiclass, TaskKind::regression}) {
        if (to_string(task) == name) {
            return task;
        }
    }
    throw ConfigError("unknown task '" + std::string(name) + "'");
}

// --- TableDef / Schema ---------------------------------------------------------

std::optional<std::size_t> TableDef::column_index(std::string_view column) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == column) {
            return i;
        }
    }
    return std::nullopt;
}

std::optional<std::size_t> TableDef::primary_key() const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].kind == ColumnKind::primary_key) {
            return i;
        }
    }
    return std::nullopt;
}

std::optional<std::size_t> TableDef::timestamp_index() const {
    if (!timestamp_column) {
        return std::nullopt;
    }
    return column_index(*timestamp_column);
}

std::vector<std::size_t> TableDef::foreign_keys() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].kind == ColumnKind::foreign_key) {
            out.push_back(i);
        }
    }
    return out;
}

const TableDef* Schema::find(std::string_view table) const {
    for (const auto& t : tables) {
        if (t.name == table) {
            return &t;
        }
    }
    return nullptr;
}

std::optional<std::size_t> Schema::table_index(std::string_view table) const {
    for (std::size_t i = 0; i < tables.size(); ++i) {
        if (tables[i].name == table) {
            return i;
        }
    }
    return std::nullopt;
}

void Schema::validate() const {
    std::set<std::string> names;
    for (const auto& t : tables) {
        if (t.name.empty()) {
            throw ConfigError("schema: table with empty name");
        }
        if (!names.insert(t.name).second) {
            throw ConfigError("schema: duplicate table '" + t.name + "'");
        }
    }
    for (const auto& t : tables) {
        std::set<std::string> columns;
        std::size_t pks = 0;
        for (const auto& c : t.columns) {
            if (!columns.insert(c.name).second) {
                throw ConfigError("schema: duplicate column name " + t.name + "." + c.name);
            }
            if (c.kind == ColumnKind::primary_key) {
                ++pks;
            }
            if (c.kind == ColumnKind::foreign_key) {
                if (!c.fk_target) {
                    throw ConfigError("schema: foreign key " + t.name + "." + c.name +
                                      " has no fk_target");
                }
                const TableDef* target = find(c.fk_target->table);
                const auto pk = target ? target->primary_key() : std::nullopt;
                if (!target || !pk || target->columns[*pk].name != c.fk_target->column) {
                    throw ConfigError("schema: dangling FK " + t.name + "." + c.name + " -> " +
                                      c.fk_target->table + "." + c.fk_target->column);
                }
            } else if (c.fk_target) {
                throw ConfigError("schema: fk_target on non-foreign-key column " + t.name + "." +
                                  c.name);
            }
        }
        if (pks > 1) {
            throw ConfigError("schema: table '" + t.name + "' has multiple primary_key columns");
        }
        if (t.timestamp_column) {
            auto idx = t.column_index(*t.timestamp_column);
            if (!idx || t.columns[*idx].kind != ColumnKind::timestamp) {
                throw ConfigError("schema: timestamp_column '" + *t.timestamp_column + "' of '" +
                                  t.name + "' is not a timestamp column");
            }
        }
        if (t.timestamp_from) {
            auto idx = t.column_index(*t.timestamp_from);
            if (!idx || t.columns[*idx].kind != ColumnKind::foreign_key || t.timestamp_column) {
                throw ConfigError("schema: timestamp_from of '" + t.name +
                                  "' must name a foreign key of an untimed table");
            }
        }
    }
    const TableDef* target_def = find(target.table);
    if (!target_def) {
        throw ConfigError("schema: target table '" + target.table + "' does not exist");
    }
    auto col = target_def->column_index(target.column);
    if (!col) {
        throw ConfigError("schema: target column '" + target.column + "' does not exist");
    }
    const ColumnKind kind = target_def->columns[*col].kind;
    if (kind != ColumnKind::numeric && kind != ColumnKind::categorical) {
        throw ConfigError("schema: target column must be numeric or categorical");
    }
    if (target.task == TaskKind::regression && kind != ColumnKind::numeric) {
        throw ConfigError("schema: regression target must be numeric");
    }
}

// --- Value ---------------------------------------------------------------------

const std::string& Value::as_string() const {
    if (const auto* c = std::get_if<Category>(&data_)) {
        return c->value;
    }
    return std::get<Text>(data_).value;
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string Value::to_cell() const {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return {};
            } else if constexpr (std::is_same_v<T, double>) {
                return format_number(v);
            } else if constexpr (std::is_same_v<T, Timestamp>) {
                return std::to_string(v.seconds);
            } else {
                return v.value;
            }
        },
        data_);
}

std::optional<Value> parse_cell(std::string_view cell, bool quoted, ColumnKind kind) {
    if (cell.empty() && !quoted) {
        return Value{};
    }
    switch (kind) {
        case ColumnKind::numeric: {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
                return std::nullopt;
            }
            return Value::number(v);
        }
        case ColumnKind::timestamp: {
            std::int64_t v = 0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
                return std::nullopt;
            }
            return Value::timestamp(v);
        }
        case ColumnKind::text:
            return Value::text(std::string(cell));
        case ColumnKind::categorical:
        case ColumnKind::primary_key:
        case ColumnKind::foreign_key:
            return Value::category(std::string(cell));
    }
    return std::nullopt;
}

std::size_t LoadReport::total_coercions() const {
    std::size_t n = 0;
    for (const auto& [key, count] : coercions) {
        n += count;
    }
    return n;
}

// --- Database ------------------------------------------------------------------

Database::Database(Schema schema, std::vector<Table> tables) : schema_(std::move(schema)) {
    schema_.validate();
    if (tables.size() != schema_.tables.size()) {
        throw DataError("database: table count does not match schema");
    }
    tables_ = std::move(tables);
    pk_rows_.resize(tables_.size());
    for (std::size_t t = 0; t < tables_.size(); ++t) {
        if (tables_[t].def.name != schema_.tables[t].name) {
            throw DataError("database: table order does not match schema");
        }
        index_and_check(t);
    }
    for (std::size_t t = 0; t < tables_.size(); ++t) {
        check_foreign_keys(t);
    }
}

void Database::index_and_check(std::size_t t) {
    const Table& table = tables_[t];
    const TableDef& def = table.def;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        if (table.rows[r].size() != def.columns.size()) {
            throw DataError("table " + def.name + " row " + std::to_string(r + 1) +
                            ": wrong number of cells");
        }
        for (std::size_t c = 0; c < def.columns.size(); ++c) {
            const Value& v = table.rows[r][c];
            if (v.is_missing()) {
                continue;
            }
            bool ok = false;
            switch (def.columns[c].kind) {
                case ColumnKind::numeric: ok = v.is_number(); break;
                case ColumnKind::timestamp: ok = v.is_timestamp(); break;
                case ColumnKind::text: ok = v.is_text(); break;
                default: ok = v.is_category(); break;
            }
            if (!ok) {
                throw DataError("table " + def.name + " column " + def.columns[c].name +
                                ": value of wrong kind in row " + std::to_string(r + 1));
            }
        }
    }
    auto& index = pk_rows_[t];
    index.clear();
    if (auto pk = def.primary_key()) {
        index.reserve(table.rows.size());
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const Value& v = table.rows[r][*pk];
            if (v.is_missing()) {
                throw DataError("table " + def.name + ": Missing primary key in row " +
                                std::to_string(r + 1));
            }
            if (!index.emplace(v.as_category(), r).second) {
                throw DataError("table " + def.name + ": duplicate PK '" + v.as_category() +
                                "' in row " + std::to_string(r + 1));
            }
        }
    }
}

void Database::check_foreign_keys(std::size_t t) const {
    const Table& table = tables_[t];
    for (std::size_t c : table.def.foreign_keys()) {
        const auto& target = *table.def.columns[c].fk_target;
        const std::size_t tt = table_index(target.table);
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const Value& v = table.rows[r][c];
            if (v.is_missing()) {
                continue;
            }
            if (!pk_rows_[tt].contains(v.as_category())) {
                throw DataError("FK violation " + table.def.name + "." + table.def.columns[c].name +
                                " row " + std::to_string(r + 1) + ": '" + v.as_category() +
                                "' not in " + target.table + "." + target.column);
            }
        }
    }
}

const Table& Database::table(std::string_view name) const { return tables_[table_index(name)]; }

std::size_t Database::table_index(std::string_view name) const {
    auto idx = schema_.table_index(name);
    if (!idx) {
        throw DataError("unknown table '" + std::string(name) + "'");
    }
    return *idx;
}

std::size_t Database::target_column() const {
    return *target_table().def.column_index(schema_.target.column);
}

std::optional<std::size_t> Database::find_row(std::size_t table, const std::string& key) const {
    auto it = pk_rows_[table].find(key);
    if (it == pk_rows_[table].end()) {
        return std::nullopt;
    }
    return it->second;
}

std::vector<std::optional<std::size_t>> Database::resolve_foreign_key(std::size_t table,
                                                                      std::size_t column) const {
    const Table& t = tables_[table];
    const std::size_t target = table_index(t.def.columns[column].fk_target->table);
    std::vector<std::optional<std::size_t>> out(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const Value& v = t.rows[r][column];
        if (!v.is_missing()) {
            out[r] = find_row(target, v.as_category());
        }
    }
    return out;
}

std::optional<std::vector<std::int64_t>> Database::row_timestamps(std::size_t table) const {
    const Table& t = tables_[table];
    constexpr auto kMissing = std::numeric_limits<std::int64_t>::max();
    if (auto ts = t.def.timestamp_index()) {
        std::vector<std::int64_t> out(t.rows.size());
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const Value& v = t.rows[r][*ts];
            out[r] = v.is_missing() ? kMissing : v.as_timestamp();
        }
        return out;
    }
    if (t.def.timestamp_from) {
        const std::size_t fk = *t.def.column_index(*t.def.timestamp_from);
        const std::size_t parent = table_index(t.def.columns[fk].fk_target->table);
        auto parent_ts = row_timestamps(parent);
        if (!parent_ts) {
            return std::nullopt;
        }
        auto links = resolve_foreign_key(table, fk);
        std::vector<std::int64_t> out(t.rows.size(), kMissing);
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            if (links[r]) {
                out[r] = (*parent_ts)[*links[r]];
            }
        }
        return out;
    }
    return std::nullopt;
}

void Database::add_table(Table table) {
    Schema next = schema_;
    next.tables.push_back(table.def);
    next.validate();
    schema_ = std::move(next);
    tables_.push_back(std::move(table));
    pk_rows_.emplace_back();
    try {
        index_and_check(tables_.size() - 1);
        check_foreign_keys(tables_.size() - 1);
    } catch (...) {
        schema_.tables.pop_back();
        tables_.pop_back();
        pk_rows_.pop_back();
        throw;
    }
}

// --- Schema I/O ----------------------------------------------------------------

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

Schema parse_schema(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("schema: parse error: ") + e.what());
    }
    Schema schema;
    try {
        for (const auto& jt : doc.at("tables")) {
            TableDef t;
            t.name = jt.at("name").get<std::string>();
            if (jt.contains("timestamp_column") && !jt["timestamp_column"].is_null()) {
                t.timestamp_column = jt["timestamp_column"].get<std::string>();
            }
            if (jt.contains("timestamp_from") && !jt["timestamp_from"].is_null()) {
                t.timestamp_from = jt["timestamp_from"].get<std::string>();
            }
            for (const auto& jc : jt.at("columns")) {
                ColumnDef c;
                c.name = jc.at("name").get<std::string>();
                c.kind = parse_column_kind(jc.at("kind").get<std::string>());
                if (jc.contains("fk_target") && !jc["fk_target"].is_null()) {
                    const auto& ft = jc["fk_target"];
                    if (ft.is_array()) {
                        c.fk_target = ColumnRef{ft.at(0).get<std::string>(), ft.at(1).get<std::string>()};
                    } else {
                        c.fk_target = ColumnRef{ft.at("table").get<std::string>(),
                                                ft.at("column").get<std::string>()};
                    }
                }
                t.columns.push_back(std::move(c));
            }
            schema.tables.push_back(std::move(t));
        }
        const auto& jtarget = doc.at("target");
        schema.target.table = jtarget.at("table").get<std::string>();
        schema.target.column = jtarget.at("column").get<std::string>();
        schema.target.task = parse_task_kind(jtarget.value("task", std::string("binary")));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("schema: ") + e.what());
    }
    schema.validate();
    return schema;
}

Schema load_schema(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    return parse_schema(text);
}

std::string schema_to_json(const Schema& schema) {
    json doc;
    doc["tables"] = json::array();
    for (const auto& t : schema.tables) {
        json jt;
        jt["name"] = t.name;
        jt["columns"] = json::array();
        for (const auto& c : t.columns) {
            json jc;
            jc["name"] = c.name;
            jc["kind"] = std::string(to_string(c.kind));
            if (c.fk_target) {
                jc["fk_target"] = {{"table", c.fk_target->table}, {"column", c.fk_target->column}};
            }
            jt["columns"].push_back(std::move(jc));
        }
        if (t.timestamp_column) {
            jt["timestamp_column"] = *t.timestamp_column;
        }
        if (t.timestamp_from) {
            jt["timestamp_from"] = *t.timestamp_from;
        }
        doc["tables"].push_back(std::move(jt));
    }
    doc["target"] = {{"table", schema.target.table},
                     {"column", schema.target.column},
                     {"task", std::string(to_string(schema.target.task))}};
    return doc.dump(2) + "\n";
}

void save_schema(const Schema& schema, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << schema_to_json(schema);
}

// --- CSV I/O -------------------------------------------------------------------

namespace {

Table load_table(const TableDef& def, const std::filesystem::path& path, LoadReport& report) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("missing file " + path.string());
    }
    csv::Reader reader(in);
    csv::Record record;
    if (!reader.next(record)) {
        throw DataError("header mismatch in " + path.string() + ": empty file");
    }
    if (record.fields.size() != def.columns.size()) {
        throw DataError("header mismatch in " + path.string());
    }
    for (std::size_t c = 0; c < def.columns.size(); ++c) {
        if (record.fields[c] != def.columns[c].name) {
            throw DataError("header mismatch in " + path.string() + ": expected '" +
                            def.columns[c].name + "', found '" + record.fields[c] + "'");
        }
    }
    Table table{def, {}};
    while (reader.next(record)) {
        if (record.fields.size() != def.columns.size()) {
            throw DataError(path.string() + " line " + std::to_string(reader.line()) +
                            ": expected " + std::to_string(def.columns.size()) + " fields");
        }
        std::vector<Value> row;
        row.reserve(def.columns.size());
        for (std::size_t c = 0; c < def.columns.size(); ++c) {
            auto v = parse_cell(record.fields[c], record.quoted[c], def.columns[c].kind);
            if (!v) {
                ++report.coercions[{def.name, def.columns[c].name}];
                row.emplace_back();
            } else {
                row.push_back(std::move(*v));
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace

Database load_database(const Schema& schema, const std::filesystem::path& dir) {
    std::vector<Table> tables;
    LoadReport report;
    for (const auto& def : schema.tables) {
        tables.push_back(load_table(def, dir / (def.name + ".csv"), report));
    }
    Database db(schema, std::move(tables));
    db.report() = std::move(report);
    return db;
}

void write_table_csv(const Table& table, std::ostream& out) {
    std::vector<std::string> fields;
    for (const auto& c : table.def.columns) {
        fields.push_back(c.name);
    }
    csv::write_record(out, fields);
    for (const auto& row : table.rows) {
        fields.clear();
        for (const auto& v : row) {
            fields.push_back(v.to_cell());
        }
        csv::write_record(out, fields);
    }
}

void write_table_csv(const Table& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    write_table_csv(table, out);
}

void save_database(const Database& db, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_schema(db.schema(), dir / "schema.json");
    for (const auto& t : db.tables()) {
        write_table_csv(t, dir / (t.def.name + ".csv"));
    }
}

// --- Split ---------------------------------------------------------------------

Split temporal_split(const Database& db, double train_frac, double valid_frac) {
    if (!(train_frac > 0.0 && train_frac < 1.0) || !(valid_frac > 0.0 && valid_frac < 1.0) ||
        train_frac + valid_frac >= 1.0) {
        throw ConfigError("temporal_split: fractions must lie in (0,1) and sum below 1");
    }
    const Table& target = db.target_table();
    auto ts_col = target.def.timestamp_index();
    if (!ts_col) {
        throw ConfigError("temporal_split: target table '" + target.def.name +
                          "' has no timestamp column");
    }
    const std::size_t label = db.target_column();
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < target.rows.size(); ++r) {
        if (target.rows[r][label].is_missing()) {
            continue;
        }
        if (target.rows[r][*ts_col].is_missing()) {
            throw DataError("temporal_split: target row " + std::to_string(r + 1) +
                            " has a Missing timestamp");
        }
        rows.push_back(r);
    }
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
        return target.rows[a][*ts_col].as_timestamp() < target.rows[b][*ts_col].as_timestamp();
    });
    const auto n = static_cast<double>(rows.size());
    const auto n_train = static_cast<std::size_t>(std::floor(train_frac * n + 1e-9));
    const auto n_valid = static_cast<std::size_t>(std::floor(valid_frac * n + 1e-9));
    Split split;
    split.train.assign(rows.begin(), rows.begin() + n_train);
    split.valid.assign(rows.begin() + n_train, rows.begin() + n_train + n_valid);
    split.test.assign(rows.begin() + n_train + n_valid, rows.end());
    return split;
}

}  // namespace srp

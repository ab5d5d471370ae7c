#include "srp/synthesis.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>

#include <json.hpp>

#include "srp/csv.hpp"
#include "srp/errors.hpp"

namespace srp {

// --- Paths ---------------------------------------------------------------------

bool SynthesisPath::aggregates() const {
    return std::any_of(hops.begin(), hops.end(),
                       [](const Hop& h) { return h.direction == HopDirection::backward; });
}

std::string SynthesisPath::to_string() const {
    if (hops.empty()) {
        return {};
    }
    std::string out = hops.front().from_table;
    for (const auto& h : hops) {
        if (h.direction == HopDirection::forward) {
            out += "+" + h.fk_column + ">" + h.to_table;
        } else {
            out += "-" + h.fk_column + "<" + h.to_table;
        }
    }
    return out;
}

SynthesisPath SynthesisPath::parse(const std::string& text, const Schema& schema) {
    SynthesisPath path;
    std::size_t pos = text.find_first_of("+-");
    if (pos == std::string::npos) {
        throw ConfigError("bad synthesis path '" + text + "'");
    }
    std::string current = text.substr(0, pos);
    while (pos < text.size()) {
        const char dir = text[pos];
        const char arrow = dir == '+' ? '>' : '<';
        const std::size_t sep = text.find(arrow, pos + 1);
        if (sep == std::string::npos) {
            throw ConfigError("bad synthesis path '" + text + "'");
        }
        std::size_t next = text.find_first_of("+-", sep + 1);
        if (next == std::string::npos) {
            next = text.size();
        }
        Hop hop;
        hop.from_table = current;
        hop.fk_column = text.substr(pos + 1, sep - pos - 1);
        hop.to_table = text.substr(sep + 1, next - sep - 1);
        hop.direction = dir == '+' ? HopDirection::forward : HopDirection::backward;
        hop.fk_table = dir == '+' ? hop.from_table : hop.to_table;
        const TableDef* owner = schema.find(hop.fk_table);
        if (!owner || !owner->column_index(hop.fk_column) || !schema.find(hop.to_table)) {
            throw ConfigError("synthesis path '" + text + "' does not match the schema");
        }
        path.hops.push_back(std::move(hop));
        current = path.hops.back().to_table;
        pos = next;
    }
    return path;
}

namespace {

void search_paths(const Schema& schema, std::size_t current, std::vector<bool>& visited,
                  std::vector<Hop>& hops, std::size_t max_depth, std::vector<SynthesisPath>& out) {
    if (hops.size() >= max_depth) {
        return;
    }
    auto step = [&](Hop hop, std::size_t next) {
        hops.push_back(std::move(hop));
        out.push_back(SynthesisPath{hops});
        visited[next] = true;
        search_paths(schema, next, visited, hops, max_depth, out);
        visited[next] = false;
        hops.pop_back();
    };
    const std::string& here = schema.tables[current].name;
    for (std::size_t a = 0; a < schema.tables.size(); ++a) {
        const TableDef& owner = schema.tables[a];
        for (std::size_t c : owner.foreign_keys()) {
            const std::size_t b = *schema.table_index(owner.columns[c].fk_target->table);
            if (a == current && !visited[b]) {
                step(Hop{here, owner.name, owner.columns[c].name, schema.tables[b].name,
                         HopDirection::forward},
                     b);
            }
            if (b == current && !visited[a]) {
                step(Hop{here, owner.name, owner.columns[c].name, owner.name, HopDirection::backward},
                     a);
            }
        }
    }
}

}  // namespace

std::vector<SynthesisPath> find_synthesis_paths(const Schema& schema, std::size_t max_depth) {
    std::vector<SynthesisPath> out;
    const auto start = schema.table_index(schema.target.table);
    if (!start || max_depth == 0) {
        return out;
    }
    std::vector<bool> visited(schema.tables.size(), false);
    visited[*start] = true;
    std::vector<Hop> hops;
    search_paths(schema, *start, visited, hops, max_depth, out);
    return out;
}

// --- Aggregators ---------------------------------------------------------------

std::string_view to_string(AggregatorKind kind) {
    switch (kind) {
        case AggregatorKind::COUNT: return "COUNT";
        case AggregatorKind::MEAN: return "MEAN";
        case AggregatorKind::MAX: return "MAX";
        case AggregatorKind::MIN: return "MIN";
        case AggregatorKind::JOIN_TEXT: return "JOIN_TEXT";
        case AggregatorKind::MODE: return "MODE";
        case AggregatorKind::FA: return "FA";
    }
    return "?";
}

AggregatorKind parse_aggregator(std::string_view name) {
    for (auto k : {AggregatorKind::COUNT, AggregatorKind::MEAN, AggregatorKind::MAX,
                   AggregatorKind::MIN, AggregatorKind::JOIN_TEXT, AggregatorKind::MODE,
                   AggregatorKind::FA}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw ConfigError("unknown aggregator '" + std::string(name) + "'");
}

AggregateResult aggregate(std::span<const Value> group, AggregatorKind kind) {
    std::vector<const Value*> present;
    present.reserve(group.size());
    for (const auto& v : group) {
        if (!v.is_missing()) {
            present.push_back(&v);
        }
    }
    auto require = [&](auto predicate, const char* what) {
        for (const Value* v : present) {
            if (!predicate(*v)) {
                throw ConfigError(std::string(to_string(kind)) + " applies only to " + what +
                                  " values");
            }
        }
    };

    switch (kind) {
        case AggregatorKind::COUNT:
            return Value::number(static_cast<double>(present.size()));
        case AggregatorKind::MEAN:
        case AggregatorKind::MAX:
        case AggregatorKind::MIN: {
            require([](const Value& v) { return v.is_number(); }, "numeric");
            if (present.empty()) {
                return Value{};
            }
            double lo = present.front()->as_number();
            double hi = lo;
            double sum = 0.0;
            for (const Value* v : present) {
                const double x = v->as_number();
                lo = std::min(lo, x);
                hi = std::max(hi, x);
                sum += x;
            }
            if (kind == AggregatorKind::MAX) {
                return Value::number(hi);
            }
            if (kind == AggregatorKind::MIN) {
                return Value::number(lo);
            }
            // Rounding can push the quotient a hair outside [lo, hi].
            return Value::number(std::clamp(sum / static_cast<double>(present.size()), lo, hi));
        }
        case AggregatorKind::JOIN_TEXT: {
            require([](const Value& v) { return v.is_text(); }, "text");
            if (present.empty()) {
                return Value{};
            }
            std::string joined;
            for (std::size_t i = 0; i < present.size(); ++i) {
                if (i > 0) {
                    joined.push_back(' ');
                }
                joined += present[i]->as_text();
            }
            return Value::text(std::move(joined));
        }
        case AggregatorKind::MODE:
        case AggregatorKind::FA: {
            require([](const Value& v) { return v.is_category(); }, "categorical");
            if (present.empty()) {
                return Value{};
            }
            FrequencyMap freq;
            for (const Value* v : present) {
                ++freq[v->as_category()];
            }
            if (kind == AggregatorKind::FA) {
                return freq;
            }
            // Map iteration is lexicographic, so strict '>' keeps the smallest tie.
            auto best = freq.begin();
            for (auto it = freq.begin(); it != freq.end(); ++it) {
                if (it->second > best->second) {
                    best = it;
                }
            }
            return Value::category(best->first);
        }
    }
    return Value{};
}

// --- Feature tags ----------------------------------------------------------------

std::string FeatureTag::header() const {
    if (path.empty()) {
        return column;
    }
    return path + "__" + column + "__" +
           (aggregator ? std::string(to_string(*aggregator)) : std::string("VALUE"));
}

FeatureTag FeatureTag::parse_header(const std::string& header) {
    const std::size_t last = header.rfind("__");
    if (last == std::string::npos || last == 0) {
        return FeatureTag{{}, header, std::nullopt};
    }
    const std::size_t prev = header.rfind("__", last - 1);
    if (prev == std::string::npos) {
        return FeatureTag{{}, header, std::nullopt};
    }
    const std::string agg = header.substr(last + 2);
    FeatureTag tag{header.substr(0, prev), header.substr(prev + 2, last - prev - 2), std::nullopt};
    if (agg == "VALUE") {
        return tag;
    }
    try {
        tag.aggregator = parse_aggregator(agg);
    } catch (const ConfigError&) {
        return FeatureTag{{}, header, std::nullopt};
    }
    return tag;
}

const FeatureColumn* FeatureTable::find(const FeatureTag& tag) const {
    for (const auto& c : columns) {
        if (c.tag == tag) {
            return &c;
        }
    }
    return nullptr;
}

// --- Synthesis -------------------------------------------------------------------

namespace {

FeatureKind feature_kind_of(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::numeric: return FeatureKind::numeric;
        case ColumnKind::categorical: return FeatureKind::categorical;
        case ColumnKind::text: return FeatureKind::text;
        default: break;
    }
    throw ConfigError("column kind is not a feature kind");
}

FeatureKind feature_kind_of(AggregatorKind kind) {
    switch (kind) {
        case AggregatorKind::COUNT:
        case AggregatorKind::MEAN:
        case AggregatorKind::MAX:
        case AggregatorKind::MIN: return FeatureKind::numeric;
        case AggregatorKind::JOIN_TEXT: return FeatureKind::text;
        case AggregatorKind::MODE: return FeatureKind::categorical;
        case AggregatorKind::FA: return FeatureKind::frequency;
    }
    return FeatureKind::numeric;
}

std::vector<AggregatorKind> aggregators_for(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::numeric:
            return {AggregatorKind::MEAN, AggregatorKind::MAX, AggregatorKind::MIN};
        case ColumnKind::categorical: return {AggregatorKind::MODE, AggregatorKind::FA};
        case ColumnKind::text: return {AggregatorKind::JOIN_TEXT};
        default: return {};
    }
}

constexpr const char* kRowGroupColumn = "*";

/// Precomputed traversal of one path.
struct PathPlan {
    struct Step {
        HopDirection direction;
        std::size_t to_table;
        std::vector<std::optional<std::size_t>> forward;  // from-row -> to-row
        std::vector<std::vector<std::size_t>> backward;   // from-row -> to-rows ascending
        std::optional<std::vector<std::int64_t>> to_timestamps;
    };
    std::vector<Step> steps;
};

PathPlan plan_path(const Database& db, const SynthesisPath& path) {
    PathPlan plan;
    for (const Hop& hop : path.hops) {
        PathPlan::Step step;
        step.direction = hop.direction;
        step.to_table = db.table_index(hop.to_table);
        const std::size_t owner = db.table_index(hop.fk_table);
        const std::size_t column = *db.table(owner).def.column_index(hop.fk_column);
        auto links = db.resolve_foreign_key(owner, column);
        if (hop.direction == HopDirection::forward) {
            step.forward = std::move(links);
        } else {
            step.backward.resize(db.table(hop.from_table).size());
            for (std::size_t r = 0; r < links.size(); ++r) {
                if (links[r]) {
                    step.backward[*links[r]].push_back(r);
                }
            }
        }
        step.to_timestamps = db.row_timestamps(step.to_table);
        plan.steps.push_back(std::move(step));
    }
    return plan;
}

}  // namespace

std::vector<std::size_t> feature_columns(const Database& db, std::size_t table) {
    const TableDef& def = db.table(table).def;
    const bool is_target = def.name == db.schema().target.table;
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < def.columns.size(); ++c) {
        const ColumnKind k = def.columns[c].kind;
        if (k != ColumnKind::numeric && k != ColumnKind::categorical && k != ColumnKind::text) {
            continue;
        }
        if (is_target && def.columns[c].name == db.schema().target.column) {
            continue;
        }
        out.push_back(c);
    }
    return out;
}

FeatureTable table_features(const Database& db, std::size_t table) {
    const Table& t = db.table(table);
    FeatureTable out;
    out.rows = t.size();
    for (std::size_t c : feature_columns(db, table)) {
        FeatureColumn col;
        col.tag = FeatureTag{{}, t.def.columns[c].name, std::nullopt};
        col.kind = feature_kind_of(t.def.columns[c].kind);
        col.values.reserve(t.size());
        for (const auto& row : t.rows) {
            col.values.push_back(row[c]);
        }
        out.columns.push_back(std::move(col));
    }
    return out;
}

FeatureTable original_features(const Database& db) {
    return table_features(db, db.table_index(db.schema().target.table));
}

FeatureTable synthesize_features(const Database& db, std::span<const SynthesisPath> paths,
                                 bool cutoff_aware) {
    FeatureTable out = original_features(db);
    const std::size_t target = db.table_index(db.schema().target.table);
    const std::size_t n = db.table(target).size();
    const auto target_ts = db.row_timestamps(target);
    const bool filter = cutoff_aware && target_ts.has_value();

    for (const SynthesisPath& path : paths) {
        const PathPlan plan = plan_path(db, path);
        const std::size_t end = db.table_index(path.end());
        const Table& end_table = db.table(end);
        const std::vector<std::size_t> sources = feature_columns(db, end);
        const std::string path_text = path.to_string();
        const bool grouped = path.aggregates();

        // Reached rows of the terminal table for each target row.
        std::vector<std::vector<std::size_t>> reached(n);
        for (std::size_t r = 0; r < n; ++r) {
            std::vector<std::size_t> rows{r};
            std::vector<std::size_t> next;
            const std::int64_t cutoff = filter ? (*target_ts)[r] : 0;
            for (const auto& step : plan.steps) {
                next.clear();
                auto allowed = [&](std::size_t row) {
                    return !filter || !step.to_timestamps || (*step.to_timestamps)[row] < cutoff;
                };
                for (std::size_t x : rows) {
                    if (step.direction == HopDirection::forward) {
                        if (step.forward[x] && allowed(*step.forward[x])) {
                            next.push_back(*step.forward[x]);
                        }
                    } else {
                        for (std::size_t y : step.backward[x]) {
                            if (allowed(y)) {
                                next.push_back(y);
                            }
                        }
                    }
                }
                rows.swap(next);
            }
            reached[r] = std::move(rows);
        }

        if (grouped) {
            FeatureColumn count;
            count.tag = FeatureTag{path_text, kRowGroupColumn, AggregatorKind::COUNT};
            count.kind = FeatureKind::numeric;
            for (std::size_t r = 0; r < n; ++r) {
                count.values.push_back(Value::number(static_cast<double>(reached[r].size())));
            }
            out.columns.push_back(std::move(count));
        }

        std::vector<Value> group;
        for (std::size_t c : sources) {
            const ColumnDef& def = end_table.def.columns[c];
            if (!grouped) {
                FeatureColumn col;
                col.tag = FeatureTag{path_text, def.name, std::nullopt};
                col.kind = feature_kind_of(def.kind);
                for (std::size_t r = 0; r < n; ++r) {
                    col.values.push_back(reached[r].empty() ? Value{}
                                                            : end_table.at(reached[r].front(), c));
                }
                out.columns.push_back(std::move(col));
                continue;
            }
            for (AggregatorKind agg : aggregators_for(def.kind)) {
                FeatureColumn col;
                col.tag = FeatureTag{path_text, def.name, agg};
                col.kind = feature_kind_of(agg);
                for (std::size_t r = 0; r < n; ++r) {
                    group.clear();
                    for (std::size_t row : reached[r]) {
                        group.push_back(end_table.at(row, c));
                    }
                    AggregateResult res = aggregate(group, agg);
                    if (col.kind == FeatureKind::frequency) {
                        if (auto* f = std::get_if<FrequencyMap>(&res)) {
                            col.frequencies.emplace_back(std::move(*f));
                        } else {
                            col.frequencies.emplace_back(std::nullopt);
                        }
                    } else {
                        col.values.push_back(std::get<Value>(std::move(res)));
                    }
                }
                out.columns.push_back(std::move(col));
            }
        }
    }
    return out;
}

// --- CSV dump --------------------------------------------------------------------

void write_feature_table(const FeatureTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    std::vector<std::string> fields;
    for (const auto& c : table.columns) {
        fields.push_back(c.tag.header());
    }
    csv::write_record(out, fields);
    for (std::size_t r = 0; r < table.rows; ++r) {
        fields.clear();
        for (const auto& c : table.columns) {
            if (c.kind == FeatureKind::frequency) {
                if (!c.frequencies[r]) {
                    fields.emplace_back();
                } else {
                    nlohmann::json j = nlohmann::json::object();
                    for (const auto& [k, v] : *c.frequencies[r]) {
                        j[k] = v;
                    }
                    fields.push_back(j.dump());
                }
            } else {
                fields.push_back(c.values[r].to_cell());
            }
        }
        csv::write_record(out, fields);
    }
}

FeatureTable read_feature_table(const std::filesystem::path& path, const Database& db) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("missing file " + path.string());
    }
    csv::Reader reader(in);
    csv::Record record;
    if (!reader.next(record)) {
        throw DataError("empty feature table " + path.string());
    }
    FeatureTable table;
    std::vector<ColumnKind> parse_kinds;
    const TableDef& target = db.target_table().def;
    for (const auto& header : record.fields) {
        FeatureColumn col;
        col.tag = FeatureTag::parse_header(header);
        ColumnKind source_kind = ColumnKind::numeric;
        if (col.tag.aggregator) {
            col.kind = feature_kind_of(*col.tag.aggregator);
            source_kind = col.kind == FeatureKind::text          ? ColumnKind::text
                          : col.kind == FeatureKind::categorical ? ColumnKind::categorical
                                                                 : ColumnKind::numeric;
        } else {
            const TableDef* owner = &target;
            if (!col.tag.path.empty()) {
                owner = db.schema().find(SynthesisPath::parse(col.tag.path, db.schema()).end());
            }
            auto idx = owner->column_index(col.tag.column);
            if (!idx) {
                throw DataError("feature table column '" + header + "' matches no schema column");
            }
            source_kind = owner->columns[*idx].kind;
            col.kind = feature_kind_of(source_kind);
        }
        parse_kinds.push_back(source_kind);
        table.columns.push_back(std::move(col));
    }
    while (reader.next(record)) {
        if (record.fields.size() != table.columns.size()) {
            throw DataError(path.string() + ": ragged row at line " + std::to_string(reader.line()));
        }
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            auto& col = table.columns[c];
            const std::string& cell = record.fields[c];
            if (col.kind == FeatureKind::frequency) {
                if (cell.empty() && !record.quoted[c]) {
                    col.frequencies.emplace_back(std::nullopt);
                    continue;
                }
                FrequencyMap freq;
                for (const auto& [k, v] : nlohmann::json::parse(cell).items()) {
                    freq[k] = v.get<std::int64_t>();
                }
                col.frequencies.emplace_back(std::move(freq));
            } else {
                auto v = parse_cell(cell, record.quoted[c], parse_kinds[c]);
                if (!v) {
                    throw DataError(path.string() + ": unparsable cell at line " +
                                    std::to_string(reader.line()));
                }
                col.values.push_back(std::move(*v));
            }
        }
        ++table.rows;
    }
    return table;
}

}  // namespace srp

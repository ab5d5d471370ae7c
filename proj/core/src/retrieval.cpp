#include "srp/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <unordered_map>

#include "srp/csv.hpp"
#include "srp/errors.hpp"
#include "srp/synthesis.hpp"

namespace srp {

// --- Quantiles -------------------------------------------------------------------

QuantileBins fit_quantiles(std::vector<double> values, std::size_t bins) {
    if (bins < 2) {
        throw ConfigError("fit_quantiles: need at least 2 bins");
    }
    if (values.empty()) {
        throw DataError("fit_quantiles: column has no non-Missing values");
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    QuantileBins out;
    out.thresholds.reserve(bins);
    for (std::size_t k = 1; k <= bins; ++k) {
        // smallest j with j / n >= k / B, i.e. j = ceil(k n / B)
        std::size_t j = (k * n + bins - 1) / bins;
        j = std::clamp<std::size_t>(j, 1, n);
        out.thresholds.push_back(values[j - 1]);
    }
    return out;
}

QuantileBins fit_quantiles(std::span<const Value> column, std::size_t bins) {
    std::vector<double> values;
    values.reserve(column.size());
    for (const auto& v : column) {
        if (!v.is_missing()) {
            values.push_back(v.as_number());
        }
    }
    return fit_quantiles(std::move(values), bins);
}

std::size_t discretize(double v, const QuantileBins& bins) {
    auto it = std::lower_bound(bins.thresholds.begin(), bins.thresholds.end(), v);
    if (it == bins.thresholds.end()) {
        return bins.bins();
    }
    return static_cast<std::size_t>(it - bins.thresholds.begin()) + 1;
}

std::optional<std::size_t> discretize(const Value& v, const QuantileBins& bins) {
    if (v.is_missing()) {
        return std::nullopt;
    }
    return discretize(v.as_number(), bins);
}

DiscretizationModel fit_discretization(const Database& db, std::size_t table,
                                       std::span<const std::size_t> visible_rows, std::size_t bins) {
    const Table& t = db.table(table);
    DiscretizationModel model;
    for (std::size_t c : feature_columns(db, table)) {
        if (t.def.columns[c].kind != ColumnKind::numeric) {
            continue;
        }
        std::vector<double> values;
        for (std::size_t r : visible_rows) {
            if (!t.at(r, c).is_missing()) {
                values.push_back(t.at(r, c).as_number());
            }
        }
        if (!values.empty()) {
            model.columns.emplace(t.def.columns[c].name, fit_quantiles(std::move(values), bins));
        }
    }
    return model;
}

// --- Coding ----------------------------------------------------------------------

CodedTable code_table(const Database& db, std::size_t table, const DiscretizationModel& model) {
    const Table& t = db.table(table);
    const auto features = feature_columns(db, table);
    CodedTable out;
    out.table = t.def.name;
    out.rows = t.size();
    for (std::size_t c : features) {
        out.columns.push_back(t.def.columns[c].name);
    }
    out.codes.assign(out.rows * features.size(), kMissingCode);
    for (std::size_t j = 0; j < features.size(); ++j) {
        const std::size_t c = features[j];
        if (t.def.columns[c].kind == ColumnKind::numeric) {
            auto it = model.columns.find(t.def.columns[c].name);
            if (it == model.columns.end()) {
                continue;
            }
            for (std::size_t r = 0; r < out.rows; ++r) {
                if (auto k = discretize(t.at(r, c), it->second)) {
                    out.codes[r * features.size() + j] = static_cast<std::int64_t>(*k);
                }
            }
        } else {
            std::unordered_map<std::string, std::int64_t> dictionary;
            for (std::size_t r = 0; r < out.rows; ++r) {
                const Value& v = t.at(r, c);
                if (v.is_missing()) {
                    continue;
                }
                auto [it, inserted] =
                    dictionary.emplace(v.as_string(), static_cast<std::int64_t>(dictionary.size()));
                out.codes[r * features.size() + j] = it->second;
            }
        }
    }
    out.timestamps = db.row_timestamps(table);
    return out;
}

// --- Index -----------------------------------------------------------------------

RetrievalIndex::RetrievalIndex(const CodedTable& table) : rows_(table.rows), columns_(table.width()) {
    for (std::size_t r = 0; r < table.rows; ++r) {
        for (std::size_t c = 0; c < table.width(); ++c) {
            const std::int64_t code = table.code(r, c);
            if (code == kMissingCode) {
                continue;
            }
            Entry& e = columns_[c][code];
            e.rows.push_back(static_cast<std::uint32_t>(r));
            if (table.timestamps) {
                e.sorted_timestamps.push_back((*table.timestamps)[r]);
            }
        }
    }
    for (auto& column : columns_) {
        for (auto& [code, e] : column) {
            std::sort(e.sorted_timestamps.begin(), e.sorted_timestamps.end());
        }
    }
    if (table.timestamps) {
        sorted_timestamps_ = *table.timestamps;
        std::sort(sorted_timestamps_.begin(), sorted_timestamps_.end());
    }
}

RetrievalIndex build_index(const CodedTable& table) { return RetrievalIndex(table); }

std::size_t RetrievalIndex::count(std::size_t column, std::int64_t code) const {
    auto it = columns_[column].find(code);
    return it == columns_[column].end() ? 0 : it->second.rows.size();
}

std::size_t RetrievalIndex::rows_before(std::int64_t cutoff) const {
    return static_cast<std::size_t>(
        std::lower_bound(sorted_timestamps_.begin(), sorted_timestamps_.end(), cutoff) -
        sorted_timestamps_.begin());
}

std::size_t RetrievalIndex::count_before(std::size_t column, std::int64_t code,
                                         std::int64_t cutoff) const {
    auto it = columns_[column].find(code);
    if (it == columns_[column].end()) {
        return 0;
    }
    const auto& ts = it->second.sorted_timestamps;
    return static_cast<std::size_t>(std::lower_bound(ts.begin(), ts.end(), cutoff) - ts.begin());
}

std::span<const std::uint32_t> RetrievalIndex::postings(std::size_t column, std::int64_t code) const {
    auto it = columns_[column].find(code);
    if (it == columns_[column].end()) {
        return {};
    }
    return it->second.rows;
}

std::map<std::int64_t, std::size_t> RetrievalIndex::frequencies(std::size_t column) const {
    std::map<std::int64_t, std::size_t> out;
    for (const auto& [code, e] : columns_[column]) {
        out[code] = e.rows.size();
    }
    return out;
}

double idf_weight(std::size_t total, std::size_t count, bool clamp) {
    const double n = static_cast<double>(count);
    const double w = std::log((static_cast<double>(total) - n + 0.5) / (n + 0.5));
    return clamp ? std::max(0.0, w) : w;
}

double similarity(const CodedTable& table, std::size_t query, std::size_t key,
                  const RetrievalIndex& index, bool clamp_idf) {
    double score = 0.0;
    for (std::size_t c = 0; c < table.width(); ++c) {
        const std::int64_t x = table.code(query, c);
        if (x != kMissingCode && x == table.code(key, c)) {
            score += idf_weight(index.rows(), index.count(c, x), clamp_idf);
        }
    }
    return score;
}

double similarity_before(const CodedTable& table, std::size_t query, std::size_t key,
                         const RetrievalIndex& index, std::int64_t cutoff, bool clamp_idf) {
    const std::size_t total = index.rows_before(cutoff);
    double score = 0.0;
    for (std::size_t c = 0; c < table.width(); ++c) {
        const std::int64_t x = table.code(query, c);
        if (x != kMissingCode && x == table.code(key, c)) {
            score += idf_weight(total, index.count_before(c, x, cutoff), clamp_idf);
        }
    }
    return score;
}

// --- Top-K -----------------------------------------------------------------------

namespace {

struct Candidate {
    double score;
    std::size_t row;
};

// Ranking order: higher score first, then lower row index. As a heap
// comparator it keeps the worst retained candidate on top.
struct Better {
    bool operator()(const Candidate& a, const Candidate& b) const {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.row < b.row;
    }
};

}  // namespace

DummyTable retrieve_topk(const CodedTable& table, std::size_t k, const RetrievalIndex& index,
                         std::optional<std::span<const std::int64_t>> time_cutoffs, bool clamp_idf) {
    if (k < 1) {
        throw ConfigError("retrieve_topk: K must be at least 1");
    }
    if (time_cutoffs && !table.timestamps) {
        throw ConfigError("retrieve_topk: time cutoffs given for an untimed table");
    }
    if (time_cutoffs && time_cutoffs->size() != table.rows) {
        throw ConfigError("retrieve_topk: one cutoff per row required");
    }
    constexpr auto kNoCutoff = std::numeric_limits<std::int64_t>::max();

    DummyTable out;
    out.source_table = table.table;
    std::vector<double> scores(table.rows, 0.0);
    std::vector<Candidate> heap;
    Better better;

    for (std::size_t q = 0; q < table.rows; ++q) {
        const std::int64_t cutoff = time_cutoffs ? (*time_cutoffs)[q] : kNoCutoff;
        if (time_cutoffs && cutoff == kNoCutoff) {
            continue;  // query without a timestamp
        }
        const std::size_t total = time_cutoffs ? index.rows_before(cutoff) : index.rows();

        // Columns are visited in order so every candidate's sum is accumulated
        // in the same order as a direct pairwise evaluation.
        for (std::size_t c = 0; c < table.width(); ++c) {
            const std::int64_t x = table.code(q, c);
            if (x == kMissingCode) {
                continue;
            }
            const std::size_t n = time_cutoffs ? index.count_before(c, x, cutoff) : index.count(c, x);
            const double w = idf_weight(total, n, clamp_idf);
            for (std::uint32_t r : index.postings(c, x)) {
                scores[r] += w;
            }
        }

        heap.clear();
        for (std::size_t r = 0; r < table.rows; ++r) {
            if (r == q || (time_cutoffs && (*table.timestamps)[r] >= cutoff)) {
                continue;
            }
            Candidate cand{scores[r], r};
            if (heap.size() < k) {
                heap.push_back(cand);
                std::push_heap(heap.begin(), heap.end(), better);
            } else if (better(cand, heap.front())) {
                std::pop_heap(heap.begin(), heap.end(), better);
                heap.back() = cand;
                std::push_heap(heap.begin(), heap.end(), better);
            }
        }
        std::sort_heap(heap.begin(), heap.end(), better);
        for (const Candidate& c : heap) {
            out.links.push_back(RetrievalLink{q, c.row, c.score});
        }

        for (std::size_t c = 0; c < table.width(); ++c) {
            const std::int64_t x = table.code(q, c);
            if (x == kMissingCode) {
                continue;
            }
            for (std::uint32_t r : index.postings(c, x)) {
                scores[r] = 0.0;
            }
        }
    }
    return out;
}

// --- Whole-database retrieval ---------------------------------------------------------

std::vector<std::size_t> retrievable_tables(const Database& db, const RetrievalConfig& config) {
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < db.tables().size(); ++t) {
        const TableDef& def = db.table(t).def;
        if (!def.primary_key() || def.timestamp_from) {
            continue;
        }
        if (feature_columns(db, t).size() < config.min_feature_columns) {
            continue;
        }
        out.push_back(t);
    }
    return out;
}

std::vector<DummyTable> retrieve_all(const Database& db, const RetrievalConfig& config,
                                     std::optional<std::int64_t> visible_cutoff) {
    std::vector<DummyTable> out;
    for (std::size_t t : retrievable_tables(db, config)) {
        const auto ts = db.row_timestamps(t);
        std::vector<std::size_t> visible;
        for (std::size_t r = 0; r < db.table(t).size(); ++r) {
            if (!ts || !visible_cutoff || (*ts)[r] < *visible_cutoff) {
                visible.push_back(r);
            }
        }
        const DiscretizationModel model = fit_discretization(db, t, visible, config.bins);
        const CodedTable coded = code_table(db, t, model);
        const RetrievalIndex index(coded);
        std::optional<std::span<const std::int64_t>> cutoffs;
        if (config.time_filter && coded.timestamps) {
            cutoffs = std::span<const std::int64_t>(*coded.timestamps);
        }
        out.push_back(retrieve_topk(coded, config.k, index, cutoffs, config.clamp_idf));
    }
    return out;
}

Table to_table(const DummyTable& dummy, const Database& db) {
    const std::size_t source = db.table_index(dummy.source_table);
    const Table& src = db.table(source);
    const auto pk = src.def.primary_key();
    if (!pk) {
        throw ConfigError("dummy table source '" + dummy.source_table + "' has no primary key");
    }
    const ColumnRef target{src.def.name, src.def.columns[*pk].name};
    Table t;
    t.def.name = dummy.name();
    t.def.columns = {ColumnDef{"query_id", ColumnKind::foreign_key, target},
                     ColumnDef{"retrieved_id", ColumnKind::foreign_key, target}};
    if (db.row_timestamps(source)) {
        t.def.timestamp_from = "query_id";
    }
    t.rows.reserve(dummy.links.size());
    for (const auto& link : dummy.links) {
        t.rows.push_back({src.at(link.query, *pk), src.at(link.retrieved, *pk)});
    }
    return t;
}

Database with_dummy_tables(const Database& db, std::span<const DummyTable> dummies) {
    Database out = db;
    for (const auto& d : dummies) {
        out.add_table(to_table(d, db));
    }
    return out;
}

void write_dummy_csv(const DummyTable& dummy, const Database& db, const std::filesystem::path& path) {
    write_table_csv(to_table(dummy, db), path);
}

DummyTable read_dummy_csv(const std::filesystem::path& path, const Database& db,
                          const std::string& source_table) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("missing file " + path.string());
    }
    csv::Reader reader(in);
    csv::Record record;
    if (!reader.next(record) || record.fields != std::vector<std::string>{"query_id", "retrieved_id"}) {
        throw DataError("header mismatch in " + path.string());
    }
    const std::size_t source = db.table_index(source_table);
    DummyTable out;
    out.source_table = source_table;
    while (reader.next(record)) {
        if (record.fields.size() != 2) {
            throw DataError(path.string() + ": expected 2 fields");
        }
        auto q = db.find_row(source, record.fields[0]);
        auto r = db.find_row(source, record.fields[1]);
        if (!q || !r) {
            throw DataError("FK violation in " + path.string() + " line " +
                            std::to_string(reader.line()));
        }
        out.links.push_back(RetrievalLink{*q, *r, 0.0});
    }
    return out;
}

}  // namespace srp

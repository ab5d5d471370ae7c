#include "srp/graph.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>

#include "srp/errors.hpp"
#include "srp/random.hpp"

namespace srp {

namespace {

constexpr std::string_view kReverseSuffix = "#rev";

struct EdgeList {
    std::string name;
    std::size_t src_type;
    std::size_t dst_type;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;  // (src node, dst node)
};

EdgeType to_csr(const EdgeList& list, std::size_t src_count) {
    EdgeType e;
    e.name = list.name;
    e.src_type = list.src_type;
    e.dst_type = list.dst_type;
    e.offsets.assign(src_count + 1, 0);
    for (const auto& [s, d] : list.pairs) {
        e.offsets[s + 1] += 1;
    }
    for (std::size_t i = 0; i < src_count; ++i) {
        e.offsets[i + 1] += e.offsets[i];
    }
    e.targets.resize(list.pairs.size());
    std::vector<std::size_t> cursor(e.offsets.begin(), e.offsets.end() - 1);
    // Pairs are appended in source-row order of the owning table, so each
    // neighbor list keeps that order.
    for (const auto& [s, d] : list.pairs) {
        e.targets[cursor[s]++] = d;
    }
    return e;
}

void add_pair(HeteroGraph& g, EdgeList forward) {
    EdgeList backward{std::string(forward.name) + std::string(kReverseSuffix), forward.dst_type, forward.src_type, {}};
    backward.pairs.reserve(forward.pairs.size());
    for (const auto& [s, d] : forward.pairs) {
        backward.pairs.emplace_back(d, s);
    }
    const std::size_t f = g.edge_types.size();
    g.edge_types.push_back(to_csr(forward, g.node_types[forward.src_type].count));
    g.edge_types.push_back(to_csr(backward, g.node_types[backward.src_type].count));
    g.edge_types[f].reverse = f + 1;
    g.edge_types[f + 1].reverse = f;
}

bool converts_to_edges(const TableDef& def) { return !def.primary_key() && def.foreign_keys().size() == 2; }

HeteroGraph build(const Database& db, GraphMode mode) {
    HeteroGraph g;
    g.mode = mode;
    const auto& tables = db.schema().tables;
    std::vector<std::optional<std::size_t>> node_type_of(tables.size());
    for (std::size_t t = 0; t < tables.size(); ++t) {
        if (mode == GraphMode::r2ne && converts_to_edges(tables[t])) {
            continue;
        }
        NodeType nt;
        nt.name = tables[t].name;
        nt.table = t;
        nt.count = db.table(t).size();
        nt.timestamps = db.row_timestamps(t);
        nt.inherited_time = !tables[t].timestamp_column && tables[t].timestamp_from.has_value();
        node_type_of[t] = g.node_types.size();
        g.node_types.push_back(std::move(nt));
    }

    for (std::size_t t = 0; t < tables.size(); ++t) {
        const TableDef& def = tables[t];
        const auto fks = def.foreign_keys();
        if (!node_type_of[t]) {
            // Converted two-FK table: one edge per row with both keys present.
            const auto a = db.resolve_foreign_key(t, fks[0]);
            const auto b = db.resolve_foreign_key(t, fks[1]);
            const std::size_t ta = db.table_index(def.columns[fks[0]].fk_target->table);
            const std::size_t tb = db.table_index(def.columns[fks[1]].fk_target->table);
            if (!node_type_of[ta] || !node_type_of[tb]) {
                throw ConfigError("table " + def.name + " links tables that are themselves converted to edges");
            }
            EdgeList list{def.name, *node_type_of[ta], *node_type_of[tb], {}};
            for (std::size_t r = 0; r < a.size(); ++r) {
                if (a[r] && b[r]) {
                    list.pairs.emplace_back(static_cast<std::uint32_t>(*a[r]), static_cast<std::uint32_t>(*b[r]));
                }
            }
            add_pair(g, std::move(list));
            continue;
        }
        for (std::size_t c : fks) {
            const std::size_t target = db.table_index(def.columns[c].fk_target->table);
            if (!node_type_of[target]) {
                throw ConfigError("foreign key " + def.name + "." + def.columns[c].name +
                                  " references a table converted to edges");
            }
            const auto resolved = db.resolve_foreign_key(t, c);
            EdgeList list{def.name + "." + def.columns[c].name, *node_type_of[t], *node_type_of[target], {}};
            for (std::size_t r = 0; r < resolved.size(); ++r) {
                if (resolved[r]) {
                    list.pairs.emplace_back(static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(*resolved[r]));
                }
            }
            add_pair(g, std::move(list));
        }
    }
    return g;
}

}  // namespace

std::string_view to_string(GraphMode mode) { return mode == GraphMode::r2n ? "r2n" : "r2ne"; }

GraphMode parse_graph_mode(std::string_view name) {
    if (name == "r2n" || name == "R2N") {
        return GraphMode::r2n;
    }
    if (name == "r2ne" || name == "R2N/E" || name == "r2n/e") {
        return GraphMode::r2ne;
    }
    throw ConfigError("unknown graph mode: " + std::string(name));
}

bool EdgeType::is_reverse() const { return name.ends_with(kReverseSuffix); }

std::optional<std::size_t> HeteroGraph::node_type_index(std::string_view name) const {
    for (std::size_t i = 0; i < node_types.size(); ++i) {
        if (node_types[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

std::size_t HeteroGraph::node_count() const {
    std::size_t n = 0;
    for (const auto& t : node_types) {
        n += t.count;
    }
    return n;
}

std::size_t HeteroGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto& e : edge_types) {
        n += e.edge_count();
    }
    return n;
}

std::vector<std::size_t> HeteroGraph::incoming_types(std::size_t type) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < edge_types.size(); ++i) {
        if (edge_types[i].src_type == type) {
            out.push_back(i);
        }
    }
    return out;
}

HeteroGraph build_r2n(const Database& db) { return build(db, GraphMode::r2n); }
HeteroGraph build_r2ne(const Database& db) { return build(db, GraphMode::r2ne); }
HeteroGraph build_graph(const Database& db, GraphMode mode) { return build(db, mode); }

void write_edge_lists(const HeteroGraph& graph, const Database& db, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto node_label = [&](std::size_t type, std::size_t id) {
        const Table& t = db.table(graph.node_types[type].table);
        if (auto pk = t.def.primary_key()) {
            return t.at(id, *pk).to_cell();
        }
        return std::to_string(id);
    };
    for (const EdgeType& e : graph.edge_types) {
        if (e.is_reverse()) {
            continue;
        }
        std::ofstream out(dir / (e.name + ".csv"));
        if (!out) {
            throw DataError("cannot write edge list for " + e.name);
        }
        const std::string& src_name = graph.node_types[e.src_type].name;
        const std::string& dst_name = graph.node_types[e.dst_type].name;
        for (std::size_t s = 0; s + 1 < e.offsets.size(); ++s) {
            for (std::uint32_t d : e.neighbors(s)) {
                out << src_name << ',' << node_label(e.src_type, s) << ',' << dst_name << ','
                    << node_label(e.dst_type, d) << '\n';
            }
        }
    }
}

// --- Sampling ---------------------------------------------------------------------

SampledBlock sample_neighbors(const HeteroGraph& graph, std::size_t seed_type, std::span<const std::size_t> seeds,
                              std::optional<std::span<const std::int64_t>> cutoffs, const SamplerConfig& config) {
    if (config.fanout.empty()) {
        throw ConfigError("fanout list is empty");
    }
    if (cutoffs && cutoffs->size() != seeds.size()) {
        throw ConfigError("one cutoff per seed is required");
    }
    const NodeType& st = graph.node_types.at(seed_type);
    SampledBlock block;
    block.layers = config.layers;
    block.level_offsets.push_back(0);
    std::vector<Rng> rngs;
    rngs.reserve(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (seeds[i] >= st.count) {
            throw ConfigError("seed node out of range");
        }
        block.nodes.push_back(BlockNode{static_cast<std::uint32_t>(seed_type), static_cast<std::uint32_t>(seeds[i]),
                                        0, static_cast<std::uint32_t>(i)});
        rngs.emplace_back(mix64(config.seed, mix64(seed_type, seeds[i])));
    }
    block.level_offsets.push_back(block.nodes.size());

    std::vector<std::vector<std::size_t>> incoming(graph.node_types.size());
    for (std::size_t t = 0; t < graph.node_types.size(); ++t) {
        incoming[t] = graph.incoming_types(t);
    }

    auto visible = [&](std::size_t type, std::size_t id, std::int64_t cutoff) {
        const NodeType& nt = graph.node_types[type];
        if (!nt.timestamps) {
            return true;
        }
        const std::int64_t ts = (*nt.timestamps)[id];
        if (ts == std::numeric_limits<std::int64_t>::max()) {
            return false;
        }
        return nt.inherited_time ? ts <= cutoff : ts < cutoff;
    };

    std::vector<std::uint32_t> candidates;
    std::vector<std::size_t> picked;
    for (std::size_t level = 0; level < config.layers; ++level) {
        const std::size_t fanout = config.fanout[std::min(level, config.fanout.size() - 1)];
        const std::size_t begin = block.level_offsets[level];
        const std::size_t end = block.level_offsets[level + 1];
        for (std::size_t p = begin; p < end; ++p) {
            const BlockNode parent = block.nodes[p];
            const bool masked = config.temporal && cutoffs.has_value();
            const std::int64_t cutoff = masked ? (*cutoffs)[parent.seed] : 0;
            Rng& rng = rngs[parent.seed];
            for (std::size_t r : incoming[parent.type]) {
                const EdgeType& et = graph.edge_types[r];
                candidates.clear();
                for (std::uint32_t n : et.neighbors(parent.id)) {
                    if (!masked || visible(et.dst_type, n, cutoff)) {
                        candidates.push_back(n);
                    }
                }
                picked.clear();
                if (candidates.size() <= fanout) {
                    for (std::size_t i = 0; i < candidates.size(); ++i) {
                        picked.push_back(i);
                    }
                } else {
                    // Floyd's algorithm: fanout distinct indices, uniform.
                    std::set<std::size_t> chosen;
                    const std::size_t n = candidates.size();
                    for (std::size_t j = n - fanout; j < n; ++j) {
                        const std::size_t t = rng.below(j + 1);
                        if (!chosen.insert(t).second) {
                            chosen.insert(j);
                        }
                    }
                    picked.assign(chosen.begin(), chosen.end());
                }
                for (std::size_t i : picked) {
                    block.edges.push_back(BlockEdge{static_cast<std::uint32_t>(block.nodes.size()),
                                                    static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(r)});
                    block.nodes.push_back(BlockNode{static_cast<std::uint32_t>(et.dst_type), candidates[i],
                                                    static_cast<std::uint32_t>(level + 1), parent.seed});
                }
            }
        }
        block.level_offsets.push_back(block.nodes.size());
    }
    return block;
}

}  // namespace srp

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "srp/rdb.hpp"

namespace srp {

enum class GraphMode { r2n, r2ne };

std::string_view to_string(GraphMode mode);
GraphMode parse_graph_mode(std::string_view name);

struct NodeType {
    std::string name;
    std::size_t table = 0;
    std::size_t count = 0;
    // Effective row timestamps (see Database::row_timestamps); nullopt when untimed.
    std::optional<std::vector<std::int64_t>> timestamps;
    // Timestamp borrowed through a foreign key rather than owned.
    bool inherited_time = false;
};

/// Typed directed edges in CSR form: neighbors(v) are the `dst_type` nodes that
/// send messages to the `src_type` node v.
struct EdgeType {
    std::string name;  // `Table.fk_column`, converted tables by table name; reverses end in `#rev`
    std::size_t src_type = 0;
    std::size_t dst_type = 0;
    std::size_t reverse = 0;
    std::vector<std::size_t> offsets;  // src count + 1
    std::vector<std::uint32_t> targets;

    std::span<const std::uint32_t> neighbors(std::size_t node) const {
        return {targets.data() + offsets[node], offsets[node + 1] - offsets[node]};
    }
    std::size_t edge_count() const { return targets.size(); }
    bool is_reverse() const;
};

class HeteroGraph {
  public:
    std::vector<NodeType> node_types;
    std::vector<EdgeType> edge_types;
    GraphMode mode = GraphMode::r2n;

    std::optional<std::size_t> node_type_index(std::string_view name) const;
    std::size_t node_count() const;
    std::size_t edge_count() const;
    /// Edge types whose messages arrive at nodes of `type`, in creation order.
    std::vector<std::size_t> incoming_types(std::size_t type) const;
};

/// One node per row of every table; each non-Missing FK cell adds a forward
/// edge and its reverse.
HeteroGraph build_r2n(const Database& db);

/// As R2N, but tables with no primary key and exactly two foreign keys become
/// edge types between the two referenced tables.
HeteroGraph build_r2ne(const Database& db);

HeteroGraph build_graph(const Database& db, GraphMode mode);

/// Writes `<dir>/<edge type>.csv` with `src_type,src_id,dst_type,dst_id` lines,
/// ids being primary key values where the table has one and row indices
/// otherwise. Reverse types are skipped.
void write_edge_lists(const HeteroGraph& graph, const Database& db, const std::filesystem::path& dir);

// --- Sampling ---------------------------------------------------------------------

struct BlockNode {
    std::uint32_t type = 0;
    std::uint32_t id = 0;
    std::uint32_t level = 0;
    std::uint32_t seed = 0;  // index of the seed whose tree holds this entry

    bool operator==(const BlockNode&) const = default;
};

/// Message from a node one level deeper (src) to its parent entry (dst).
struct BlockEdge {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint32_t type = 0;

    bool operator==(const BlockEdge&) const = default;
};

/// Per-seed sampled computation trees, stored level by level. Level 0 holds the
/// seeds in input order; nodes of level l occupy [level_offsets[l],
/// level_offsets[l + 1]). Every seed's tree is sampled independently, so a
/// seed's block does not depend on the other seeds of the batch.
struct SampledBlock {
    std::size_t layers = 0;
    std::vector<BlockNode> nodes;
    std::vector<std::size_t> level_offsets;
    std::vector<BlockEdge> edges;

    std::size_t seed_count() const { return level_offsets.size() > 1 ? level_offsets[1] : 0; }
    std::size_t level_size(std::size_t level) const { return level_offsets[level + 1] - level_offsets[level]; }

    bool operator==(const SampledBlock&) const = default;
};

struct SamplerConfig {
    std::size_t layers = 2;
    std::vector<std::size_t> fanout{10};  // per layer; the last entry repeats
    std::uint64_t seed = 0;
    bool temporal = true;
};

/// Uniform sampling without replacement of up to fanout neighbors per
/// (node, edge type). With `cutoffs` and temporal masking, neighbors from timed
/// tables are kept only when their timestamp precedes the seed's cutoff
/// (strictly for owned timestamps, inclusively for inherited ones).
SampledBlock sample_neighbors(const HeteroGraph& graph, std::size_t seed_type, std::span<const std::size_t> seeds,
                              std::optional<std::span<const std::int64_t>> cutoffs, const SamplerConfig& config);

}  // namespace srp

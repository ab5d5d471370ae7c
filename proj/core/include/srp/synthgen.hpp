#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "srp/rdb.hpp"

namespace srp {

/// Planted-signal benchmark: User, Item, timestamped Session and Interaction
/// tables. The binary `label` of an interaction mixes a per-user latent
/// (visible through the user's `activity`, the `score` of the user's sessions
/// and past labels of the same user) and a per-bucket
/// polarity. Interactions of one bucket share most of a prototype over the
/// attributes `c1`..`c6`; no FK links them, and buckets live only for a short
/// stretch of time, so the polarity of a new bucket is learnable only from its
/// earlier labeled rows.
struct SynthSpec {
    std::size_t n_users = 250;
    std::size_t n_items = 100;
    std::size_t n_interactions = 5000;
    std::size_t n_sessions = 5000;
    double unary_signal_strength = 0.8;
    double composite_signal_strength = 0.8;
    double noise = 0.1;          // probability a label is replaced by a biased coin
    std::uint64_t seed = 0;
    double class_balance = 0.5;  // target positive rate

    /// Throws ConfigError on sizes of zero or rates outside [0, 1].
    void validate() const;
};

struct SynthData {
    Database db;
    /// Per interaction, P(label = 1) under the generator (noise included).
    std::vector<double> probability;
    std::vector<double> unary_latent;      // per user
    std::vector<double> composite_latent;  // per interaction (its bucket's value)
};

SynthData generate_synthetic(const SynthSpec& spec);

/// Writes schema.json and one CSV per table into `dir`.
void generate_to_disk(const SynthSpec& spec, const std::filesystem::path& dir);

}  // namespace srp

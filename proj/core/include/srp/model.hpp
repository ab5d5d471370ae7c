#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "srp/encoding.hpp"
#include "srp/graph.hpp"
#include "srp/nn.hpp"
#include "srp/propagation.hpp"
#include "srp/rdb.hpp"
#include "srp/retrieval.hpp"
#include "srp/synthesis.hpp"

namespace srp {

// --- Configuration --------------------------------------------------------------

struct ModuleToggles {
    bool synthesis = true;
    bool retrieval = true;
    bool propagation = true;

    bool any() const { return synthesis || retrieval || propagation; }
    /// `S+R+P`, `S`, ... and `none` for the all-off row.
    std::string label() const;
    /// Comma list such as `s,r,p`; empty or `none` turns everything off.
    static ModuleToggles parse(std::string_view text);

    bool operator==(const ModuleToggles&) const = default;
};

struct Hyperparameters {
    double learning_rate = 3e-3;
    std::size_t batch_size = 256;
    std::size_t embedding_size = 16;  // H_u and H_c width
    std::size_t hidden_size = 32;     // fusion MLP hidden width
    double dropout = 0.5;
    std::size_t mlp_layers = 2;
    std::size_t gnn_layers = 2;
    std::size_t fanout = 5;
    std::size_t k = 3;
    std::size_t m = 2;
    std::size_t bins = 10;

    bool operator==(const Hyperparameters&) const = default;
};

struct SRPConfig {
    ModuleToggles toggles;
    GraphMode graph_mode = GraphMode::r2ne;
    Hyperparameters hp;
    std::uint64_t seed = 0;
    std::optional<TaskKind> task;  // defaults to the schema's target task

    std::size_t max_epochs = 40;
    std::size_t patience = 10;
    double train_fraction = 0.6;
    double valid_fraction = 0.2;
    std::size_t synthesis_depth = 2;
    bool time_filter = true;
    std::size_t max_vocabulary = 64;
    std::size_t text_dim = 16;
    std::string word_vectors;  // optional path

    /// Throws ConfigError. The all-off combination is only accepted with
    /// `allow_all_off` (ablation baseline row).
    void validate(bool allow_all_off = false) const;

    bool operator==(const SRPConfig&) const = default;
};

std::string config_to_json(const SRPConfig& config);
SRPConfig config_from_json(std::string_view text);
SRPConfig load_config(const std::filesystem::path& path);
void save_config(const SRPConfig& config, const std::filesystem::path& path);

// --- Evaluation reports ----------------------------------------------------------------

struct EvalRow {
    std::string combo;
    std::string seed;
    std::string split;
    std::string metric;
    double value = 0.0;

    bool operator==(const EvalRow&) const = default;
};

struct EvalReport {
    std::vector<EvalRow> rows;

    void add(std::string combo, std::string seed, std::string split, std::string metric, double value);
    const EvalRow* find(std::string_view combo, std::string_view seed, std::string_view split) const;
    /// `combo,seed,split,metric,value` with shortest round-trip numbers.
    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;
};

// --- Task -------------------------------------------------------------------------------

/// Labels of the target table decoded for one task.
struct TaskInfo {
    TaskKind kind = TaskKind::binary;
    std::vector<std::string> classes;       // sorted; binary positive class is classes[1]
    std::vector<double> targets;            // per target row: class index or numeric value
    std::vector<bool> labeled;              // per target row
    double target_mean = 0.0;               // regression scaling, train rows
    double target_std = 1.0;

    std::size_t output_width() const;
    /// Width of the label channel: class indicator (or scaled target) plus a known flag.
    std::size_t label_channel_width() const;
    std::string metric_name() const;
};

TaskInfo decode_task(const Database& db, TaskKind kind, std::span<const std::size_t> train_rows);

// --- Offline stages ---------------------------------------------------------------------

/// Encoded raw node features per table, label channel included for the target
/// table. Rows of tables are encoded with specs fitted on visible rows.
struct TableEncodings {
    std::vector<nn::Tensor> per_table;
    std::size_t label_offset = 0;  // start of the label channel in the target table encoding
};

/// Everything computed before training: split, synthesized features,
/// retrieval links and graphs. Stages not requested by the toggles are left
/// empty, so a toggled-off module has no inputs at all.
struct PreparedData {
    Database db;
    Split split;
    TaskInfo task;
    std::optional<std::int64_t> visible_cutoff;   // first non-training target timestamp
    std::vector<std::int64_t> target_cutoffs;      // per target row; INT64_MAX when untimed
    bool time_filter = true;
    bool has_synthesis = false;
    bool has_retrieval = false;
    bool has_propagation = false;

    std::vector<SynthesisPath> paths;
    FeatureTable unary_features;                   // original, or original + synthesized

    std::vector<DummyTable> dummies;
    std::optional<Database> retrieval_db;          // db with dummy tables

    std::optional<HeteroGraph> graph;              // over db
    std::optional<HeteroGraph> retrieval_graph;    // over retrieval_db

    std::optional<nn::Tensor> retrieval_features;  // per target row aggregate of retrieved rows
    std::optional<TableEncodings> encodings;       // node features, present with R or P
};

struct PrepareOptions {
    bool synthesis = true;
    bool retrieval = true;
    bool propagation = true;
};

/// Runs the offline stages for `config` (or for every module in `options`).
PreparedData prepare(const Database& db, const SRPConfig& config, const PrepareOptions& options);
PreparedData prepare(const Database& db, const SRPConfig& config);

TableEncodings encode_tables(const PreparedData& data, const SRPConfig& config);

// --- The model -------------------------------------------------------------------------

/// Fusion model: y = act(MLP(H_u (+) H_c)). H_u is a dense projection of
/// the encoded unary features (target features, synthesized features when S is
/// on, retrieval aggregates when R is on); H_c comes from propagation.
class SrpModel {
  public:
    SrpModel(const PreparedData& data, const SRPConfig& config);
    SrpModel(const SrpModel&) = delete;
    SrpModel& operator=(const SrpModel&) = delete;

    const SRPConfig& config() const { return config_; }
    bool uses_unary() const { return use_unary_; }
    bool uses_graph() const { return propagator_ != nullptr; }
    const HeteroGraph* graph() const { return graph_; }
    std::size_t unary_width() const { return unary_inputs_.cols(); }
    const NodeInputs& node_inputs() const { return node_inputs_; }
    Propagator* propagator() { return propagator_.get(); }

    std::vector<nn::Parameter*> parameters();
    std::string checkpoint() const;
    void restore(const std::string& bytes);

    /// Sampled block of a batch of target rows.
    SampledBlock sample(std::span<const std::size_t> rows, std::uint64_t sampler_seed) const;

    /// Output activations (rows x output width) recorded on `tape`.
    nn::Var forward(nn::Tape& tape, std::span<const std::size_t> rows, const SampledBlock* block,
                    Rng* dropout_rng);

    /// Inference in batches with the fixed evaluation sampler.
    nn::Tensor predict(std::span<const std::size_t> rows);

    /// Loss of the task on the given rows' activations.
    nn::Var loss(nn::Var output, std::span<const std::size_t> rows) const;

    /// Task metric (AUC, ACC or RMSE) on rows; nullopt when undefined.
    std::optional<double> evaluate(std::span<const std::size_t> rows);

    std::uint64_t eval_sampler_seed() const;

  private:
    const PreparedData* data_;
    SRPConfig config_;
    bool use_unary_ = false;
    nn::Tensor unary_inputs_;
    const HeteroGraph* graph_ = nullptr;
    NodeInputs node_inputs_;
    std::size_t target_node_type_ = 0;
    std::unique_ptr<Propagator> propagator_;

    nn::Parameter unary_weight_;
    nn::Parameter unary_bias_;
    std::vector<nn::Parameter> head_weights_;
    std::vector<nn::Parameter> head_biases_;
};

struct TrainResult {
    EvalReport report;                 // train/valid/test metrics
    std::size_t best_epoch = 0;
    std::vector<double> valid_history;
    std::vector<double> loss_history;
    std::string checkpoint;            // best-validation parameters
};

/// Mini-batch Adam training with early stopping on the validation metric; the
/// best checkpoint is restored into `model` before the final evaluation.
TrainResult train_model(SrpModel& model, const PreparedData& data, std::string_view combo = "");

/// Convenience: prepare + build + train.
TrainResult train(const Database& db, const SRPConfig& config);

/// Higher-is-better form of a task metric.
double selection_score(TaskKind kind, double metric);

// --- Harnesses ---------------------------------------------------------------------

/// The eight toggle combinations in the order none, S, R, P, S+R, S+P, R+P, S+R+P.
std::vector<ModuleToggles> ablation_combinations();

struct AblationRow {
    std::string combo;
    double mean = 0.0;
    double average_rank = 0.0;
    std::vector<double> per_seed;
};

struct AblationResult {
    EvalReport report;
    std::vector<AblationRow> rows;

    /// `combo,mean_<metric>,avg_rank` summary, one line per combination.
    std::string summary_csv(std::string_view metric) const;
    const AblationRow* find(std::string_view combo) const;
};

struct AblationOptions {
    std::size_t seeds = 5;
    bool select_graph_mode = true;  // also try the other graph mode for P-bearing rows, pick on validation
    std::vector<ModuleToggles> combinations;  // empty = all eight
    std::size_t workers = 1;
};

/// Runs every combination for `seeds` consecutive seeds from base.seed and
/// reports test metrics, seed means and average ranks.
AblationResult ablate(const Database& db, const SRPConfig& base, const AblationOptions& options);

// --- Random search --------------------------------------------------------------------

struct ParamRange {
    enum class Kind { uniform, log_uniform, integer, choice };
    Kind kind = Kind::uniform;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::string> choices;
};

/// Search space over hyperparameters; absent keys keep the base value.
struct SearchGrid {
    std::vector<std::pair<std::string, ParamRange>> params;

    /// Ranges of the published grid (learning rate log-uniform in [1e-4, 1e-2], ...).
    static SearchGrid defaults();
    static SearchGrid parse(std::string_view json_text);
    static SearchGrid load(const std::filesystem::path& path);
    std::string to_json() const;

    /// Throws ConfigError when a range leaves the published bounds.
    void validate() const;
};

SRPConfig sample_config(const SearchGrid& grid, const SRPConfig& base, Rng& rng);

struct SearchResult {
    SRPConfig best;
    std::size_t best_trial = 0;
    std::vector<SRPConfig> configs;
    EvalReport report;  // combo column holds `trial<i>`
};

SearchResult random_search(const Database& db, const SearchGrid& grid, const SRPConfig& base, std::size_t trials,
                           std::size_t workers = 1);

}  // namespace srp

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "srp/random.hpp"

namespace srp::nn {

/// Dense row-major float64 matrix. Vectors are 1 x n, scalars 1 x 1.
class Tensor {
  public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(1, 1, v); }
    static Tensor row_vector(std::vector<double> v);

    std::vector<std::size_t> shape() const { return {rows_, cols_}; }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    void fill(double v);
    bool all_finite() const;

    bool operator==(const Tensor&) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Trainable tensor with its gradient accumulator and Adam moments.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor first_moment;
    Tensor second_moment;
    std::uint64_t steps = 0;

    Parameter() = default;
    Parameter(std::string name, std::size_t rows, std::size_t cols);

    void zero_grad() { grad.fill(0.0); }
};

/// uniform(-a, a) with a = sqrt(6 / (rows + cols)).
void glorot_uniform(Parameter& p, Rng& rng);

class Tape;

/// Handle to a tape node.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

/// Records differentiable operations in execution order, which is already a
/// topological order. One tape serves one forward/backward pass.
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    Var constant(Tensor value);
    Var parameter(Parameter& p);
    Var record(Tensor value, BackwardFn backward);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    /// Gradient slot of a node, zero-allocated on first use.
    Tensor& grad(std::size_t id);
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    /// Back-propagates from a scalar node, accumulating (+=) into the
    /// gradients of every parameter used, then clears the tape.
    void backward(Var loss);

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        Parameter* param = nullptr;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

void backward(Tape& tape, Var loss);

// --- Operations --------------------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// a (n x c) plus a 1 x c row broadcast over rows.
Var add_row(Var a, Var bias);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
/// Row-wise softmax with max subtraction.
Var softmax(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// out[i] = a[index[i]]
Var gather_rows(Var a, std::span<const std::size_t> index);
/// out[d] = mean of src[s] over pairs (s, d); rows without pairs are zero.
Var segment_mean(Var src, std::span<const std::size_t> src_rows, std::span<const std::size_t> dst_rows,
                 std::size_t dst_count);
/// Column means, 1 x c.
Var mean_rows(Var a);
/// Inverted dropout; identity when rate == 0.
Var dropout(Var a, double rate, Rng& rng);
/// Repeats a 1 x c row n times.
Var broadcast_rows(Var row, std::size_t n);

/// Mean binary cross-entropy of probabilities p (n x 1) against 0/1 labels.
/// Probabilities are clamped to [1e-12, 1 - 1e-12].
Var bce(Var p, std::span<const double> labels);
/// Mean categorical cross-entropy of row probabilities (n x C).
Var cross_entropy(Var p, std::span<const std::size_t> labels);
/// Mean squared error of an n x 1 prediction.
Var mse(Var pred, std::span<const double> targets);

Var linear(Var x, Var weight, Var bias);

// --- Optimizer and checkpoints -----------------------------------------------------------

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam update; gradients are zeroed afterwards.
void adam_step(std::span<Parameter* const> params, const AdamOptions& options);

/// Binary layout: "SRPCKPT1", u32 count, per parameter (u32 name length, name,
/// u32 rank, u64 dims...), then every value row-major as little-endian f64.
std::string checkpoint_bytes(std::span<const Parameter* const> params);
void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter* const> params);
/// Restores values; throws DataError when names or shapes differ.
void load_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params);
void load_checkpoint_bytes(const std::string& bytes, std::span<Parameter* const> params);

}  // namespace srp::nn

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hgx/matrix.hpp"
#include "hgx/rng.hpp"

namespace hgx::ad {

/// A learnable matrix that outlives individual tapes.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Owns parameters with stable addresses, in registration order.
class ParameterSet {
 public:
  Parameter& add(std::string name, Matrix value);
  Parameter* find(std::string_view name) noexcept;
  const Parameter* find(std::string_view name) const noexcept;

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) noexcept { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const noexcept { return *params_[i]; }

  void zero_grad();
  std::size_t scalar_count() const noexcept;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

  Tape& tape() const noexcept { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode computation tape. Nodes are appended in evaluation order, so
/// the append order is a topological order and backward walks it in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var leaf(Matrix value);
  /// Leaf bound to `p`; backward() adds this node's gradient into p.grad.
  Var param(Parameter& p);

  /// Appends an op result. `backward` may be empty when no parent needs a gradient.
  Var push(Matrix value, bool requires_grad, BackwardFn backward);

  /// Seeds d(output)/d(output) = 1 and propagates; output must be 1x1.
  void backward(Var output);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, zero-allocated on first use.
  Matrix& grad(std::size_t id);
  const Matrix& grad_view(std::size_t id) const { return nodes_[id].grad; }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Training mode enables dropout; rng drives the dropout masks.
  void set_training(bool training, Rng* rng = nullptr) {
    training_ = training;
    rng_ = rng;
  }
  bool training() const noexcept { return training_; }
  Rng* rng() const noexcept { return rng_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* bound = nullptr;
  };
  std::vector<Node> nodes_;
  bool training_ = false;
  Rng* rng_ = nullptr;
};

// ---- differentiable ops -----------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1 x c row to every row of a.
Var add_row(Var a, Var row);
/// Multiplies row i of a by the constant weights[i].
Var scale_rows(Var a, std::span<const double> weights);

/// Multiplies row i of a by col[i] (col is r x 1, differentiable).
Var mul_col(Var a, Var col);
Var transpose(Var a);

Var relu(Var a);
Var elu(Var a, double alpha = 1.0);
Var leaky_relu(Var a, double slope = 0.2);
Var tanh(Var a);
Var sigmoid(Var a);
/// Elementwise a^p. Non-integer p with a negative base raises NegativeBase.
Var power(Var a, double p);

Var row_softmax(Var a);
/// Row-wise normalization to zero mean / unit variance, then row-broadcast affine (gain, bias are 1 x c).
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
/// Divides every row by its Euclidean norm; a zero row raises ZeroNormRow.
Var row_l2_normalize(Var a);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// out[k] = a[index[k]]
Var gather_rows(Var a, std::span<const std::size_t> index);

/// Sums rows into `segments` buckets: out[s] = sum of a[k] with segment[k] == s,
/// accumulated in row order. Empty buckets are zero rows.
Var segment_sum(Var a, std::span<const std::size_t> segment, std::size_t segments);
/// Per-column product within each bucket; an empty bucket yields ones.
Var segment_prod(Var a, std::span<const std::size_t> segment, std::size_t segments);
/// Per-column softmax across the rows sharing a bucket.
Var segment_softmax(Var a, std::span<const std::size_t> segment, std::size_t segments);

/// Inverted dropout; identity when the tape is not training or rate == 0.
Var dropout(Var a, double rate);

Var sum_all(Var a);
/// Mean negative log-softmax of labels[r] over rows r in mask.
Var cross_entropy(Var logits, std::span<const int> labels, std::span<const std::size_t> mask);
/// Mean squared error against a constant target of the same shape.
Var mse(Var prediction, const Matrix& target);

// ---- gradient checking ------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares reverse-mode gradients of a scalar computation against central
/// differences (step h) for every entry of every parameter in `params`.
/// Relative error uses the denominator max(|analytic|, |numeric|, 1e-8).
/// `build` must rebuild the computation on the given tape from `params`.
GradCheckReport grad_check(ParameterSet& params, const std::function<Var(Tape&)>& build, double h = 1e-5);

}  // namespace hgx::ad

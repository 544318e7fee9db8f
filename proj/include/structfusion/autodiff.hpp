#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every node that requires a gradient in creation order, so a
// reverse walk over the tape is a valid reverse topological order. Nodes that
// do not depend on any trainable leaf are never recorded and are released as
// soon as the last Var referencing them goes away; inference therefore runs
// with a grad-disabled tape at no memory cost.
//
// All values are 2-D. Vectors are 1 x n rows; a batch of vectors is b x n.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace structfusion {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Index = Eigen::Index;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OpKind {
  Leaf,
  Add,
  AddRowBias,
  Sub,
  Matmul,
  MatmulTransposed,
  Affine,
  Concat,
  Mul,
  ScaleRows,
  Scale,
  Sigmoid,
  Tanh,
  Relu,
  Softmax,
  Log,
  EmbeddingLookup,
  Slice,
  Sum,
  SoftmaxCrossEntropy,
  BinaryCrossEntropy,
};

const char* op_name(OpKind kind);

/// A trainable array. Gradients accumulate into `grad` across backward passes
/// until the optimizer clears them.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

struct Node {
  OpKind kind = OpKind::Leaf;
  Matrix value;
  const Matrix* external = nullptr;  // parameter leaves alias the parameter value
  Matrix grad;
  bool requires_grad = false;
  Tape* tape = nullptr;
  Parameter* param = nullptr;
  std::vector<std::shared_ptr<Node>> parents;

  // Per-op auxiliary data.
  std::vector<int> ids;
  std::vector<double> weights;
  Matrix aux;
  Index offset = 0;
  double scalar = 0.0;

  const Matrix& data() const { return external ? *external : value; }
  Index rows() const { return data().rows(); }
  Index cols() const { return data().cols(); }
};

/// Handle to a node. Cheap to copy.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->data(); }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  Index rows() const { return node_->rows(); }
  Index cols() const { return node_->cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  OpKind kind() const { return node_->kind; }
  double scalar() const { return node_->data()(0, 0); }
  explicit operator bool() const { return static_cast<bool>(node_); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value);
  /// A free leaf that receives a gradient (when the tape records gradients).
  Var variable(Matrix value);
  /// Binds a parameter once per tape; later calls return the same node.
  Var param(Parameter& p);

  /// Runs reverse-mode accumulation from a 1x1 loss. Gradients of parameter
  /// leaves are added into Parameter::grad for trainable parameters.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::shared_ptr<Node>>& nodes() const { return nodes_; }

  // Used by op constructors.
  void record(const std::shared_ptr<Node>& node) { nodes_.push_back(node); }

 private:
  bool grad_enabled_;
  std::vector<std::shared_ptr<Node>> nodes_;
  std::vector<std::pair<Parameter*, Var>> bound_;
};

// ---- operations -----------------------------------------------------------
// Shape contracts are checked eagerly and violations throw ShapeError naming
// the op and the offending shapes.

Var add(const Var& a, const Var& b);        // same shape, or b is 1 x cols(a) (bias add)
Var sub(const Var& a, const Var& b);        // same shape
Var matmul(const Var& a, const Var& b);     // (m x k)(k x n)
Var matmul_nt(const Var& x, const Var& w);  // x w^T: (m x k)(n x k) -> m x n
Var affine(const Var& x, const Var& w, const Var& b);  // x w^T + b, b is 1 x n
Var concat(std::span<const Var> parts);     // column-wise, equal row counts
Var concat(std::initializer_list<Var> parts);
Var mul(const Var& a, const Var& b);        // elementwise, same shape
Var scale_rows(const Var& a, const Var& s); // a (m x n) times s (m x 1) per row
Var scale(const Var& a, double s);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var softmax(const Var& a);                  // row-wise, max-shifted
Var log(const Var& a);
Var embedding_lookup(const Var& table, std::span<const int> ids);
Var slice(const Var& a, Index col_begin, Index col_count);
Var sum(const Var& a);

/// sum_r weight_r * -log softmax(logits_r)[target_r], computed with
/// log-sum-exp. Rows with zero weight contribute nothing.
Var softmax_cross_entropy(const Var& logits, std::span<const int> targets,
                          std::span<const double> row_weights);

/// Mean over all entries of the binary cross-entropy between sigmoid(logits)
/// and 0/1 targets, evaluated in the stable logits form.
Var binary_cross_entropy(const Var& logits, const Matrix& targets);

// ---- verification ----------------------------------------------------------

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-12);

/// Denominator floor for gradient checks. With epsilon = 1e-5 the central
/// difference of an O(1) loss carries roughly 1e-11 of rounding noise, so
/// coordinates whose gradient is below this floor are compared on absolute
/// error (|a - n| <= 1e-4 * floor) instead of a meaningless ratio.
inline constexpr double kGradCheckFloor = 1e-6;

/// Parameter checks raise the floor to kGradCheckNoiseFactor * |L| * u / epsilon
/// (u the unit roundoff) when that is larger: the absolute error allowed on a
/// tiny coordinate is then ten times the rounding noise of the difference.
inline constexpr double kGradCheckNoiseFactor = 1e5;

/// Compares the analytic gradient of `f` at `point` against central
/// differences with step `epsilon`. Returns the max relative error over all
/// coordinates. Throws NonFiniteError if f produces a non-finite value.
double finite_diff_check(const std::function<Var(Tape&, const Var&)>& f, const Matrix& point,
                         double epsilon = 1e-5, double floor = kGradCheckFloor);

/// Same check against parameters perturbed in place. `loss` must build a
/// fresh scalar on the given tape. At most `samples` coordinates are probed,
/// drawn uniformly over all entries of all parameters with `seed`; pass
/// samples = 0 to probe every coordinate. Parameter values are restored.
struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t probed = 0;
  std::size_t below_floor = 0;  // coordinates with |gradient| < floor
  double floor = 0.0;           // effective denominator floor
  std::string worst;            // "<param>[r,c]" of the worst coordinate
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};
GradCheckResult check_parameter_gradients(const std::function<Var(Tape&)>& loss,
                                          std::span<Parameter* const> params, std::size_t samples,
                                          std::uint64_t seed, double epsilon = 1e-5,
                                          double floor = kGradCheckFloor);

}  // namespace structfusion

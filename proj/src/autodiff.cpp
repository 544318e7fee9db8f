#include "structfusion/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace structfusion {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::AddRowBias: return "add-bias";
    case OpKind::Sub: return "sub";
    case OpKind::Matmul: return "matmul";
    case OpKind::MatmulTransposed: return "matmul-nt";
    case OpKind::Affine: return "affine";
    case OpKind::Concat: return "concat";
    case OpKind::Mul: return "elementwise-mul";
    case OpKind::ScaleRows: return "scale-rows";
    case OpKind::Scale: return "scale";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Relu: return "relu";
    case OpKind::Softmax: return "softmax";
    case OpKind::Log: return "log";
    case OpKind::EmbeddingLookup: return "embedding-lookup";
    case OpKind::Slice: return "slice";
    case OpKind::Sum: return "sum";
    case OpKind::SoftmaxCrossEntropy: return "softmax-cross-entropy";
    case OpKind::BinaryCrossEntropy: return "binary-cross-entropy";
  }
  return "unknown";
}

namespace {

std::string shape_str(const Var& v) {
  std::ostringstream os;
  os << "[" << v.rows() << "," << v.cols() << "]";
  return os.str();
}

[[noreturn]] void shape_fail(OpKind kind, std::initializer_list<Var> operands,
                             const std::string& detail = {}) {
  std::ostringstream os;
  os << op_name(kind) << ": incompatible shapes";
  for (const auto& v : operands) os << " " << shape_str(v);
  if (!detail.empty()) os << " (" << detail << ")";
  throw ShapeError(os.str());
}

Var make(OpKind kind, Matrix value, std::initializer_list<Var> operands) {
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->value = std::move(value);
  Tape* tape = nullptr;
  for (const auto& v : operands) {
    if (!v.requires_grad()) continue;
    if (tape && v.node()->tape != tape) throw std::logic_error("operands recorded on different tapes");
    tape = v.node()->tape;
    node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->tape = tape;
    for (const auto& v : operands) node->parents.push_back(v.node());
    tape->record(node);
  }
  return Var(std::move(node));
}

Var make_n(OpKind kind, Matrix value, std::span<const Var> operands) {
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->value = std::move(value);
  Tape* tape = nullptr;
  for (const auto& v : operands) {
    if (!v.requires_grad()) continue;
    if (tape && v.node()->tape != tape) throw std::logic_error("operands recorded on different tapes");
    tape = v.node()->tape;
    node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->tape = tape;
    for (const auto& v : operands) node->parents.push_back(v.node());
    tape->record(node);
  }
  return Var(std::move(node));
}

Matrix& grad_of(Node& n) {
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.rows(), n.cols());
  return n.grad;
}

bool wants(const std::shared_ptr<Node>& n) { return n->requires_grad; }

void backward_node(Node& n) {
  const Matrix& g = n.grad;
  auto& p = n.parents;
  switch (n.kind) {
    case OpKind::Leaf:
      break;
    case OpKind::Add:
      if (wants(p[0])) grad_of(*p[0]) += g;
      if (wants(p[1])) grad_of(*p[1]) += g;
      break;
    case OpKind::AddRowBias:
      if (wants(p[0])) grad_of(*p[0]) += g;
      if (wants(p[1])) grad_of(*p[1]) += g.colwise().sum();
      break;
    case OpKind::Sub:
      if (wants(p[0])) grad_of(*p[0]) += g;
      if (wants(p[1])) grad_of(*p[1]) -= g;
      break;
    case OpKind::Matmul:
      if (wants(p[0])) grad_of(*p[0]).noalias() += g * p[1]->data().transpose();
      if (wants(p[1])) grad_of(*p[1]).noalias() += p[0]->data().transpose() * g;
      break;
    case OpKind::MatmulTransposed:
    case OpKind::Affine:
      if (wants(p[0])) grad_of(*p[0]).noalias() += g * p[1]->data();
      if (wants(p[1])) grad_of(*p[1]).noalias() += g.transpose() * p[0]->data();
      if (n.kind == OpKind::Affine && wants(p[2])) grad_of(*p[2]) += g.colwise().sum();
      break;
    case OpKind::Concat: {
      Index offset = 0;
      for (auto& parent : p) {
        const Index c = parent->cols();
        if (wants(parent)) grad_of(*parent) += g.middleCols(offset, c);
        offset += c;
      }
      break;
    }
    case OpKind::Mul:
      if (wants(p[0])) grad_of(*p[0]).array() += g.array() * p[1]->data().array();
      if (wants(p[1])) grad_of(*p[1]).array() += g.array() * p[0]->data().array();
      break;
    case OpKind::ScaleRows: {
      const Matrix& a = p[0]->data();
      const Matrix& s = p[1]->data();
      if (wants(p[0])) {
        Matrix& ga = grad_of(*p[0]);
        for (Index r = 0; r < a.rows(); ++r) ga.row(r) += s(r, 0) * g.row(r);
      }
      if (wants(p[1])) grad_of(*p[1]) += (g.array() * a.array()).rowwise().sum().matrix();
      break;
    }
    case OpKind::Scale:
      if (wants(p[0])) grad_of(*p[0]) += n.scalar * g;
      break;
    case OpKind::Sigmoid:
      if (wants(p[0]))
        grad_of(*p[0]).array() += g.array() * n.value.array() * (1.0 - n.value.array());
      break;
    case OpKind::Tanh:
      if (wants(p[0])) grad_of(*p[0]).array() += g.array() * (1.0 - n.value.array().square());
      break;
    case OpKind::Relu:
      if (wants(p[0]))
        grad_of(*p[0]).array() += (n.value.array() > 0.0).select(g.array(), 0.0);
      break;
    case OpKind::Softmax:
      if (wants(p[0])) {
        const Matrix& y = n.value;
        Eigen::VectorXd dots = (g.array() * y.array()).rowwise().sum();
        Matrix gx = y.array() * (g.colwise() - dots).array();
        grad_of(*p[0]) += gx;
      }
      break;
    case OpKind::Log:
      if (wants(p[0])) grad_of(*p[0]).array() += g.array() / p[0]->data().array();
      break;
    case OpKind::EmbeddingLookup:
      if (wants(p[0])) {
        Matrix& gt = grad_of(*p[0]);
        for (std::size_t i = 0; i < n.ids.size(); ++i) gt.row(n.ids[i]) += g.row(static_cast<Index>(i));
      }
      break;
    case OpKind::Slice:
      if (wants(p[0])) grad_of(*p[0]).middleCols(n.offset, n.cols()) += g;
      break;
    case OpKind::Sum:
      if (wants(p[0])) grad_of(*p[0]).array() += g(0, 0);
      break;
    case OpKind::SoftmaxCrossEntropy:
      if (wants(p[0])) {
        // aux holds softmax probabilities of the logits
        Matrix& gl = grad_of(*p[0]);
        const double up = g(0, 0);
        for (Index r = 0; r < n.aux.rows(); ++r) {
          const double w = n.weights[static_cast<std::size_t>(r)];
          if (w == 0.0) continue;
          gl.row(r) += (up * w) * n.aux.row(r);
          gl(r, n.ids[static_cast<std::size_t>(r)]) -= up * w;
        }
      }
      break;
    case OpKind::BinaryCrossEntropy:
      // aux holds (sigmoid(z) - t) / N
      if (wants(p[0])) grad_of(*p[0]) += g(0, 0) * n.aux;
      break;
  }
}

}  // namespace

// ---- Tape -----------------------------------------------------------------

Var Tape::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Tape::variable(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (grad_enabled_) {
    node->requires_grad = true;
    node->tape = this;
    record(node);
  }
  return Var(std::move(node));
}

Var Tape::param(Parameter& p) {
  for (const auto& [bound, var] : bound_)
    if (bound == &p) return var;
  auto node = std::make_shared<Node>();
  node->external = &p.value;
  node->param = &p;
  if (grad_enabled_ && p.trainable) {
    node->requires_grad = true;
    node->tape = this;
    record(node);
  }
  Var v(std::move(node));
  bound_.emplace_back(&p, v);
  return v;
}

void Tape::backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ShapeError("backprop: loss must have shape [1,1], got " + shape_str(loss));
  if (!loss.requires_grad()) return;
  if (loss.node()->tape != this) throw std::logic_error("backprop: loss is not on this tape");
  for (auto& n : nodes_) n->grad.resize(0, 0);
  grad_of(*loss.node()).setConstant(1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.grad.size() == 0) continue;
    backward_node(n);
  }
  for (auto& n : nodes_) {
    if (n->param && n->grad.size() != 0 && n->param->trainable) {
      if (n->param->grad.rows() != n->grad.rows() || n->param->grad.cols() != n->grad.cols())
        n->param->zero_grad();
      n->param->grad += n->grad;
    }
  }
}

// ---- ops ------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols())
    return make(OpKind::Add, a.value() + b.value(), {a, b});
  if (b.rows() == 1 && b.cols() == a.cols()) {
    Matrix out = a.value().rowwise() + b.value().row(0);
    return make(OpKind::AddRowBias, std::move(out), {a, b});
  }
  shape_fail(OpKind::Add, {a, b});
}

Var sub(const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(OpKind::Sub, {a, b});
  return make(OpKind::Sub, a.value() - b.value(), {a, b});
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) shape_fail(OpKind::Matmul, {a, b}, "inner dimensions differ");
  Matrix out = a.value() * b.value();
  return make(OpKind::Matmul, std::move(out), {a, b});
}

Var matmul_nt(const Var& x, const Var& w) {
  if (x.cols() != w.cols()) shape_fail(OpKind::MatmulTransposed, {x, w}, "inner dimensions differ");
  Matrix out = x.value() * w.value().transpose();
  return make(OpKind::MatmulTransposed, std::move(out), {x, w});
}

Var affine(const Var& x, const Var& w, const Var& b) {
  if (x.cols() != w.cols() || b.rows() != 1 || b.cols() != w.rows())
    shape_fail(OpKind::Affine, {x, w, b});
  Matrix out(x.rows(), w.rows());
  out.noalias() = x.value() * w.value().transpose();
  out.rowwise() += b.value().row(0);
  return make(OpKind::Affine, std::move(out), {x, w, b});
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      std::ostringstream os;
      os << "concat: row counts differ";
      for (const auto& q : parts) os << " " << shape_str(q);
      throw ShapeError(os.str());
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return make_n(OpKind::Concat, std::move(out), parts);
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var mul(const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(OpKind::Mul, {a, b});
  Matrix out = a.value().cwiseProduct(b.value());
  return make(OpKind::Mul, std::move(out), {a, b});
}

Var scale_rows(const Var& a, const Var& s) {
  if (s.cols() != 1 || s.rows() != a.rows()) shape_fail(OpKind::ScaleRows, {a, s});
  Matrix out = a.value();
  for (Index r = 0; r < out.rows(); ++r) out.row(r) *= s.value()(r, 0);
  return make(OpKind::ScaleRows, std::move(out), {a, s});
}

Var scale(const Var& a, double s) {
  Var out = make(OpKind::Scale, s * a.value(), {a});
  out.node()->scalar = s;
  return out;
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  });
  return make(OpKind::Sigmoid, std::move(out), {a});
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  return make(OpKind::Tanh, std::move(out), {a});
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make(OpKind::Relu, std::move(out), {a});
}

namespace {
Matrix row_softmax(const Matrix& x) {
  Matrix out = x.colwise() - x.rowwise().maxCoeff();
  out = out.array().exp().matrix();
  Eigen::VectorXd z = out.rowwise().sum();
  for (Index r = 0; r < out.rows(); ++r) out.row(r) /= z(r);
  return out;
}
}  // namespace

Var softmax(const Var& a) { return make(OpKind::Softmax, row_softmax(a.value()), {a}); }

Var log(const Var& a) {
  Matrix out = a.value().array().log().matrix();
  return make(OpKind::Log, std::move(out), {a});
}

Var embedding_lookup(const Var& table, std::span<const int> ids) {
  Matrix out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      std::ostringstream os;
      os << "embedding-lookup: id " << ids[i] << " at position " << i << " outside table "
         << shape_str(table);
      throw std::out_of_range(os.str());
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  Var v = make(OpKind::EmbeddingLookup, std::move(out), {table});
  v.node()->ids.assign(ids.begin(), ids.end());
  return v;
}

Var slice(const Var& a, Index col_begin, Index col_count) {
  if (col_begin < 0 || col_count <= 0 || col_begin + col_count > a.cols())
    shape_fail(OpKind::Slice, {a}, "columns [" + std::to_string(col_begin) + ", " +
                                       std::to_string(col_begin + col_count) + ")");
  Matrix out = a.value().middleCols(col_begin, col_count);
  Var v = make(OpKind::Slice, std::move(out), {a});
  v.node()->offset = col_begin;
  return v;
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make(OpKind::Sum, std::move(out), {a});
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> targets,
                          std::span<const double> row_weights) {
  const Index rows = logits.rows();
  if (static_cast<Index>(targets.size()) != rows || static_cast<Index>(row_weights.size()) != rows)
    shape_fail(OpKind::SoftmaxCrossEntropy, {logits},
               std::to_string(targets.size()) + " targets, " + std::to_string(row_weights.size()) +
                   " weights");
  const Matrix& x = logits.value();
  Matrix probs = row_softmax(x);
  double total = 0.0;
  for (Index r = 0; r < rows; ++r) {
    const double w = row_weights[static_cast<std::size_t>(r)];
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= x.cols()) throw std::out_of_range("softmax-cross-entropy: target out of range");
    if (w == 0.0) continue;
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    total += w * (lse - x(r, t));
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  Var v = make(OpKind::SoftmaxCrossEntropy, std::move(out), {logits});
  if (v.requires_grad()) {
    v.node()->aux = std::move(probs);
    v.node()->ids.assign(targets.begin(), targets.end());
    v.node()->weights.assign(row_weights.begin(), row_weights.end());
  }
  return v;
}

Var binary_cross_entropy(const Var& logits, const Matrix& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols())
    throw ShapeError("binary-cross-entropy: logits " + shape_str(logits) + " vs targets [" +
                     std::to_string(targets.rows()) + "," + std::to_string(targets.cols()) + "]");
  const Matrix& z = logits.value();
  const double n = static_cast<double>(z.size());
  // max(z,0) - z t + log(1 + exp(-|z|))
  const double total =
      (z.cwiseMax(0.0).array() - z.array() * targets.array() + (-z.array().abs()).exp().log1p()).sum();
  Matrix out(1, 1);
  out(0, 0) = total / n;
  Var v = make(OpKind::BinaryCrossEntropy, std::move(out), {logits});
  if (v.requires_grad()) {
    Matrix s = z.unaryExpr([](double x) {
      if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
      const double e = std::exp(x);
      return e / (1.0 + e);
    });
    v.node()->aux = (s - targets) / n;
  }
  return v;
}

// ---- verification ----------------------------------------------------------

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {
double eval_scalar(const std::function<Var(Tape&, const Var&)>& f, const Matrix& point) {
  Tape tape(false);
  Var out = f(tape, tape.constant(point));
  if (out.rows() != 1 || out.cols() != 1) throw ShapeError("finite_diff_check: f must be scalar");
  const double v = out.scalar();
  if (!std::isfinite(v)) throw NonFiniteError("finite_diff_check: f produced a non-finite value");
  return v;
}
}  // namespace

double finite_diff_check(const std::function<Var(Tape&, const Var&)>& f, const Matrix& point,
                         double epsilon, double floor) {
  if (!(epsilon > 0)) throw std::invalid_argument("finite_diff_check: epsilon must be positive");
  Tape tape;
  Var x = tape.variable(point);
  Var y = f(tape, x);
  if (!std::isfinite(y.scalar())) throw NonFiniteError("finite_diff_check: f produced a non-finite value");
  tape.backward(y);
  Matrix analytic = x.has_grad() ? x.grad() : Matrix::Zero(point.rows(), point.cols());
  double worst = 0.0;
  Matrix probe = point;
  for (Index i = 0; i < probe.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + epsilon;
    const double up = eval_scalar(f, probe);
    probe.data()[i] = orig - epsilon;
    const double down = eval_scalar(f, probe);
    probe.data()[i] = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    worst = std::max(worst, relative_error(analytic.data()[i], numeric, floor));
  }
  return worst;
}

GradCheckResult check_parameter_gradients(const std::function<Var(Tape&)>& loss,
                                          std::span<Parameter* const> params, std::size_t samples,
                                          std::uint64_t seed, double epsilon, double floor) {
  for (Parameter* p : params) p->zero_grad();
  double base = 0.0;
  {
    Tape tape;
    Var l = loss(tape);
    base = l.scalar();
    if (!std::isfinite(base)) throw NonFiniteError("gradient check: non-finite loss");
    tape.backward(l);
  }
  floor = std::max(floor, kGradCheckNoiseFactor * std::abs(base) * std::numeric_limits<double>::epsilon() / 2.0 / epsilon);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  std::vector<std::pair<std::size_t, Index>> coords;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (Index i = 0; i < params[k]->value.size(); ++i) coords.emplace_back(k, i);
  if (samples != 0 && samples < coords.size()) {
    std::vector<std::pair<std::size_t, Index>> picked;
    std::mt19937_64 rng(seed);
    std::sample(coords.begin(), coords.end(), std::back_inserter(picked), samples, rng);
    coords = std::move(picked);
  }

  auto eval = [&]() {
    Tape tape(false);
    const double v = loss(tape).scalar();
    if (!std::isfinite(v)) throw NonFiniteError("gradient check: non-finite loss");
    return v;
  };

  GradCheckResult result;
  result.floor = floor;
  for (auto [k, i] : coords) {
    double& slot = params[k]->value.data()[i];
    const double orig = slot;
    slot = orig + epsilon;
    const double up = eval();
    slot = orig - epsilon;
    const double down = eval();
    slot = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double err = relative_error(analytic[k].data()[i], numeric, floor);
    ++result.probed;
    if (std::max(std::abs(analytic[k].data()[i]), std::abs(numeric)) < floor) ++result.below_floor;
    if (err > result.max_relative_error || result.worst.empty()) {
      result.max_relative_error = err;
      result.worst_analytic = analytic[k].data()[i];
      result.worst_numeric = numeric;
      const Index cols = params[k]->value.cols();
      result.worst = params[k]->name + "[" + std::to_string(i / cols) + "," + std::to_string(i % cols) + "]";
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return result;
}

}  // namespace structfusion

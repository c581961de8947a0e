#include "ppn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace ppn::ad {

struct Graph {
  std::vector<Node> nodes;
  std::optional<std::size_t> output;
  std::map<std::string, std::size_t> inputs;
};

namespace {

Var push(Graph* g, Node node) {
  g->nodes.push_back(std::move(node));
  return Var{g, g->nodes.size() - 1};
}

Graph* common_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) {
    throw std::invalid_argument("operands belong to different expressions");
  }
  return a.graph;
}

Var unary(OpKind op, Var a) {
  if (a.graph == nullptr) throw std::invalid_argument("operand is not bound to an expression");
  Node n;
  n.op = op;
  n.args = {a.id};
  return push(a.graph, std::move(n));
}

Var binary(OpKind op, Var a, Var b) {
  Graph* g = common_graph(a, b);
  Node n;
  n.op = op;
  n.args = {a.id, b.id};
  return push(g, std::move(n));
}

[[noreturn]] void shape_error(OpKind op, const Tensor& a, const Tensor* b, const std::string& what) {
  std::ostringstream os;
  os << op_name(op) << ": " << what << " (got " << shape_string(a.shape());
  if (b) os << " and " << shape_string(b->shape());
  os << ')';
  throw std::invalid_argument(os.str());
}

void require_matrix(OpKind op, const Tensor& a, const Tensor* b = nullptr) {
  if (a.rank() != 2) shape_error(op, a, b, "expected a matrix");
  if (b && b->rank() != 2) shape_error(op, a, b, "expected matrices");
}

void row_softmax_inplace(std::span<double> row) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : row) mx = std::max(mx, x);
  double s = 0.0;
  for (double& x : row) {
    x = std::exp(x - mx);
    s += x;
  }
  for (double& x : row) x /= s;
}

Tensor forward(const Node& n, const std::vector<Tensor>& v) {
  auto arg = [&](std::size_t i) -> const Tensor& { return v[n.args[i]]; };
  switch (n.op) {
    case OpKind::Input:
    case OpKind::Constant:
      return n.value;
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      const Tensor& a = arg(0);
      const Tensor& b = arg(1);
      if (a.shape() != b.shape()) shape_error(n.op, a, &b, "shapes differ");
      Tensor out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = n.op == OpKind::Add   ? a[i] + b[i]
                 : n.op == OpKind::Sub ? a[i] - b[i]
                                       : a[i] * b[i];
      }
      return out;
    }
    case OpKind::Scale: {
      Tensor out = arg(0);
      for (double& x : out.data()) x *= n.scalar;
      return out;
    }
    case OpKind::MatMul: {
      const Tensor& a = arg(0);
      const Tensor& b = arg(1);
      require_matrix(n.op, a, &b);
      if (a.cols() != b.rows()) shape_error(n.op, a, &b, "inner dimensions differ");
      const std::size_t rows = a.rows(), inner = a.cols(), cols = b.cols();
      Tensor out(Shape{rows, cols});
      const double* pa = a.data().data();
      const double* pb = b.data().data();
      double* po = out.data().data();
      for (std::size_t i = 0; i < rows; ++i) {
        double* orow = po + i * cols;
        for (std::size_t k = 0; k < inner; ++k) {
          const double aik = pa[i * inner + k];
          const double* brow = pb + k * cols;
          for (std::size_t j = 0; j < cols; ++j) orow[j] += aik * brow[j];
        }
      }
      return out;
    }
    case OpKind::MatMulNT: {
      const Tensor& a = arg(0);
      const Tensor& b = arg(1);
      require_matrix(n.op, a, &b);
      if (a.cols() != b.cols()) shape_error(n.op, a, &b, "row lengths differ");
      const std::size_t rows = a.rows(), cols = b.rows(), inner = a.cols();
      Tensor out(Shape{rows, cols});
      const double* pa = a.data().data();
      const double* pb = b.data().data();
      double* po = out.data().data();
      for (std::size_t i = 0; i < rows; ++i) {
        const double* arow = pa + i * inner;
        for (std::size_t j = 0; j < cols; ++j) {
          const double* brow = pb + j * inner;
          double s = 0.0;
          for (std::size_t k = 0; k < inner; ++k) s += arow[k] * brow[k];
          po[i * cols + j] = s;
        }
      }
      return out;
    }
    case OpKind::AddRowVec: {
      const Tensor& a = arg(0);
      const Tensor& b = arg(1);
      require_matrix(n.op, a);
      if (b.rank() != 1 || b.size() != a.cols()) shape_error(n.op, a, &b, "bias length must equal column count");
      Tensor out = a;
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += b[j];
      }
      return out;
    }
    case OpKind::Relu: {
      Tensor out = arg(0);
      for (double& x : out.data()) x = x > 0.0 ? x : 0.0;
      return out;
    }
    case OpKind::Sum: {
      double s = 0.0;
      for (double x : arg(0).data()) s += x;
      return Tensor::scalar(s);
    }
    case OpKind::RowNormalize: {
      const Tensor& a = arg(0);
      require_matrix(n.op, a);
      Tensor out = a;
      for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = out.row(i);
        const double norm = l2_norm(r);
        if (norm < kNormGuard) {
          std::fill(r.begin(), r.end(), 0.0);
        } else {
          for (double& x : r) x /= norm;
        }
      }
      return out;
    }
    case OpKind::SqDist: {
      const Tensor& a = arg(0);
      const Tensor& b = arg(1);
      require_matrix(n.op, a, &b);
      if (a.cols() != b.cols()) shape_error(n.op, a, &b, "row lengths differ");
      Tensor out(Shape{a.rows(), b.rows()});
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = squared_distance(a.row(i), b.row(j));
      }
      return out;
    }
    case OpKind::SoftmaxRows:
    case OpKind::LogSoftmaxRows: {
      const Tensor& a = arg(0);
      require_matrix(n.op, a);
      if (a.cols() == 0) shape_error(n.op, a, nullptr, "empty rows");
      Tensor out = a;
      for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = out.row(i);
        if (n.op == OpKind::SoftmaxRows) {
          row_softmax_inplace(r);
        } else {
          double mx = -std::numeric_limits<double>::infinity();
          for (double x : r) mx = std::max(mx, x);
          double s = 0.0;
          for (double x : r) s += std::exp(x - mx);
          const double lse = mx + std::log(s);
          for (double& x : r) x -= lse;
        }
      }
      return out;
    }
    case OpKind::MaskedSoftmaxRows: {
      const Tensor& a = arg(0);
      require_matrix(n.op, a, &n.value);
      if (a.shape() != n.value.shape()) shape_error(n.op, a, &n.value, "mask shape differs");
      Tensor out(a.shape());
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < a.cols(); ++j) {
          if (n.value(i, j) != 0.0) mx = std::max(mx, a(i, j));
        }
        if (!std::isfinite(mx)) continue;
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
          if (n.value(i, j) != 0.0) {
            out(i, j) = std::exp(a(i, j) - mx);
            s += out(i, j);
          }
        }
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) /= s;
      }
      return out;
    }
    case OpKind::ScaleRows: {
      const Tensor& a = arg(0);
      require_matrix(n.op, a);
      if (n.coeffs.size() != a.rows()) shape_error(n.op, a, nullptr, "one coefficient per row required");
      Tensor out = a;
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (double& x : out.row(i)) x *= n.coeffs[i];
      }
      return out;
    }
    case OpKind::SelectRows: {
      const Tensor& a = arg(0);
      require_matrix(n.op, a);
      Tensor out(Shape{n.indices.size(), a.cols()});
      for (std::size_t i = 0; i < n.indices.size(); ++i) {
        if (n.indices[i] >= a.rows()) shape_error(n.op, a, nullptr, "row index out of range");
        std::copy_n(a.row(n.indices[i]).begin(), a.cols(), out.row(i).begin());
      }
      return out;
    }
    case OpKind::Pick: {
      const Tensor& a = arg(0);
      require_matrix(n.op, a);
      if (n.indices.size() != a.rows()) shape_error(n.op, a, nullptr, "one column index per row required");
      Tensor out(Shape{a.rows()});
      for (std::size_t i = 0; i < a.rows(); ++i) {
        if (n.indices[i] >= a.cols()) shape_error(n.op, a, nullptr, "column index out of range");
        out[i] = a(i, n.indices[i]);
      }
      return out;
    }
  }
  throw std::logic_error("unknown op");
}

// Accumulates the adjoint contribution of node `n` (output adjoint `g`) into
// the adjoints of its arguments.
void backward(const Node& n, const std::vector<Tensor>& v, const Tensor& g,
              const std::vector<bool>& needs, std::vector<std::optional<Tensor>>& adj) {
  auto acc = [&](std::size_t slot) -> Tensor* {
    const std::size_t id = n.args[slot];
    if (!needs[id]) return nullptr;
    if (!adj[id]) adj[id].emplace(v[id].shape());
    return &*adj[id];
  };
  auto arg = [&](std::size_t i) -> const Tensor& { return v[n.args[i]]; };

  switch (n.op) {
    case OpKind::Input:
    case OpKind::Constant:
      return;
    case OpKind::Add:
    case OpKind::Sub: {
      if (Tensor* da = acc(0)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
      }
      if (Tensor* db = acc(1)) {
        const double sign = n.op == OpKind::Add ? 1.0 : -1.0;
        for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += sign * g[i];
      }
      return;
    }
    case OpKind::Mul: {
      const Tensor& a = arg(0);
      const Tensor& b = arg(1);
      if (Tensor* da = acc(0)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * b[i];
      }
      if (Tensor* db = acc(1)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * a[i];
      }
      return;
    }
    case OpKind::Scale: {
      if (Tensor* da = acc(0)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += n.scalar * g[i];
      }
      return;
    }
    case OpKind::MatMul: {
      const Tensor& a = arg(0);
      const Tensor& b = arg(1);
      const std::size_t rows = a.rows(), inner = a.cols(), cols = b.cols();
      const double* pa = a.data().data();
      const double* pb = b.data().data();
      const double* pg = g.data().data();
      if (Tensor* da = acc(0)) {
        double* pd = da->data().data();
        for (std::size_t i = 0; i < rows; ++i) {
          const double* grow = pg + i * cols;
          for (std::size_t k = 0; k < inner; ++k) {
            const double* brow = pb + k * cols;
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) s += grow[j] * brow[j];
            pd[i * inner + k] += s;
          }
        }
      }
      if (Tensor* db = acc(1)) {
        double* pd = db->data().data();
        for (std::size_t i = 0; i < rows; ++i) {
          const double* grow = pg + i * cols;
          for (std::size_t k = 0; k < inner; ++k) {
            const double aik = pa[i * inner + k];
            if (aik == 0.0) continue;
            double* drow = pd + k * cols;
            for (std::size_t j = 0; j < cols; ++j) drow[j] += aik * grow[j];
          }
        }
      }
      return;
    }
    case OpKind::MatMulNT: {
      const Tensor& a = arg(0);
      const Tensor& b = arg(1);
      const std::size_t rows = a.rows(), cols = b.rows(), inner = a.cols();
      const double* pa = a.data().data();
      const double* pb = b.data().data();
      const double* pg = g.data().data();
      Tensor* da = acc(0);
      Tensor* db = acc(1);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          const double gij = pg[i * cols + j];
          if (gij == 0.0) continue;
          if (da) {
            double* drow = da->data().data() + i * inner;
            const double* brow = pb + j * inner;
            for (std::size_t k = 0; k < inner; ++k) drow[k] += gij * brow[k];
          }
          if (db) {
            double* drow = db->data().data() + j * inner;
            const double* arow = pa + i * inner;
            for (std::size_t k = 0; k < inner; ++k) drow[k] += gij * arow[k];
          }
        }
      }
      return;
    }
    case OpKind::AddRowVec: {
      if (Tensor* da = acc(0)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
      }
      if (Tensor* db = acc(1)) {
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < g.cols(); ++j) (*db)[j] += g(i, j);
        }
      }
      return;
    }
    case OpKind::Relu: {
      const Tensor& a = arg(0);
      if (Tensor* da = acc(0)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += a[i] > 0.0 ? g[i] : 0.0;
      }
      return;
    }
    case OpKind::Sum: {
      if (Tensor* da = acc(0)) {
        const double gs = g.item();
        for (double& x : da->data()) x += gs;
      }
      return;
    }
    case OpKind::RowNormalize: {
      const Tensor& a = arg(0);
      if (Tensor* da = acc(0)) {
        for (std::size_t i = 0; i < a.rows(); ++i) {
          const double norm = l2_norm(a.row(i));
          if (norm < kNormGuard) continue;
          auto x = a.row(i);
          auto gi = g.row(i);
          double yg = 0.0;
          for (std::size_t k = 0; k < x.size(); ++k) yg += (x[k] / norm) * gi[k];
          auto d = da->row(i);
          for (std::size_t k = 0; k < x.size(); ++k) d[k] += (gi[k] - (x[k] / norm) * yg) / norm;
        }
      }
      return;
    }
    case OpKind::SqDist: {
      const Tensor& a = arg(0);
      const Tensor& b = arg(1);
      Tensor* da = acc(0);
      Tensor* db = acc(1);
      const std::size_t dim = a.cols(), m = b.rows();
      for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.data().data() + i * dim;
        for (std::size_t j = 0; j < m; ++j) {
          const double gij = 2.0 * g.data()[i * m + j];
          if (gij == 0.0) continue;
          const double* brow = b.data().data() + j * dim;
          double* darow = da ? da->data().data() + i * dim : nullptr;
          double* dbrow = db ? db->data().data() + j * dim : nullptr;
          for (std::size_t k = 0; k < dim; ++k) {
            const double diff = gij * (arow[k] - brow[k]);
            if (darow) darow[k] += diff;
            if (dbrow) dbrow[k] -= diff;
          }
        }
      }
      return;
    }
    case OpKind::SoftmaxRows:
    case OpKind::MaskedSoftmaxRows: {
      Tensor* da = acc(0);
      if (!da) return;
      // y is recomputed rather than stored per node; forward is cheap.
      const Tensor y = forward(n, v);
      for (std::size_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j) (*da)(i, j) += y(i, j) * (g(i, j) - dot);
      }
      return;
    }
    case OpKind::LogSoftmaxRows: {
      Tensor* da = acc(0);
      if (!da) return;
      Tensor p = arg(0);
      for (std::size_t i = 0; i < p.rows(); ++i) row_softmax_inplace(p.row(i));
      for (std::size_t i = 0; i < p.rows(); ++i) {
        double gs = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) gs += g(i, j);
        for (std::size_t j = 0; j < p.cols(); ++j) (*da)(i, j) += g(i, j) - p(i, j) * gs;
      }
      return;
    }
    case OpKind::ScaleRows: {
      if (Tensor* da = acc(0)) {
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < g.cols(); ++j) (*da)(i, j) += n.coeffs[i] * g(i, j);
        }
      }
      return;
    }
    case OpKind::SelectRows: {
      if (Tensor* da = acc(0)) {
        for (std::size_t i = 0; i < n.indices.size(); ++i) {
          auto src = g.row(i);
          auto dst = da->row(n.indices[i]);
          for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
        }
      }
      return;
    }
    case OpKind::Pick: {
      if (Tensor* da = acc(0)) {
        for (std::size_t i = 0; i < n.indices.size(); ++i) (*da)(i, n.indices[i]) += g[i];
      }
      return;
    }
  }
}

}  // namespace

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Input: return "input";
    case OpKind::Constant: return "constant";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::MatMul: return "matmul";
    case OpKind::MatMulNT: return "matmul_nt";
    case OpKind::AddRowVec: return "add_rowvec";
    case OpKind::Relu: return "relu";
    case OpKind::Sum: return "sum";
    case OpKind::RowNormalize: return "row_normalize";
    case OpKind::SqDist: return "sq_dist";
    case OpKind::SoftmaxRows: return "softmax_rows";
    case OpKind::LogSoftmaxRows: return "log_softmax_rows";
    case OpKind::MaskedSoftmaxRows: return "masked_softmax_rows";
    case OpKind::ScaleRows: return "scale_rows";
    case OpKind::SelectRows: return "select_rows";
    case OpKind::Pick: return "pick";
  }
  return "?";
}

Expression::Expression() : graph_(std::make_unique<Graph>()) {}
Expression::~Expression() = default;
Expression::Expression(Expression&&) noexcept = default;
Expression& Expression::operator=(Expression&&) noexcept = default;

Var Expression::input(std::string name) {
  if (auto it = graph_->inputs.find(name); it != graph_->inputs.end()) {
    return Var{graph_.get(), it->second};
  }
  Node n;
  n.op = OpKind::Input;
  n.name = name;
  Var v = push(graph_.get(), std::move(n));
  graph_->inputs.emplace(std::move(name), v.id);
  return v;
}

Var Expression::constant(Tensor value) {
  Node n;
  n.op = OpKind::Constant;
  n.value = std::move(value);
  return push(graph_.get(), std::move(n));
}

Var Expression::output() const {
  if (graph_->nodes.empty()) throw std::logic_error("empty expression has no output");
  return Var{graph_.get(), graph_->output.value_or(graph_->nodes.size() - 1)};
}

void Expression::set_output(Var v) {
  if (v.graph != graph_.get()) throw std::invalid_argument("output node belongs to another expression");
  graph_->output = v.id;
}

std::size_t Expression::size() const { return graph_->nodes.size(); }

const Node& Expression::node(std::size_t id) const { return graph_->nodes.at(id); }

std::vector<std::string> Expression::input_names() const {
  std::vector<std::string> names;
  for (const auto& [name, id] : graph_->inputs) names.push_back(name);
  return names;
}

Var operator+(Var a, Var b) { return binary(OpKind::Add, a, b); }
Var operator-(Var a, Var b) { return binary(OpKind::Sub, a, b); }
Var operator*(Var a, Var b) { return binary(OpKind::Mul, a, b); }

Var operator*(double s, Var a) {
  Var v = unary(OpKind::Scale, a);
  a.graph->nodes[v.id].scalar = s;
  return v;
}

Var operator*(Var a, double s) { return s * a; }

Var matmul(Var a, Var b) { return binary(OpKind::MatMul, a, b); }
Var matmul_nt(Var a, Var b) { return binary(OpKind::MatMulNT, a, b); }
Var add_rowvec(Var a, Var bias) { return binary(OpKind::AddRowVec, a, bias); }
Var relu(Var a) { return unary(OpKind::Relu, a); }
Var sum(Var a) { return unary(OpKind::Sum, a); }
Var row_normalize(Var a) { return unary(OpKind::RowNormalize, a); }
Var sq_dist(Var a, Var b) { return binary(OpKind::SqDist, a, b); }
Var softmax_rows(Var a) { return unary(OpKind::SoftmaxRows, a); }
Var log_softmax_rows(Var a) { return unary(OpKind::LogSoftmaxRows, a); }

Var masked_softmax_rows(Var a, Tensor mask) {
  Var v = unary(OpKind::MaskedSoftmaxRows, a);
  a.graph->nodes[v.id].value = std::move(mask);
  return v;
}

Var scale_rows(Var a, std::vector<double> coeffs) {
  Var v = unary(OpKind::ScaleRows, a);
  a.graph->nodes[v.id].coeffs = std::move(coeffs);
  return v;
}

Var select_rows(Var a, std::vector<std::size_t> rows) {
  Var v = unary(OpKind::SelectRows, a);
  a.graph->nodes[v.id].indices = std::move(rows);
  return v;
}

Var pick(Var a, std::vector<std::size_t> cols) {
  Var v = unary(OpKind::Pick, a);
  a.graph->nodes[v.id].indices = std::move(cols);
  return v;
}

const Tensor& Evaluation::value(Var v) const {
  if (v.graph != graph_) throw std::invalid_argument("node belongs to another expression");
  return values_.at(v.id);
}

Evaluation evaluate(const Expression& expr, const TensorMap& bindings) {
  const auto& nodes = expr.graph()->nodes;
  Evaluation eval;
  eval.graph_ = expr.graph();
  eval.output_ = expr.output().id;
  eval.values_.reserve(nodes.size());
  for (const Node& n : nodes) {
    if (n.op == OpKind::Input) {
      auto it = bindings.find(n.name);
      if (it == bindings.end()) throw std::invalid_argument("unbound input '" + n.name + "'");
      if (!it->second.all_finite()) throw std::domain_error("input '" + n.name + "' holds non-finite values");
      eval.values_.push_back(it->second);
      continue;
    }
    Tensor out = forward(n, eval.values_);
    if (!out.all_finite()) {
      throw std::domain_error(std::string(op_name(n.op)) + " produced a non-finite value");
    }
    eval.values_.push_back(std::move(out));
  }
  return eval;
}

TensorMap gradient(const Expression& expr, const Evaluation& eval,
                   const std::vector<std::string>& wrt) {
  const Graph& g = *expr.graph();
  if (eval.graph_ != &g) throw std::invalid_argument("evaluation belongs to another expression");
  const std::size_t out_id = eval.output_;
  if (eval.values_[out_id].size() != 1) {
    throw std::invalid_argument("gradient requires a single-element output, got shape " +
                                shape_string(eval.values_[out_id].shape()));
  }

  // Only nodes that depend on a requested input carry adjoints.
  std::vector<bool> needs(g.nodes.size(), false);
  for (const auto& name : wrt) {
    if (auto it = g.inputs.find(name); it != g.inputs.end()) needs[it->second] = true;
  }
  for (std::size_t i = 0; i <= out_id; ++i) {
    for (std::size_t a : g.nodes[i].args) needs[i] = needs[i] || needs[a];
  }

  std::vector<std::optional<Tensor>> adj(g.nodes.size());
  adj[out_id].emplace(eval.values_[out_id].shape(), 1.0);
  for (std::size_t i = out_id + 1; i-- > 0;) {
    if (!needs[i] || !adj[i]) continue;
    backward(g.nodes[i], eval.values_, *adj[i], needs, adj);
  }

  TensorMap grads;
  for (const auto& name : wrt) {
    auto it = g.inputs.find(name);
    if (it == g.inputs.end()) {
      throw std::invalid_argument("'" + name + "' is not an input of the expression");
    }
    const std::size_t id = it->second;
    grads[name] = adj[id] ? *adj[id] : Tensor(eval.values_[id].shape());
  }
  return grads;
}

TensorMap gradient(const Expression& expr, const std::vector<std::string>& wrt,
                   const TensorMap& bindings) {
  // Bound parameters the expression never reads get zero gradients.
  std::vector<std::string> used;
  TensorMap grads;
  for (const auto& name : wrt) {
    if (expr.graph()->inputs.contains(name)) {
      used.push_back(name);
    } else if (auto it = bindings.find(name); it != bindings.end()) {
      grads[name] = Tensor(it->second.shape());
    } else {
      throw std::invalid_argument("'" + name + "' is neither an input nor bound");
    }
  }
  grads.merge(gradient(expr, evaluate(expr, bindings), used));
  return grads;
}

}  // namespace ppn::ad

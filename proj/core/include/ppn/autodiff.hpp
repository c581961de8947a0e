#pragma once

// Reverse-mode differentiation over a recorded expression graph.
//
// An Expression is built once from named inputs, constants and ops, then
// evaluated against a binding of input names to tensors. Shapes are checked
// at evaluation time, so one Expression can be reused with different
// bindings. Nodes are appended in evaluation order, which keeps the record
// acyclic by construction.

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "ppn/tensor.hpp"

namespace ppn::ad {

enum class OpKind {
  Input,
  Constant,
  Add,
  Sub,
  Mul,
  Scale,
  MatMul,
  MatMulNT,
  AddRowVec,
  Relu,
  Sum,
  RowNormalize,
  SqDist,
  SoftmaxRows,
  LogSoftmaxRows,
  MaskedSoftmaxRows,
  ScaleRows,
  SelectRows,
  Pick,
};

const char* op_name(OpKind op);

struct Node {
  OpKind op = OpKind::Constant;
  std::vector<std::size_t> args;
  std::string name;                   // Input
  Tensor value;                       // Constant; mask for MaskedSoftmaxRows
  double scalar = 0.0;                // Scale
  std::vector<double> coeffs;         // ScaleRows
  std::vector<std::size_t> indices;   // SelectRows, Pick
};

struct Graph;

/// Handle to a node of an Expression. Cheap to copy; valid while the owning
/// Expression is alive.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;
};

class Expression {
 public:
  Expression();
  ~Expression();
  Expression(Expression&&) noexcept;
  Expression& operator=(Expression&&) noexcept;
  Expression(const Expression&) = delete;
  Expression& operator=(const Expression&) = delete;

  Var input(std::string name);
  Var constant(Tensor value);

  /// The node whose value `evaluate` reports; defaults to the last node added.
  Var output() const;
  void set_output(Var v);

  std::size_t size() const;
  const Node& node(std::size_t id) const;
  std::vector<std::string> input_names() const;

  const Graph* graph() const { return graph_.get(); }

 private:
  std::unique_ptr<Graph> graph_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
/// Elementwise product of equally shaped operands.
Var operator*(Var a, Var b);
Var operator*(double s, Var a);
Var operator*(Var a, double s);

/// (n x k) @ (k x m).
Var matmul(Var a, Var b);
/// (n x k) @ (m x k)^T; entry (i, j) is the dot product of rows a_i and b_j.
Var matmul_nt(Var a, Var b);
/// Adds a length-m vector to every row of an (n x m) matrix.
Var add_rowvec(Var a, Var bias);
Var relu(Var a);
/// Sum of all entries; rank-0 result.
Var sum(Var a);
/// Each row divided by its Euclidean norm. Rows with norm below
/// kNormGuard map to zero and pass no gradient.
Var row_normalize(Var a);
/// Pairwise squared Euclidean distances between rows: (n x d), (m x d) -> (n x m).
Var sq_dist(Var a, Var b);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Row softmax restricted to entries where `mask` is nonzero; other entries
/// are zero, and a row with no admissible entry is all zero.
Var masked_softmax_rows(Var a, Tensor mask);
/// Row i multiplied by coeffs[i].
Var scale_rows(Var a, std::vector<double> coeffs);
/// Gathers rows by index (repetition allowed).
Var select_rows(Var a, std::vector<std::size_t> rows);
/// For an (n x m) matrix, the length-n vector a[i, cols[i]].
Var pick(Var a, std::vector<std::size_t> cols);

inline constexpr double kNormGuard = 1e-12;

/// Forward values of every node of one evaluation.
class Evaluation {
 public:
  const Tensor& value(Var v) const;
  const Tensor& output() const { return values_.at(output_); }

 private:
  friend Evaluation evaluate(const Expression& expr, const TensorMap& bindings);
  friend TensorMap gradient(const Expression& expr, const Evaluation& eval,
                            const std::vector<std::string>& wrt);
  const Graph* graph_ = nullptr;
  std::vector<Tensor> values_;
  std::size_t output_ = 0;
};

/// Runs the forward pass. Throws std::invalid_argument on an unbound input or
/// on incompatible shapes (the message names the op and the shapes), and
/// std::domain_error when an op produces a non-finite value.
Evaluation evaluate(const Expression& expr, const TensorMap& bindings);

/// d(output)/d(input) for each named input in `wrt`. The output must hold a
/// single element. Inputs that do not reach the output get zero tensors.
TensorMap gradient(const Expression& expr, const Evaluation& eval,
                   const std::vector<std::string>& wrt);
TensorMap gradient(const Expression& expr, const std::vector<std::string>& wrt,
                   const TensorMap& bindings);

}  // namespace ppn::ad

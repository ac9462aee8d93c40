// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over dense double matrices.
//
// Values are computed eagerly when a primitive is recorded; backward() replays
// the tape once in reverse order. Adjoints of fanned-out values accumulate.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hydro/manifold.hpp"

namespace hydro::ad {

using Matrix = Eigen::MatrixXd;
using Ball = manifold::PoincareBall<double>;

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// What a primitive's adjoint rule sees during the reverse sweep. Operand
/// adjoint slots are null for operands that do not need a gradient.
struct BackwardContext {
  const Matrix& out_value;
  const Matrix& out_adj;
  std::span<const Matrix* const> in_values;
  std::span<Matrix* const> in_adjs;

  const Matrix& in(std::size_t i) const { return *in_values[i]; }
  Matrix* adj(std::size_t i) const { return in_adjs[i]; }
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Adjoints produced by Tape::backward.
class Gradients {
 public:
  /// Adjoint of `v`; a zero matrix of v's shape if the loss does not depend on it.
  Matrix operator[](const Var& v) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<Matrix> adjoints_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Matrix value);
  /// Input treated as a constant (no adjoint is accumulated for it).
  Var constant(Matrix value);

  /// Appends a primitive application whose value has already been computed.
  /// Operands must live on this tape.
  Var record(Matrix value, std::initializer_list<Var> operands, BackwardFn backward);

  /// Reverse sweep from a 1x1 loss.
  Gradients backward(const Var& loss) const;

  std::size_t size() const { return nodes_.size(); }
  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

 private:
  struct Node {
    Matrix value;
    std::vector<int> operands;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

// --- primitives ---------------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double alpha);
/// alpha * a + beta, elementwise.
Var affine(const Var& a, double alpha, double beta);
Var hadamard(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
Var sum_squares(const Var& a);
Var abs(const Var& a);

Var sigmoid(const Var& a);
Var relu(const Var& a);
Var tanh(const Var& a);
/// Natural log; entries must be positive.
Var log(const Var& a);

/// Softmax over each row.
Var row_softmax(const Var& a);

/// 0.5 * (a + a^T) for square a.
Var symmetrize(const Var& a);
Var zero_diagonal(const Var& a);

/// D^{-1/2} (A [+ I]) D^{-1/2} with D the row sums of the (self-looped)
/// matrix. Degrees below kDegreeFloor are replaced by the floor inside the
/// inverse square root.
Var degree_normalize(const Var& a, bool add_self_loops);
inline constexpr double kDegreeFloor = 1e-12;

/// Second-largest eigenvalue of a symmetric matrix, as a 1x1 value. The
/// adjoint is v2 v2^T for the solver's unit eigenvector.
Var lambda2(const Var& sym);
/// Number of lambda2 evaluations whose eigenvalue was repeated within 1e-8.
std::uint64_t degenerate_lambda2_events();

Var select_rows(const Var& a, std::vector<int> rows);
Var column(const Var& a, Eigen::Index j);
/// Row-major reshape (element (i, j) of an r x c result is flat entry i*c + j).
Var reshape_rowmajor(const Var& a, Eigen::Index rows, Eigen::Index cols);

/// Per-column standardization to zero mean and unit variance (biased), with
/// variance floor eps.
Var standardize_cols(const Var& a, double eps);
/// a .* scale + shift, with 1 x d scale/shift broadcast over rows.
Var affine_cols(const Var& a, const Var& scale, const Var& shift);

/// Sum over columns of (1 - cos(a_col, ref_col)); zero-norm columns add 0.
Var column_cosine_distance(const Var& a, const Matrix& ref);

/// Row (i*n + j) is [x_i, x_j].
Var edge_embed(const Var& x);

// Row-wise manifold maps. Each row is one point / tangent vector.
Var expmap0_rows(const Var& u, const Ball& ball);
Var logmap0_rows(const Var& x, const Ball& ball);
Var project_rows(const Var& x, const Ball& ball);
/// Row-wise x (+) y; a single-row operand is broadcast over the other's rows.
Var mobius_add_rows(const Var& x, const Var& y, const Ball& ball);
Var expmap_rows(const Var& p, const Var& u, const Ball& ball);
Var logmap_rows(const Var& p1, const Var& p2, const Ball& ball);

/// Fused equivalent of matmul(logmap0_rows(expmap0_rows(edge_embed(x))), w)
/// that never materializes the n^2 x 2d edge batch. The three maps are radial,
/// so each edge row is a scalar multiple of [x_i, x_j].
Var lifted_pair_linear(const Var& x, const Var& w, const Ball& ball);

}  // namespace hydro::ad

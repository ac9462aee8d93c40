// SPDX-License-Identifier: Apache-2.0
#include "hydro/adgrad.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <cmath>
#include <string>
#include <tuple>

#include "hydro/errors.hpp"

namespace hydro::ad {

namespace {

std::atomic<std::uint64_t> g_degenerate_events{0};

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const auto& v : vars) {
    if (!v.valid()) throw ContractError("adgrad: operand is not recorded on a tape");
    if (t == nullptr) t = v.tape();
    if (v.tape() != t) throw ContractError("adgrad: operands live on different tapes");
  }
  return *t;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  }
}

void require_square(const Var& a, const char* op) {
  if (a.rows() != a.cols()) throw ContractError(std::string(op) + ": matrix must be square");
}

Matrix scalar_matrix(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

}  // namespace

// --- Var / Tape -----------------------------------------------------------------

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw ContractError("adgrad: empty Var");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractError("adgrad: value is not a scalar");
  return v(0, 0);
}

Matrix Gradients::operator[](const Var& v) const {
  if (v.tape() != tape_) throw ContractError("adgrad: Var from a different tape");
  const auto& a = adjoints_[static_cast<std::size_t>(v.id())];
  if (a.size() == 0) return Matrix::Zero(v.rows(), v.cols());
  return a;
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, true});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> operands, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const auto& op : operands) {
    if (op.tape() != this) throw ContractError("adgrad: operand recorded on another tape");
    node.operands.push_back(op.id());
    node.requires_grad = node.requires_grad || nodes_[static_cast<std::size_t>(op.id())].requires_grad;
  }
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Gradients Tape::backward(const Var& loss) const {
  if (loss.tape() != this) throw ContractError("adgrad: loss recorded on another tape");
  if (loss.value().size() != 1) throw ContractError("adgrad: backward requires a scalar loss");

  Gradients grads;
  grads.tape_ = this;
  grads.adjoints_.resize(nodes_.size());
  grads.adjoints_[static_cast<std::size_t>(loss.id())] = Matrix::Ones(1, 1);

  std::vector<const Matrix*> in_values;
  std::vector<Matrix*> in_adjs;
  for (int id = loss.id(); id >= 0; --id) {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    const Matrix& out_adj = grads.adjoints_[static_cast<std::size_t>(id)];
    if (out_adj.size() == 0 || !node.backward || !node.requires_grad) continue;
    in_values.clear();
    in_adjs.clear();
    for (int op : node.operands) {
      const Node& src = nodes_[static_cast<std::size_t>(op)];
      in_values.push_back(&src.value);
      if (src.requires_grad) {
        Matrix& slot = grads.adjoints_[static_cast<std::size_t>(op)];
        if (slot.size() == 0) slot = Matrix::Zero(src.value.rows(), src.value.cols());
        in_adjs.push_back(&slot);
      } else {
        in_adjs.push_back(nullptr);
      }
    }
    node.backward(BackwardContext{node.value, out_adj, in_values, in_adjs});
  }
  return grads;
}

// --- elementwise / linear algebra ----------------------------------------------

Var add(const Var& a, const Var& b) {
  auto& t = tape_of({a, b});
  require_same_shape(a, b, "add");
  return t.record(a.value() + b.value(), {a, b}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) *g += c.out_adj;
    if (auto* g = c.adj(1)) *g += c.out_adj;
  });
}

Var sub(const Var& a, const Var& b) {
  auto& t = tape_of({a, b});
  require_same_shape(a, b, "sub");
  return t.record(a.value() - b.value(), {a, b}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) *g += c.out_adj;
    if (auto* g = c.adj(1)) *g -= c.out_adj;
  });
}

Var scale(const Var& a, double alpha) { return affine(a, alpha, 0.0); }

Var affine(const Var& a, double alpha, double beta) {
  auto& t = tape_of({a});
  Matrix v = (alpha * a.value().array() + beta).matrix();
  return t.record(std::move(v), {a}, [alpha](const BackwardContext& c) {
    if (auto* g = c.adj(0)) *g += alpha * c.out_adj;
  });
}

Var hadamard(const Var& a, const Var& b) {
  auto& t = tape_of({a, b});
  require_same_shape(a, b, "hadamard");
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) *g += c.out_adj.cwiseProduct(c.in(1));
    if (auto* g = c.adj(1)) *g += c.out_adj.cwiseProduct(c.in(0));
  });
}

Var matmul(const Var& a, const Var& b) {
  auto& t = tape_of({a, b});
  if (a.cols() != b.rows()) {
    throw ContractError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()) + ")");
  }
  return t.record(a.value() * b.value(), {a, b}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) g->noalias() += c.out_adj * c.in(1).transpose();
    if (auto* g = c.adj(1)) g->noalias() += c.in(0).transpose() * c.out_adj;
  });
}

Var transpose(const Var& a) {
  auto& t = tape_of({a});
  return t.record(a.value().transpose(), {a}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) *g += c.out_adj.transpose();
  });
}

Var sum(const Var& a) {
  auto& t = tape_of({a});
  return t.record(scalar_matrix(a.value().sum()), {a}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) g->array() += c.out_adj(0, 0);
  });
}

Var mean(const Var& a) {
  auto& t = tape_of({a});
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ContractError("mean: empty operand");
  return t.record(scalar_matrix(a.value().sum() / n), {a}, [n](const BackwardContext& c) {
    if (auto* g = c.adj(0)) g->array() += c.out_adj(0, 0) / n;
  });
}

Var sum_squares(const Var& a) {
  auto& t = tape_of({a});
  return t.record(scalar_matrix(a.value().squaredNorm()), {a}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) *g += (2 * c.out_adj(0, 0)) * c.in(0);
  });
}

Var abs(const Var& a) {
  auto& t = tape_of({a});
  return t.record(a.value().cwiseAbs(), {a}, [](const BackwardContext& c) {
    // Subgradient 0 at the kink.
    if (auto* g = c.adj(0)) {
      *g += (c.out_adj.array() * c.in(0).array().sign()).matrix();
    }
  });
}

Var sigmoid(const Var& a) {
  auto& t = tape_of({a});
  Matrix v = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return t.record(std::move(v), {a}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) {
      const auto& y = c.out_value.array();
      *g += (c.out_adj.array() * y * (1.0 - y)).matrix();
    }
  });
}

Var relu(const Var& a) {
  auto& t = tape_of({a});
  return t.record(a.value().cwiseMax(0.0), {a}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) {
      *g += (c.in(0).array() > 0.0).select(c.out_adj, 0.0).matrix();
    }
  });
}

Var tanh(const Var& a) {
  auto& t = tape_of({a});
  return t.record(a.value().array().tanh().matrix(), {a}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) {
      *g += (c.out_adj.array() * (1.0 - c.out_value.array().square())).matrix();
    }
  });
}

Var log(const Var& a) {
  auto& t = tape_of({a});
  if ((a.value().array() <= 0.0).any()) throw DomainError("log: entries must be positive");
  return t.record(a.value().array().log().matrix(), {a}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) *g += c.out_adj.cwiseQuotient(c.in(0));
  });
}

Var row_softmax(const Var& a) {
  auto& t = tape_of({a});
  Matrix v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double m = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - m).exp().matrix();
    v.row(i) /= v.row(i).sum();
  }
  return t.record(std::move(v), {a}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) {
      const Matrix& y = c.out_value;
      const Eigen::VectorXd dots = c.out_adj.cwiseProduct(y).rowwise().sum();
      *g += (y.array() * (c.out_adj.colwise() - dots).array()).matrix();
    }
  });
}

// --- graph-shaped primitives -------------------------------------------------

Var symmetrize(const Var& a) {
  auto& t = tape_of({a});
  require_square(a, "symmetrize");
  Matrix v = 0.5 * (a.value() + a.value().transpose());
  return t.record(std::move(v), {a}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) *g += 0.5 * (c.out_adj + c.out_adj.transpose());
  });
}

Var zero_diagonal(const Var& a) {
  auto& t = tape_of({a});
  require_square(a, "zero_diagonal");
  Matrix v = a.value();
  v.diagonal().setZero();
  return t.record(std::move(v), {a}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) {
      Matrix d = c.out_adj;
      d.diagonal().setZero();
      *g += d;
    }
  });
}

Var degree_normalize(const Var& a, bool add_self_loops) {
  auto& t = tape_of({a});
  require_square(a, "degree_normalize");
  Matrix m = a.value();
  if (add_self_loops) m.diagonal().array() += 1.0;
  const Eigen::VectorXd deg = m.rowwise().sum();
  const Eigen::Index n = m.rows();
  Eigen::VectorXd s(n);
  std::vector<bool> isolated(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (deg(i) < kDegreeFloor) {
      isolated[static_cast<std::size_t>(i)] = true;
      s(i) = 1.0 / std::sqrt(kDegreeFloor);
    } else {
      s(i) = 1.0 / std::sqrt(deg(i));
    }
  }
  Matrix v = s.asDiagonal() * m * s.asDiagonal();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!isolated[static_cast<std::size_t>(i)]) continue;
    // A node with no mass keeps its walker: its row and column carry only a
    // unit self-transition.
    v.row(i).setZero();
    v.col(i).setZero();
    v(i, i) = 1.0;
  }
  return t.record(std::move(v), {a},
                  [m = std::move(m), s, isolated = std::move(isolated)](const BackwardContext& c) {
                    auto* g = c.adj(0);
                    if (g == nullptr) return;
                    Matrix go = c.out_adj;
                    const Eigen::Index n = go.rows();
                    for (Eigen::Index i = 0; i < n; ++i) {
                      if (!isolated[static_cast<std::size_t>(i)]) continue;
                      go.row(i).setZero();
                      go.col(i).setZero();
                    }
                    const Matrix gm_direct = s.asDiagonal() * go * s.asDiagonal();
                    const Matrix gxm = go.cwiseProduct(m);
                    // ds_i = sum_j G_ij M_ij s_j + sum_k G_ki M_ki s_k
                    const Eigen::VectorXd ds = gxm * s + gxm.transpose() * s;
                    Eigen::VectorXd dd(n);
                    for (Eigen::Index i = 0; i < n; ++i) {
                      dd(i) = isolated[static_cast<std::size_t>(i)]
                                  ? 0.0
                                  : -0.5 * ds(i) * s(i) * s(i) * s(i);
                    }
                    *g += gm_direct;
                    g->colwise() += dd;
                  });
}

Var lambda2(const Var& sym) {
  auto& t = tape_of({sym});
  require_square(sym, "lambda2");
  const Eigen::Index n = sym.rows();
  if (n < 2) throw ContractError("lambda2: need at least two nodes");
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym.value());
  if (es.info() != Eigen::Success) throw DomainError("lambda2: eigensolver failed");
  const auto& ev = es.eigenvalues();
  const double l2 = ev(n - 2);
  const bool repeated = (ev(n - 1) - l2 < 1e-8) || (n >= 3 && l2 - ev(n - 3) < 1e-8);
  if (repeated) {
    g_degenerate_events.fetch_add(1, std::memory_order_relaxed);
    spdlog::debug("lambda2: repeated eigenvalue {:.12g}; using the solver's first eigenvector", l2);
  }
  Eigen::VectorXd v2 = es.eigenvectors().col(n - 2);
  return t.record(scalar_matrix(l2), {sym}, [v2 = std::move(v2)](const BackwardContext& c) {
    if (auto* g = c.adj(0)) g->noalias() += c.out_adj(0, 0) * (v2 * v2.transpose());
  });
}

std::uint64_t degenerate_lambda2_events() { return g_degenerate_events.load(); }

Var select_rows(const Var& a, std::vector<int> rows) {
  auto& t = tape_of({a});
  Matrix v(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= a.rows()) throw ContractError("select_rows: index out of range");
    v.row(static_cast<Eigen::Index>(k)) = a.value().row(rows[k]);
  }
  return t.record(std::move(v), {a}, [rows = std::move(rows)](const BackwardContext& c) {
    if (auto* g = c.adj(0)) {
      for (std::size_t k = 0; k < rows.size(); ++k) {
        g->row(rows[k]) += c.out_adj.row(static_cast<Eigen::Index>(k));
      }
    }
  });
}

Var column(const Var& a, Eigen::Index j) {
  auto& t = tape_of({a});
  if (j < 0 || j >= a.cols()) throw ContractError("column: index out of range");
  return t.record(a.value().col(j), {a}, [j](const BackwardContext& c) {
    if (auto* g = c.adj(0)) g->col(j) += c.out_adj;
  });
}

Var reshape_rowmajor(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  auto& t = tape_of({a});
  if (rows * cols != a.value().size()) throw ContractError("reshape_rowmajor: size mismatch");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor src = a.value();
  Matrix v = Eigen::Map<const RowMajor>(src.data(), rows, cols);
  const Eigen::Index in_rows = a.rows(), in_cols = a.cols();
  return t.record(std::move(v), {a}, [in_rows, in_cols](const BackwardContext& c) {
    if (auto* g = c.adj(0)) {
      const RowMajor ga = c.out_adj;
      *g += Eigen::Map<const RowMajor>(ga.data(), in_rows, in_cols);
    }
  });
}

Var standardize_cols(const Var& a, double eps) {
  auto& t = tape_of({a});
  const Matrix& x = a.value();
  const double n = static_cast<double>(x.rows());
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Matrix centered = x.rowwise() - mu;
  const Eigen::RowVectorXd var = centered.colwise().squaredNorm() / n;
  Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix v = centered * inv_std.asDiagonal();
  return t.record(std::move(v), {a}, [inv_std = std::move(inv_std), n](const BackwardContext& c) {
    if (auto* g = c.adj(0)) {
      const Matrix& xhat = c.out_value;
      const Matrix& dy = c.out_adj;
      const Eigen::RowVectorXd sum_dy = dy.colwise().sum();
      const Eigen::RowVectorXd sum_dy_xhat = dy.cwiseProduct(xhat).colwise().sum();
      Matrix dx = (n * dy).rowwise() - sum_dy;
      dx -= xhat * sum_dy_xhat.asDiagonal();
      *g += dx * (inv_std / n).asDiagonal();
    }
  });
}

Var affine_cols(const Var& a, const Var& scale_row, const Var& shift_row) {
  auto& t = tape_of({a, scale_row, shift_row});
  if (scale_row.rows() != 1 || shift_row.rows() != 1 || scale_row.cols() != a.cols() ||
      shift_row.cols() != a.cols()) {
    throw ContractError("affine_cols: scale/shift must be 1 x cols");
  }
  Matrix v = a.value() * scale_row.value().row(0).asDiagonal();
  v.rowwise() += shift_row.value().row(0);
  return t.record(std::move(v), {a, scale_row, shift_row}, [](const BackwardContext& c) {
    if (auto* g = c.adj(0)) *g += c.out_adj * c.in(1).row(0).asDiagonal();
    if (auto* g = c.adj(1)) *g += c.out_adj.cwiseProduct(c.in(0)).colwise().sum();
    if (auto* g = c.adj(2)) *g += c.out_adj.colwise().sum();
  });
}

Var column_cosine_distance(const Var& a, const Matrix& ref) {
  auto& t = tape_of({a});
  if (a.rows() != ref.rows() || a.cols() != ref.cols()) {
    throw ContractError("column_cosine_distance: shape mismatch");
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < ref.cols(); ++k) {
    const double na = a.value().col(k).norm(), nr = ref.col(k).norm();
    if (na == 0.0 || nr == 0.0) continue;
    total += 1.0 - a.value().col(k).dot(ref.col(k)) / (na * nr);
  }
  return t.record(scalar_matrix(total), {a}, [ref](const BackwardContext& c) {
    auto* g = c.adj(0);
    if (g == nullptr) return;
    const double go = c.out_adj(0, 0);
    for (Eigen::Index k = 0; k < ref.cols(); ++k) {
      const auto ak = c.in(0).col(k);
      const double na = ak.norm(), nr = ref.col(k).norm();
      if (na == 0.0 || nr == 0.0) continue;
      const double cos = ak.dot(ref.col(k)) / (na * nr);
      g->col(k) -= go * (ref.col(k) / (na * nr) - (cos / (na * na)) * ak);
    }
  });
}

Var edge_embed(const Var& x) {
  auto& t = tape_of({x});
  const Eigen::Index n = x.rows(), d = x.cols();
  Matrix v(n * n, 2 * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      v.row(i * n + j) << x.value().row(i), x.value().row(j);
    }
  }
  return t.record(std::move(v), {x}, [n, d](const BackwardContext& c) {
    if (auto* g = c.adj(0)) {
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
          const auto r = c.out_adj.row(i * n + j);
          g->row(i) += r.head(d);
          g->row(j) += r.tail(d);
        }
      }
    }
  });
}

// --- manifold rows -------------------------------------------------------------

namespace {

using Vector = Eigen::VectorXd;

// Row-wise dot products.
Vector row_dot(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).rowwise().sum(); }

// Every map below acts radially on each row, y = phi(||x||) x, so values and
// adjoints reduce to per-row scalars and two diagonal scalings.

// Scale factors of the ball projection.
Vector project_scales(const Matrix& x, double bound) {
  if (!x.allFinite()) throw DomainError("project_to_ball: non-finite coordinates");
  const Vector n2 = x.rowwise().squaredNorm();
  Vector s(n2.size());
  for (Eigen::Index i = 0; i < n2.size(); ++i) s(i) = n2(i) < bound ? 1.0 : std::sqrt(bound / n2(i));
  return s;
}

// Adjoint of x -> project(x) for every row.
Matrix project_rows_vjp(const Matrix& x, const Matrix& g, double bound) {
  const Vector n2 = x.rowwise().squaredNorm();
  const Vector gx = row_dot(g, x);
  Vector a(n2.size()), b(n2.size());
  for (Eigen::Index i = 0; i < n2.size(); ++i) {
    if (n2(i) < bound) {
      a(i) = 1.0;
      b(i) = 0.0;
    } else {
      a(i) = std::sqrt(bound / n2(i));
      b(i) = -a(i) * gx(i) / n2(i);
    }
  }
  return a.asDiagonal() * g + b.asDiagonal() * x;
}

Eigen::Index broadcast_rows(const Var& x, const Var& y, const char* op) {
  if (x.cols() != y.cols()) throw ContractError(std::string(op) + ": dimension mismatch");
  if (x.rows() == y.rows()) return x.rows();
  if (x.rows() == 1) return y.rows();
  if (y.rows() == 1) return x.rows();
  throw ContractError(std::string(op) + ": row counts differ and neither operand is a single row");
}

}  // namespace

Var expmap0_rows(const Var& u, const Ball& ball) {
  auto& t = tape_of({u});
  const double sc = std::sqrt(ball.curvature());
  const Vector n = u.value().rowwise().norm();
  Vector f(n.size());
  for (Eigen::Index i = 0; i < n.size(); ++i) f(i) = manifold::detail::tanh_ratio(sc * n(i)).first;
  const Matrix raw = f.asDiagonal() * u.value();
  Matrix v = project_scales(raw, ball.max_norm_sq()).asDiagonal() * raw;
  return t.record(std::move(v), {u}, [ball, sc](const BackwardContext& c) {
    auto* g = c.adj(0);
    if (g == nullptr) return;
    const Matrix& uv = c.in(0);
    const Vector n = uv.rowwise().norm();
    Vector f(n.size()), df(n.size());
    for (Eigen::Index i = 0; i < n.size(); ++i) {
      std::tie(f(i), df(i)) = manifold::detail::tanh_ratio(sc * n(i));
    }
    const Matrix raw = f.asDiagonal() * uv;
    const Matrix gr = project_rows_vjp(raw, c.out_adj, ball.max_norm_sq());
    const Vector gu = row_dot(gr, uv);
    Vector b(n.size());
    for (Eigen::Index i = 0; i < n.size(); ++i) b(i) = n(i) > 0 ? df(i) * sc * gu(i) / n(i) : 0.0;
    *g += f.asDiagonal() * gr;
    *g += b.asDiagonal() * uv;
  });
}

Var logmap0_rows(const Var& x, const Ball& ball) {
  auto& t = tape_of({x});
  const double sc = std::sqrt(ball.curvature());
  const Vector n = x.value().rowwise().norm();
  Vector h(n.size());
  for (Eigen::Index i = 0; i < n.size(); ++i) {
    h(i) = manifold::detail::artanh_ratio(manifold::detail::clamp_unit(sc * n(i))).first;
  }
  Matrix v = h.asDiagonal() * x.value();
  return t.record(std::move(v), {x}, [sc](const BackwardContext& c) {
    auto* g = c.adj(0);
    if (g == nullptr) return;
    const Matrix& xv = c.in(0);
    const Vector n = xv.rowwise().norm();
    const Vector gx = row_dot(c.out_adj, xv);
    Vector h(n.size()), b(n.size());
    for (Eigen::Index i = 0; i < n.size(); ++i) {
      const auto [hi, dh] = manifold::detail::artanh_ratio(manifold::detail::clamp_unit(sc * n(i)));
      h(i) = hi;
      b(i) = n(i) > 0 ? dh * sc * gx(i) / n(i) : 0.0;
    }
    *g += h.asDiagonal() * c.out_adj;
    *g += b.asDiagonal() * xv;
  });
}

Var project_rows(const Var& x, const Ball& ball) {
  auto& t = tape_of({x});
  Matrix v = project_scales(x.value(), ball.max_norm_sq()).asDiagonal() * x.value();
  return t.record(std::move(v), {x}, [ball](const BackwardContext& c) {
    if (auto* g = c.adj(0)) *g += project_rows_vjp(c.in(0), c.out_adj, ball.max_norm_sq());
  });
}

namespace {

struct MobiusTerms {
  Matrix x, y;  // operands expanded to full height
  Vector xy, x2, y2, alpha, beta, den;
};

MobiusTerms mobius_terms(const Matrix& xm, const Matrix& ym, Eigen::Index n, double c) {
  MobiusTerms m;
  m.x = xm.rows() == n ? xm : Matrix(xm.replicate(n, 1));
  m.y = ym.rows() == n ? ym : Matrix(ym.replicate(n, 1));
  m.xy = row_dot(m.x, m.y);
  m.x2 = m.x.rowwise().squaredNorm();
  m.y2 = m.y.rowwise().squaredNorm();
  m.alpha = (1.0 + 2.0 * c * m.xy.array() + c * m.y2.array()).matrix();
  m.beta = (1.0 - c * m.x2.array()).matrix();
  m.den = (1.0 + 2.0 * c * m.xy.array() + c * c * m.x2.array() * m.y2.array()).matrix();
  return m;
}

Matrix mobius_raw(const MobiusTerms& m) {
  const Vector inv = m.den.cwiseInverse();
  return m.alpha.cwiseProduct(inv).asDiagonal() * m.x + m.beta.cwiseProduct(inv).asDiagonal() * m.y;
}

void accumulate_rows(Matrix& target, const Matrix& g) {
  if (target.rows() == g.rows()) {
    target += g;
  } else {
    target += g.colwise().sum();
  }
}

}  // namespace

Var mobius_add_rows(const Var& x, const Var& y, const Ball& ball) {
  auto& t = tape_of({x, y});
  const Eigen::Index n = broadcast_rows(x, y, "mobius_add_rows");
  const double c = ball.curvature();
  const Matrix raw = mobius_raw(mobius_terms(x.value(), y.value(), n, c));
  Matrix v = project_scales(raw, ball.max_norm_sq()).asDiagonal() * raw;
  return t.record(std::move(v), {x, y}, [ball, n, c](const BackwardContext& ctx) {
    auto* gx = ctx.adj(0);
    auto* gy = ctx.adj(1);
    if (gx == nullptr && gy == nullptr) return;
    const MobiusTerms m = mobius_terms(ctx.in(0), ctx.in(1), n, c);
    const Matrix out = mobius_raw(m);
    const Matrix g = project_rows_vjp(out, ctx.out_adj, ball.max_norm_sq());
    const Vector inv = m.den.cwiseInverse();
    const Matrix gn = inv.asDiagonal() * g;
    const Vector gn_x = row_dot(gn, m.x), gn_y = row_dot(gn, m.y);
    const Vector s = row_dot(g, out).cwiseProduct(inv);
    if (gx) {
      const Vector cx = (-2.0 * c * gn_y.array() - 2.0 * c * c * s.array() * m.y2.array()).matrix();
      const Vector cy = (2.0 * c * gn_x.array() - 2.0 * c * s.array()).matrix();
      accumulate_rows(*gx, m.alpha.asDiagonal() * gn + cx.asDiagonal() * m.x + cy.asDiagonal() * m.y);
    }
    if (gy) {
      const Vector cx = (2.0 * c * gn_x.array() - 2.0 * c * s.array()).matrix();
      const Vector cy = (2.0 * c * gn_x.array() - 2.0 * c * c * s.array() * m.x2.array()).matrix();
      accumulate_rows(*gy, m.beta.asDiagonal() * gn + cx.asDiagonal() * m.x + cy.asDiagonal() * m.y);
    }
  });
}

Var expmap_rows(const Var& p, const Var& u, const Ball& ball) {
  auto& t = tape_of({p, u});
  require_same_shape(p, u, "expmap_rows");
  Matrix v(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    v.row(i) = ball.expmap(p.value().row(i).transpose(), u.value().row(i).transpose()).transpose();
  }
  return t.record(std::move(v), {p, u}, [ball](const BackwardContext& c) {
    auto* gp = c.adj(0);
    auto* gu = c.adj(1);
    for (Eigen::Index i = 0; i < c.out_adj.rows(); ++i) {
      auto [dp, du] = ball.expmap_vjp(c.in(0).row(i).transpose(), c.in(1).row(i).transpose(),
                                      c.out_adj.row(i).transpose());
      if (gp) gp->row(i) += dp.transpose();
      if (gu) gu->row(i) += du.transpose();
    }
  });
}

Var logmap_rows(const Var& p1, const Var& p2, const Ball& ball) {
  auto& t = tape_of({p1, p2});
  require_same_shape(p1, p2, "logmap_rows");
  Matrix v(p1.rows(), p1.cols());
  for (Eigen::Index i = 0; i < p1.rows(); ++i) {
    v.row(i) = ball.logmap(p1.value().row(i).transpose(), p2.value().row(i).transpose()).transpose();
  }
  return t.record(std::move(v), {p1, p2}, [ball](const BackwardContext& c) {
    auto* g1 = c.adj(0);
    auto* g2 = c.adj(1);
    for (Eigen::Index i = 0; i < c.out_adj.rows(); ++i) {
      auto [d1, d2] = ball.logmap_vjp(c.in(0).row(i).transpose(), c.in(1).row(i).transpose(),
                                      c.out_adj.row(i).transpose());
      if (g1) g1->row(i) += d1.transpose();
      if (g2) g2->row(i) += d2.transpose();
    }
  });
}

// --- fused first layer -------------------------------------------------------

namespace {

// Radial factor rho(nu) of log0(project(exp0(e))) = rho(||e||) e, and d rho / d nu.
std::pair<double, double> lift_ratio(double nu, const Ball& ball) {
  const double sc = std::sqrt(ball.curvature());
  const double bound = ball.max_norm_sq();
  const double lifted = std::tanh(sc * nu) / sc;
  if (lifted * lifted < bound) return {1.0, 0.0};
  const double capped = std::atanh(sc * std::sqrt(bound)) / sc;
  return {capped / nu, -capped / (nu * nu)};
}

}  // namespace

Var lifted_pair_linear(const Var& x, const Var& w, const Ball& ball) {
  auto& t = tape_of({x, w});
  const Eigen::Index n = x.rows(), d = x.cols(), h = w.cols();
  if (w.rows() != 2 * d) throw ContractError("lifted_pair_linear: weight must have 2d rows");
  const Matrix& xv = x.value();
  const Matrix top = xv * w.value().topRows(d);
  const Matrix bottom = xv * w.value().bottomRows(d);
  const Eigen::VectorXd q = xv.rowwise().squaredNorm();

  Matrix rho(n, n), drho(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto [r, dr] = lift_ratio(std::sqrt(q(i) + q(j)), ball);
      rho(i, j) = r;
      drho(i, j) = dr;
    }
  }
  Matrix v(n * n, h);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) v.row(i * n + j) = rho(i, j) * (top.row(i) + bottom.row(j));
  }
  return t.record(
      std::move(v), {x, w},
      [n, d, top, bottom, q, rho = std::move(rho), drho = std::move(drho)](const BackwardContext& c) {
        auto* gx = c.adj(0);
        auto* gw = c.adj(1);
        if (gx == nullptr && gw == nullptr) return;
        const Eigen::Index h = c.out_adj.cols();
        Matrix d_top = Matrix::Zero(n, h), d_bottom = Matrix::Zero(n, h);
        Eigen::VectorXd dq = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          for (Eigen::Index j = 0; j < n; ++j) {
            const auto g = c.out_adj.row(i * n + j);
            d_top.row(i) += rho(i, j) * g;
            d_bottom.row(j) += rho(i, j) * g;
            if (drho(i, j) != 0.0) {
              const double nu = std::sqrt(q(i) + q(j));
              const double dnu = g.dot(top.row(i) + bottom.row(j)) * drho(i, j);
              dq(i) += dnu / (2 * nu);
              dq(j) += dnu / (2 * nu);
            }
          }
        }
        const Matrix& xv = c.in(0);
        const Matrix& wv = c.in(1);
        if (gx) {
          gx->noalias() += d_top * wv.topRows(d).transpose();
          gx->noalias() += d_bottom * wv.bottomRows(d).transpose();
          *gx += 2.0 * dq.asDiagonal() * xv;
        }
        if (gw) {
          gw->topRows(d).noalias() += xv.transpose() * d_top;
          gw->bottomRows(d).noalias() += xv.transpose() * d_bottom;
        }
      });
}

}  // namespace hydro::ad

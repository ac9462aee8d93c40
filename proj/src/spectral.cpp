// SPDX-License-Identifier: Apache-2.0
#include "hydro/spectral.hpp"

#include <Eigen/SparseCore>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>

#include "hydro/errors.hpp"

namespace hydro::spectral {

GapResult spectral_gap(const Eigen::MatrixXd& w) {
  if (w.rows() != w.cols() || w.rows() < 2) {
    throw ContractError("spectral_gap: need a square matrix with at least two rows");
  }
  if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw ContractError("spectral_gap: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w);
  if (es.info() != Eigen::Success) throw DomainError("spectral_gap: eigensolver failed");
  const auto& ev = es.eigenvalues();
  const Eigen::Index n = w.rows();
  GapResult r;
  r.lambda2 = ev(n - 2);
  r.gap = 1.0 - r.lambda2;
  r.v2 = es.eigenvectors().col(n - 2);
  r.degenerate = (ev(n - 1) - r.lambda2 < 1e-8) || (n >= 3 && r.lambda2 - ev(n - 3) < 1e-8);
  return r;
}

ad::Var synthetic_gap(const ad::Var& adjacency) {
  // lambda2(1/2 (I + N)) = 1/2 (1 + lambda2(N)), so the gap is 1/2 - lambda2(N) / 2.
  const ad::Var normalized = ad::degree_normalize(adjacency, /*add_self_loops=*/false);
  return ad::affine(ad::lambda2(normalized), -0.5, 0.5);
}

double sampled_gap(const Eigen::MatrixXd& adjacency) {
  if (adjacency.rows() < 2) throw ContractError("sampled_gap: need at least two nodes");
  // Each component carries its own unit eigenvalue, so a disconnected sample
  // has no gap. Uniform samples of sparse graphs almost always land here.
  const std::vector<int> comp = connected_components(adjacency);
  if (*std::max_element(comp.begin(), comp.end()) > 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lazy_walk_sampled(adjacency), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw DomainError("sampled_gap: eigensolver failed");
  return 1.0 - es.eigenvalues()(adjacency.rows() - 2);
}

ad::Var gap_loss(const ad::Var& synthetic_adjacency, const Eigen::MatrixXd& sampled_adjacency) {
  const double g_sub = sampled_gap(sampled_adjacency);
  ad::Tape& tape = *synthetic_adjacency.tape();
  const ad::Var target = tape.constant(Eigen::MatrixXd::Constant(1, 1, g_sub));
  return ad::abs(ad::sub(synthetic_gap(synthetic_adjacency), target));
}

std::vector<int> connected_components(const Eigen::MatrixXd& adjacency) {
  const Eigen::Index n = adjacency.rows();
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  int next = 0;
  std::vector<Eigen::Index> stack;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (comp[static_cast<std::size_t>(s)] >= 0) continue;
    comp[static_cast<std::size_t>(s)] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const Eigen::Index u = stack.back();
      stack.pop_back();
      for (Eigen::Index v = 0; v < n; ++v) {
        if (adjacency(u, v) > 0.0 && comp[static_cast<std::size_t>(v)] < 0) {
          comp[static_cast<std::size_t>(v)] = next;
          stack.push_back(v);
        }
      }
    }
    ++next;
  }
  return comp;
}

Eigen::MatrixXd commute_matrix(const Eigen::MatrixXd& adjacency) {
  const Eigen::Index n = adjacency.rows();
  if (adjacency.cols() != n) throw ContractError("commute_matrix: adjacency must be square");
  if ((adjacency.array() < 0.0).any()) throw DomainError("commute_matrix: negative weight");
  Eigen::MatrixXd ct = Eigen::MatrixXd::Constant(n, n, kUnreachable);
  const std::vector<int> comp = connected_components(adjacency);
  const int num_comp = n ? *std::max_element(comp.begin(), comp.end()) + 1 : 0;
  if (num_comp > 1) spdlog::debug("commute_matrix: {} components, solved separately", num_comp);

  for (int c = 0; c < num_comp; ++c) {
    std::vector<Eigen::Index> nodes;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (comp[static_cast<std::size_t>(i)] == c) nodes.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(nodes.size());
    Eigen::MatrixXd lap(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) lap(i, j) = -adjacency(nodes[i], nodes[j]);
      lap(i, i) = 0.0;
    }
    const Eigen::VectorXd deg = -lap.rowwise().sum();
    lap.diagonal() = deg;
    const double vol = deg.sum();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap);
    if (es.info() != Eigen::Success) throw DomainError("commute_matrix: eigensolver failed");
    Eigen::VectorXd inv = es.eigenvalues();
    for (Eigen::Index k = 0; k < m; ++k) inv(k) = inv(k) > 1e-10 ? 1.0 / inv(k) : 0.0;
    const Eigen::MatrixXd& u = es.eigenvectors();
    const Eigen::MatrixXd green = u * inv.asDiagonal() * u.transpose();

    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        const double v = i == j ? 0.0 : vol * (green(i, i) + green(j, j) - green(i, j) - green(j, i));
        ct(nodes[i], nodes[j]) = std::max(v, 0.0);
      }
    }
  }
  // Exact symmetry regardless of rounding in the Green's function.
  ct = 0.5 * (ct + ct.transpose()).eval();
  return ct;
}

Eigen::MatrixXd commute_matrix(const Graph& g) { return commute_matrix(dense_adjacency(g)); }

Eigen::MatrixXd cap_matrix(const Eigen::MatrixXd& m, double cap) {
  if (!(cap > 0.0)) throw ContractError(fmt::format("cap must be positive (got {})", cap));
  return m.cwiseMin(cap);
}

Eigen::MatrixXd commute_heatmap_export(const Eigen::MatrixXd& adjacency, double cap,
                                       const std::filesystem::path& path) {
  Eigen::MatrixXd capped = cap_matrix(commute_matrix(adjacency), cap);
  write_matrix_csv(capped, path);
  return capped;
}

Eigen::MatrixXd flow_distance(const Eigen::MatrixXd& adjacency) {
  const Eigen::Index n = adjacency.rows();
  if (adjacency.cols() != n) throw ContractError("flow_distance: adjacency must be square");
  if ((adjacency.array() < 0.0).any()) throw DomainError("flow_distance: negative edge weight");
  std::vector<std::vector<std::pair<Eigen::Index, double>>> nbrs(static_cast<std::size_t>(n));
  for (Eigen::Index u = 0; u < n; ++u) {
    for (Eigen::Index v = 0; v < n; ++v) {
      if (u != v && adjacency(u, v) > 0.0) nbrs[static_cast<std::size_t>(u)].emplace_back(v, adjacency(u, v));
    }
  }
  Eigen::MatrixXd dist = Eigen::MatrixXd::Constant(n, n, kUnreachable);
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index s = 0; s < n; ++s) {
    using Item = std::pair<double, Eigen::Index>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    Eigen::VectorXd d = Eigen::VectorXd::Constant(n, kUnreachable);
    d(s) = 0.0;
    heap.emplace(0.0, s);
    while (!heap.empty()) {
      const auto [du, u] = heap.top();
      heap.pop();
      if (du > d(u)) continue;
      for (const auto& [v, w] : nbrs[static_cast<std::size_t>(u)]) {
        if (du + w < d(v)) {
          d(v) = du + w;
          heap.emplace(d(v), v);
        }
      }
    }
    dist.row(s) = d.transpose();
  }
  return dist;
}

Eigen::MatrixXd flow_distance(const Graph& g) { return flow_distance(dense_adjacency(g)); }

Diagnostics walk_diagnostics(const Eigen::MatrixXd& adjacency, int start, int steps, int max_steps) {
  const Eigen::Index n = adjacency.rows();
  if (n < 2) throw ContractError("walk_diagnostics: need at least two nodes");
  if (start < 0 || start >= n) throw ContractError("walk_diagnostics: start node out of range");
  const std::vector<int> comp = connected_components(adjacency);
  if (*std::max_element(comp.begin(), comp.end()) > 0) {
    throw ContractError("walk_diagnostics: graph is disconnected");
  }
  Diagnostics out;
  const GapResult gap = spectral_gap(lazy_walk_synthetic_sym(adjacency));
  out.gap = gap.gap;
  out.lambda2 = gap.lambda2;
  out.mixing_estimate = 1.0 / gap.gap;

  const Eigen::VectorXd deg = adjacency.rowwise().sum();
  const Eigen::VectorXd s = deg.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd norm_lap =
      Eigen::MatrixXd::Identity(n, n) - s.asDiagonal() * adjacency * s.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(norm_lap, Eigen::EigenvaluesOnly);
  out.nu2 = es.eigenvalues()(1);
  out.cheeger_lower = out.nu2 / 2.0;
  out.cheeger_upper = std::sqrt(2.0 * out.nu2);

  if (steps < 0) {
    const double want = std::ceil(50.0 * out.mixing_estimate);
    steps = static_cast<int>(std::min<double>(want, max_steps));
  }
  const Eigen::VectorXd pi = deg / deg.sum();
  const SparseMatrix transition = (deg.cwiseInverse().asDiagonal() * adjacency).sparseView();
  Eigen::RowVectorXd p = Eigen::RowVectorXd::Zero(n);
  p(start) = 1.0;
  out.tv_curve.reserve(static_cast<std::size_t>(steps) + 1);
  for (int t = 0;; ++t) {
    out.tv_curve.push_back(0.5 * (p.transpose() - pi).cwiseAbs().sum());
    if (t == steps) break;
    p = 0.5 * p + 0.5 * (p * transition);
  }
  return out;
}

WalkReport walk_report(const Eigen::MatrixXd& adjacency) {
  WalkReport r;
  const GapResult gap = spectral_gap(lazy_walk_synthetic_sym(adjacency));
  r.spectral_gap = gap.gap;
  r.lambda2 = gap.lambda2;
  r.commute = commute_matrix(adjacency);
  r.flow_dist = flow_distance(adjacency);
  const std::vector<int> comp = connected_components(adjacency);
  if (*std::max_element(comp.begin(), comp.end()) == 0) r.diagnostics = walk_diagnostics(adjacency);
  return r;
}

}  // namespace hydro::spectral

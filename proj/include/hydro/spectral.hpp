// SPDX-License-Identifier: Apache-2.0
//
// Spectral gap, commute times, flow distances and walk diagnostics.
#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <limits>
#include <optional>
#include <vector>

#include "hydro/adgrad.hpp"
#include "hydro/graph.hpp"

namespace hydro::spectral {

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();
inline constexpr double kDefaultCap = 20000.0;

struct GapResult {
  double gap = 0.0;
  double lambda2 = 0.0;
  Eigen::VectorXd v2;
  /// lambda2 repeated within 1e-8; v2 is then one arbitrary member of the eigenspace.
  bool degenerate = false;
};

/// Gap 1 - lambda2 of a symmetric walk matrix. Throws ContractError when `w`
/// is asymmetric beyond 1e-9 or has fewer than two rows.
GapResult spectral_gap(const Eigen::MatrixXd& w);

/// Gap of the lazy walk on a synthetic adjacency, on the tape.
ad::Var synthetic_gap(const ad::Var& adjacency);
/// Gap of the self-looped lazy walk on a sampled adjacency.
double sampled_gap(const Eigen::MatrixXd& adjacency);
/// |g_syn - g_sub|.
ad::Var gap_loss(const ad::Var& synthetic_adjacency, const Eigen::MatrixXd& sampled_adjacency);

/// Component id per node (ids in order of first appearance).
std::vector<int> connected_components(const Eigen::MatrixXd& adjacency);

/// Commute times vol * (G_uu + G_vv - 2 G_uv) with G the Laplacian
/// pseudoinverse, computed per connected component with that component's
/// volume. Pairs in different components are kUnreachable.
Eigen::MatrixXd commute_matrix(const Eigen::MatrixXd& adjacency);
Eigen::MatrixXd commute_matrix(const Graph& g);

/// min(m, cap) entrywise; cap must be positive.
Eigen::MatrixXd cap_matrix(const Eigen::MatrixXd& m, double cap);
/// Writes the capped commute matrix as CSV and returns it.
Eigen::MatrixXd commute_heatmap_export(const Eigen::MatrixXd& adjacency, double cap,
                                       const std::filesystem::path& path);

/// All-pairs shortest-path weights with edge lengths equal to the adjacency
/// weights (zero means no edge). Unreachable pairs are kUnreachable. Throws
/// DomainError on negative weights.
Eigen::MatrixXd flow_distance(const Eigen::MatrixXd& adjacency);
Eigen::MatrixXd flow_distance(const Graph& g);

struct Diagnostics {
  double gap = 0.0;              // lazy-walk spectral gap
  double lambda2 = 0.0;          // second-largest lazy-walk eigenvalue
  double mixing_estimate = 0.0;  // 1 / gap
  double nu2 = 0.0;              // second-smallest normalized-Laplacian eigenvalue
  double cheeger_lower = 0.0;    // nu2 / 2
  double cheeger_upper = 0.0;    // sqrt(2 nu2)
  std::vector<double> tv_curve;  // total variation to stationarity, t = 0..steps
};

/// Walk diagnostics for a connected graph, walking lazily from `start`. With
/// steps < 0 the curve runs to ceil(50 * mixing_estimate), capped at max_steps.
/// Throws ContractError when the graph is disconnected.
Diagnostics walk_diagnostics(const Eigen::MatrixXd& adjacency, int start = 0, int steps = -1,
                             int max_steps = 20000);

/// Everything the analysis tools report about one graph.
struct WalkReport {
  double spectral_gap = 0.0;
  double lambda2 = 0.0;
  Eigen::MatrixXd commute;
  Eigen::MatrixXd flow_dist;
  std::optional<Diagnostics> diagnostics;  // absent for disconnected graphs
};

WalkReport walk_report(const Eigen::MatrixXd& adjacency);

}  // namespace hydro::spectral

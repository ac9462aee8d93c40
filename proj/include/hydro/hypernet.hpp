// SPDX-License-Identifier: Apache-2.0
//
// Hyperbolic structure generator: node pairs -> Poincare-ball MLP -> A'.
#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <vector>

#include "hydro/adgrad.hpp"
#include "hydro/graph.hpp"

namespace hydro::hypernet {

using ad::Ball;
using ad::Var;

/// Largest synthetic graph the generator accepts (n'^2 edge rows).
inline constexpr int kMaxNodes = 512;
inline constexpr double kBatchNormEps = 1e-5;

struct HyperNetConfig {
  int layers = 2;     // Mobius linear layers, the last one maps to a scalar
  int hidden = 128;
  double curvature = 0.01;
  /// Evaluate the first layer without materializing the n'^2 x 2d edge batch.
  bool fused_first_layer = true;
};

/// Layer l maps in_l -> out_l. Hidden layers carry batch-norm affine parameters.
struct HyperNetParams {
  std::vector<Eigen::MatrixXd> weights;   // in_l x out_l
  std::vector<Eigen::MatrixXd> biases;    // 1 x out_l ball points
  std::vector<Eigen::MatrixXd> bn_scale;  // 1 x out_l, hidden layers only
  std::vector<Eigen::MatrixXd> bn_shift;

  int layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().rows()) / 2; }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, biases at the origin,
/// unit scale and zero shift.
HyperNetParams init_params(const HyperNetConfig& cfg, int feature_dim, Rng& rng);

/// Tape handles for one forward pass.
struct HyperNetVars {
  std::vector<Var> weights, biases, bn_scale, bn_shift;
};
HyperNetVars bind(ad::Tape& tape, const HyperNetParams& params);

// Building blocks. `z` holds one ball point per row.
Var lift(const Var& e, const Ball& ball);
/// b (+) exp0(W log0(z)), boundary-projected.
Var mobius_linear(const Var& z, const Var& w, const Var& b, const Ball& ball);
/// exp0(standardize(log0(z)) * scale + shift). Throws ContractError for a batch of one.
Var tangent_batchnorm(const Var& z, const Var& scale, const Var& shift, const Ball& ball);
/// exp0(relu(log0(z))).
Var hyperbolic_relu(const Var& z, const Ball& ball);
/// Reads component 0 of log0 of each row as the logit of pair (i, j) = row i*n+j,
/// then symmetrizes, applies the sigmoid and zeroes the diagonal.
Var adjacency_head(const Var& z_last, int n, const Ball& ball);

/// Full generator. `x` are Euclidean node features (n' x d).
Var forward(const HyperNetConfig& cfg, const HyperNetVars& vars, const Var& x);

/// Convenience forward without gradients.
Eigen::MatrixXd generate(const HyperNetConfig& cfg, const HyperNetParams& params,
                         const Eigen::MatrixXd& x);

void save_checkpoint(const HyperNetParams& params, const std::filesystem::path& path);
HyperNetParams load_checkpoint(const std::filesystem::path& path);

}  // namespace hydro::hypernet

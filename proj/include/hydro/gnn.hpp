// SPDX-License-Identifier: Apache-2.0
//
// SGC (the inner model of gradient matching) and the two-layer GCN used for
// evaluation.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <vector>

#include "hydro/adgrad.hpp"
#include "hydro/graph.hpp"

namespace hydro::gnn {

/// D~^-1/2 (A + I) D~^-1/2.
SparseMatrix normalized_adjacency(const SparseMatrix& a);
Eigen::MatrixXd normalized_adjacency(const Eigen::MatrixXd& a);

/// S^k X.
Eigen::MatrixXd propagate(const SparseMatrix& s, const Eigen::MatrixXd& x, int k);
Eigen::MatrixXd propagate(const Eigen::MatrixXd& s, const Eigen::MatrixXd& x, int k);

Eigen::MatrixXd one_hot(const std::vector<int>& labels, int num_classes);

/// Index of the largest entry per row; ties go to the lowest index.
std::vector<int> argmax_rows(const Eigen::MatrixXd& m);

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& m);

// --- SGC ----------------------------------------------------------------------

struct SgcModel {
  int k = 2;
  Eigen::MatrixXd theta;  // d x C
};

Eigen::MatrixXd sgc_forward(const Graph& g, const SgcModel& m);
Eigen::MatrixXd sgc_forward(const CondensedGraph& g, const SgcModel& m);

/// Gradient of the mean softmax cross-entropy over `mask` with respect to
/// theta, given precomputed S^k X: P_m^T (softmax(P_m theta) - Y_m) / |mask|.
Eigen::MatrixXd sgc_grad(const Eigen::MatrixXd& propagated, const Eigen::MatrixXd& theta,
                         const std::vector<int>& labels, const std::vector<int>& mask, int num_classes);

/// The same gradient recorded on a tape so it can be differentiated with
/// respect to the propagated features. `onehot` rows align with `propagated`.
ad::Var sgc_grad(const ad::Var& propagated, const Eigen::MatrixXd& theta, const Eigen::MatrixXd& onehot);

/// Mean softmax cross-entropy of (propagated theta) against `onehot`, on a tape.
ad::Var cross_entropy(const ad::Var& logits, const Eigen::MatrixXd& onehot);

// --- GCN ----------------------------------------------------------------------

struct GcnConfig {
  int hidden = 256;
  int epochs = 500;
  double lr = 0.01;
  double weight_decay = 5e-4;
  double dropout = 0.5;
};

struct GcnModel {
  Eigen::MatrixXd w1, w2;
  Eigen::RowVectorXd b1, b2;
};

/// Full-batch Adam on the cross-entropy of the condensed graph's training
/// nodes, using its weighted adjacency with self-loops. Deterministic given
/// the generator state. `losses`, when given, receives the per-epoch loss.
GcnModel gcn_train(const CondensedGraph& g, const GcnConfig& cfg, Rng& rng,
                   std::vector<double>* losses = nullptr);

struct GcnOutput {
  Eigen::MatrixXd logits;
  Eigen::MatrixXd embeddings;  // first-layer pre-activations
  std::vector<int> predictions;
};

/// Inference with a precomputed normalized adjacency.
GcnOutput gcn_infer(const GcnModel& m, const SparseMatrix& normalized, const Eigen::MatrixXd& features);
GcnOutput gcn_infer(const GcnModel& m, const Graph& g);

}  // namespace hydro::gnn

// SPDX-License-Identifier: Apache-2.0
//
// Planted-partition graphs with bag-of-words features, used where a real
// citation dataset would otherwise be needed.
#pragma once

#include <cstdint>

#include "hydro/graph.hpp"

namespace hydro::testing {

struct CsbmOptions {
  int n = 600;
  int classes = 4;
  int dim = 64;
  double avg_degree = 4.0;
  double homophily = 0.8;   // fraction of edges inside a class
  double word_prob = 0.05;  // background word probability
  double topic_prob = 0.25; // probability of a class topic word
  int train_per_class = 20;
  int val = 100;
  int test = 200;
  std::uint64_t seed = 1;
};

/// Labels round-robin over classes; each class owns dim / classes topic
/// words. Train nodes are the first `train_per_class` of each class in a
/// shuffled order, then `val` and `test` nodes follow.
Graph make_csbm(const CsbmOptions& opt);

/// Small fixed graphs.
Eigen::MatrixXd complete_graph(int n);
Eigen::MatrixXd path_graph(int n);
Eigen::MatrixXd cycle_graph(int n);
/// Erdos-Renyi with integer weights in [1, max_weight].
Eigen::MatrixXd random_graph(int n, double p, int max_weight, Rng& rng);

/// Wraps a dense adjacency with random features, labels and splits.
Graph graph_from_dense(const Eigen::MatrixXd& adjacency, int classes, int dim, Rng& rng);

}  // namespace hydro::testing

// SPDX-License-Identifier: Apache-2.0
//
// Downstream evaluation of condensed graphs.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hydro/gnn.hpp"
#include "hydro/graph.hpp"

namespace hydro::eval {

enum class Task { NodeClassification, LinkPrediction };

std::string task_name(Task t);

struct EvalResult {
  Task task = Task::NodeClassification;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over the runs
  std::vector<double> accuracies;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;

  int runs() const { return static_cast<int>(accuracies.size()); }
};

struct EvalOptions {
  int runs = 10;
  std::uint64_t seed = 0;  // run r uses seed + r
  int jobs = 1;            // runs evaluated concurrently; results are identical for any value
  gnn::GcnConfig gcn;
};

/// Trains a GCN on `cg` per run and scores it on the test split of `g`.
/// Throws ContractError when a class has no training node in `cg` or the
/// feature widths differ.
EvalResult eval_nc(const CondensedGraph& cg, const Graph& g, const EvalOptions& opt = {});

/// Held-out positive edges and as many sampled non-edges, plus the graph
/// with the positives removed.
struct LinkSplit {
  std::vector<std::pair<int, int>> positives, negatives;
  SparseMatrix train_adjacency;
};

/// floor(0.1 m) held-out edges (ConfigError when that is zero). Negatives are
/// uniform pairs u != v rejected when they are edges of `g` or repeats.
LinkSplit split_links(const Graph& g, Rng& rng);

/// Accuracy at threshold 0.5 of sigmoid(<e_u, e_v>) on a split.
double link_accuracy(const Eigen::MatrixXd& embeddings, const LinkSplit& split);

/// Trains on `cg` with the classification loss and scores link prediction on
/// `g` using first-layer embeddings propagated over the training adjacency.
EvalResult eval_lp(const CondensedGraph& cg, const Graph& g, const EvalOptions& opt = {});

/// Induced subgraph on per-class uniformly drawn training nodes.
CondensedGraph random_condensed(const Graph& g, double ratio, Rng& rng);
EvalResult baseline_random(const Graph& g, double ratio, const EvalOptions& opt = {});

struct CommuteComparison {
  double score = 0.0;
  Eigen::MatrixXd condensed_capped;
  Eigen::MatrixXd original_capped;
};

/// Quantile-matched mean absolute difference of the capped, cap-normalized
/// upper-triangle commute times. Inputs are adjacency matrices.
double commute_score(const Eigen::MatrixXd& condensed_commute, const Eigen::MatrixXd& original_commute, double cap);
CommuteComparison compare_commute(const Eigen::MatrixXd& condensed_adjacency,
                                  const Eigen::MatrixXd& original_adjacency, double cap = 20000.0);

void write_results(const std::vector<EvalResult>& results, const std::filesystem::path& path);

}  // namespace hydro::eval

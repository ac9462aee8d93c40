// SPDX-License-Identifier: Apache-2.0
//
// Graph data model, dataset directory format and the walk matrices built on
// top of adjacency.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hydro {

using Rng = std::mt19937_64;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Splits {
  std::vector<int> train, val, test;
};

/// An original dataset. Adjacency is symmetric, nonnegative, zero-diagonal.
struct Graph {
  SparseMatrix adjacency;
  Eigen::MatrixXd features;
  std::vector<int> labels;
  Splits splits;
  int num_classes = 0;

  int n() const { return static_cast<int>(labels.size()); }
  int dim() const { return static_cast<int>(features.cols()); }
  /// Undirected edge count (each pair once).
  std::int64_t num_edges() const;
};

/// The synthetic graph. Adjacency is dense with entries in [0, 1].
struct CondensedGraph {
  Eigen::MatrixXd adjacency;
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int num_classes = 0;
  /// Nodes whose labels train downstream models; every node when unset.
  std::optional<std::vector<int>> train_nodes;
  std::string config_hash;
  std::uint64_t seed = 0;

  int n() const { return static_cast<int>(labels.size()); }
  int dim() const { return static_cast<int>(features.cols()); }
  std::vector<int> training_nodes() const;
};

/// Checks shapes, label range, split disjointness and adjacency symmetry.
/// Throws IngestionError.
void validate(const Graph& g);

/// Reads edges.csv, features.csv, labels.csv, splits.json (and meta.json when
/// present, whose counts must agree).
Graph load_dataset(const std::filesystem::path& dir);
void save_dataset(const Graph& g, const std::filesystem::path& dir);

/// Builds a symmetric sparse adjacency from an edge list. Self-loops are
/// dropped and repeated pairs merged (weights of repeats are not summed).
SparseMatrix adjacency_from_edges(int n, const std::vector<std::pair<int, int>>& edges,
                                  const std::vector<double>& weights = {});

Eigen::MatrixXd dense_adjacency(const Graph& g);

/// Induced subgraph on `size` nodes drawn uniformly without replacement.
/// `nodes_out`, when given, receives the chosen original ids in subgraph order.
Graph sample_subgraph(const Graph& g, int size, Rng& rng, std::vector<int>* nodes_out = nullptr);
Graph induced_subgraph(const Graph& g, const std::vector<int>& nodes);

/// 1/2 (I + D^-1 A); a zero-degree row becomes e_i.
Eigen::MatrixXd lazy_walk_synthetic(const Eigen::MatrixXd& a);
/// The symmetric matrix 1/2 (I + D^-1/2 A D^-1/2) with the same spectrum as
/// lazy_walk_synthetic(a).
Eigen::MatrixXd lazy_walk_synthetic_sym(const Eigen::MatrixXd& a);
/// 1/2 (I + D~^-1/2 (A + I) D~^-1/2).
Eigen::MatrixXd lazy_walk_sampled(const Eigen::MatrixXd& a);

/// Largest-remainder apportionment of `total` over `counts`, at least one
/// slot for every nonzero count. Throws ContractError when total is smaller
/// than the number of nonzero classes.
std::vector<int> apportion(const std::vector<int>& counts, int total);

/// Node budget floor(ratio * n).
int condensed_size(int n, double ratio);

/// Per-class training-node counts.
std::vector<int> train_class_counts(const Graph& g);

/// n' = floor(ratio * n) nodes apportioned over training classes; features
/// copied from random training nodes of each class, adjacency empty.
CondensedGraph init_condensed(const Graph& g, double ratio, Rng& rng);

/// The original graph viewed as a condensed graph that trains on its train split.
CondensedGraph as_condensed(const Graph& g);

void save_condensed(const CondensedGraph& cg, const std::filesystem::path& path);
CondensedGraph load_condensed(const std::filesystem::path& path);

// Plain numeric CSV, one row per line, 17 significant digits.
void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

/// Formats a double with 17 significant digits; non-finite values as inf/-inf/nan.
std::string format_double(double v);

}  // namespace hydro

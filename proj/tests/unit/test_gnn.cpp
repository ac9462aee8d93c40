// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "csbm.hpp"
#include "hydro/errors.hpp"
#include "hydro/gnn.hpp"

using namespace hydro;

TEST_CASE("normalized adjacency of P3") {
  const Eigen::MatrixXd s = gnn::normalized_adjacency(testing::path_graph(3));
  // Self-looped degrees 2, 3, 2.
  CHECK(s(0, 0) == doctest::Approx(0.5));
  CHECK(s(1, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(s(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)));
  CHECK(s(0, 2) == 0.0);
  const SparseMatrix sp = gnn::normalized_adjacency(SparseMatrix(testing::path_graph(3).sparseView()));
  CHECK((Eigen::MatrixXd(sp) - s).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("propagation, one-hot and argmax helpers") {
  const Eigen::MatrixXd s = gnn::normalized_adjacency(testing::path_graph(3));
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 2);
  CHECK(gnn::propagate(s, x, 2).isApprox(s * s * x));
  CHECK(gnn::propagate(s, x, 0) == x);
  const Eigen::MatrixXd y = gnn::one_hot({2, 0}, 3);
  CHECK(y(0, 2) == 1.0);
  CHECK(y.sum() == 2.0);
  Eigen::MatrixXd m(2, 3);
  m << 1, 3, 3, -1, -2, -3;
  CHECK(gnn::argmax_rows(m) == std::vector<int>{1, 0});
  CHECK(gnn::softmax_rows(m).rowwise().sum().isOnes(1e-15));
}

TEST_CASE("closed-form SGC gradient on a mask") {
  Rng rng(3);
  const Eigen::MatrixXd p = Eigen::MatrixXd::Random(5, 3);
  const Eigen::MatrixXd theta = Eigen::MatrixXd::Random(3, 2);
  const std::vector<int> labels = {0, 1, 1, 0, 1};
  const std::vector<int> mask = {1, 3};
  // Gradient only sees the masked rows.
  Eigen::MatrixXd pm(2, 3);
  pm << p.row(1), p.row(3);
  const Eigen::MatrixXd ym = gnn::one_hot({1, 0}, 2);
  const Eigen::MatrixXd expect = pm.transpose() * (gnn::softmax_rows(pm * theta) - ym) / 2.0;
  CHECK(gnn::sgc_grad(p, theta, labels, mask, 2).isApprox(expect, 1e-14));
}

TEST_CASE("GCN training is deterministic and learns a separable graph") {
  testing::CsbmOptions opt;
  opt.n = 300;
  opt.classes = 3;
  opt.dim = 30;
  opt.topic_prob = 0.5;
  const Graph g = testing::make_csbm(opt);
  const CondensedGraph cg = as_condensed(g);
  gnn::GcnConfig cfg;
  cfg.hidden = 32;
  cfg.epochs = 100;
  Rng r1(7), r2(7);
  std::vector<double> losses;
  const auto m1 = gnn::gcn_train(cg, cfg, r1, &losses);
  const auto m2 = gnn::gcn_train(cg, cfg, r2);
  CHECK(m1.w1 == m2.w1);
  CHECK(m1.w2 == m2.w2);
  REQUIRE(losses.size() == 100);
  CHECK(losses.back() < 0.5 * losses.front());
  const auto out = gnn::gcn_infer(m1, g);
  int correct = 0;
  for (int i : g.splits.test) correct += out.predictions[static_cast<std::size_t>(i)] == g.labels[static_cast<std::size_t>(i)];
  CHECK(correct > 0.8 * static_cast<double>(g.splits.test.size()));
  CHECK(out.embeddings.cols() == cfg.hidden);
}

TEST_CASE("GCN with zero learning rate keeps its initial loss") {
  Rng rng(1);
  const Graph g = testing::graph_from_dense(testing::cycle_graph(8), 2, 4, rng);
  gnn::GcnConfig cfg;
  cfg.hidden = 8;
  cfg.epochs = 5;
  cfg.lr = 0.0;
  cfg.dropout = 0.0;
  std::vector<double> losses;
  gnn::gcn_train(as_condensed(g), cfg, rng, &losses);
  for (double l : losses) CHECK(l == doctest::Approx(losses.front()).epsilon(1e-14));
}

TEST_CASE("GCN rejects invalid settings") {
  Rng rng(1);
  const Graph g = testing::graph_from_dense(testing::cycle_graph(8), 2, 4, rng);
  gnn::GcnConfig cfg;
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(gnn::gcn_train(as_condensed(g), cfg, rng), ConfigError);
  CondensedGraph empty = as_condensed(g);
  empty.train_nodes = std::vector<int>{};
  CHECK_THROWS_AS(gnn::gcn_train(empty, gnn::GcnConfig{}, rng), ContractError);
}

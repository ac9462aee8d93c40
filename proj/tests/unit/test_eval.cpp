// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "csbm.hpp"
#include "hydro/errors.hpp"
#include "hydro/eval.hpp"
#include "hydro/spectral.hpp"

using namespace hydro;

namespace {

Graph eval_graph() {
  testing::CsbmOptions opt;
  opt.n = 200;
  opt.classes = 3;
  opt.dim = 16;
  opt.topic_prob = 0.4;
  opt.val = 40;
  opt.test = 80;
  return testing::make_csbm(opt);
}

eval::EvalOptions quick(int runs, int jobs) {
  eval::EvalOptions o;
  o.runs = runs;
  o.jobs = jobs;
  o.seed = 11;
  o.gcn.hidden = 16;
  o.gcn.epochs = 40;
  return o;
}

}  // namespace

TEST_CASE("commute score of P3 against K3") {
  // P3 upper triangle {4, 4, 8}; K3 is {4, 4, 4}. With cap 10: |0.8 - 0.4| / 3.
  const Eigen::MatrixXd p3 = spectral::commute_matrix(testing::path_graph(3));
  const Eigen::MatrixXd k3 = spectral::commute_matrix(testing::complete_graph(3));
  CHECK(eval::commute_score(p3, k3, 10.0) == doctest::Approx(0.4 / 3.0));
  CHECK(eval::commute_score(p3, p3, 10.0) == 0.0);
  const auto cmp = eval::compare_commute(testing::path_graph(3), testing::complete_graph(3), 10.0);
  CHECK(cmp.score == doctest::Approx(0.4 / 3.0));
}

TEST_CASE("commute score resamples the larger graph by quantile") {
  Eigen::MatrixXd small(3, 3), big(4, 4);
  small << 0, 1, 3, 1, 0, 3, 3, 3, 0;  // upper triangle {1, 3, 3}
  big << 0, 1, 2, 3, 1, 0, 4, 5, 2, 4, 0, 6, 3, 5, 6, 0;
  // m = 3: indices floor((k + .5) * 2) = 1, 3, 5 -> {2, 4, 6}.
  CHECK(eval::commute_score(small, big, 10.0) == doctest::Approx((0.1 + 0.1 + 0.3) / 3.0));
  // Unreachable pairs saturate at the cap.
  Eigen::MatrixXd inf = Eigen::MatrixXd::Constant(2, 2, std::numeric_limits<double>::infinity());
  CHECK(eval::commute_score(inf, inf, 10.0) == 0.0);
}

TEST_CASE("link split holds out a tenth of the edges with balanced negatives") {
  const Graph g = eval_graph();
  Rng rng(2);
  const auto split = eval::split_links(g, rng);
  CHECK(static_cast<std::int64_t>(split.positives.size()) == g.num_edges() / 10);
  CHECK(split.negatives.size() == split.positives.size());
  for (auto [u, v] : split.positives) CHECK(split.train_adjacency.coeff(u, v) == 0.0);
  for (auto [u, v] : split.negatives) {
    CHECK(u != v);
    CHECK(g.adjacency.coeff(u, v) == 0.0);
  }
  const std::int64_t kept = split.train_adjacency.nonZeros() / 2;
  CHECK(kept == g.num_edges() - static_cast<std::int64_t>(split.positives.size()));
}

TEST_CASE("link prediction needs enough edges") {
  Rng rng(1);
  const Graph g = testing::graph_from_dense(testing::path_graph(3), 1, 2, rng);
  CHECK_THROWS_AS(eval::split_links(g, rng), ConfigError);
}

TEST_CASE("link accuracy thresholds the sigmoid of the inner product") {
  Eigen::MatrixXd e(3, 1);
  e << 1, 1, -1;
  eval::LinkSplit s;
  s.positives = {{0, 1}};   // score > 0.5, correct
  s.negatives = {{0, 2}};   // score < 0.5, correct
  CHECK(eval::link_accuracy(e, s) == 1.0);
  s.negatives = {{0, 1}};
  CHECK(eval::link_accuracy(e, s) == 0.5);
}

TEST_CASE("evaluation results do not depend on the job count") {
  const Graph g = eval_graph();
  const CondensedGraph cg = as_condensed(g);
  const auto a = eval::eval_nc(cg, g, quick(3, 1));
  const auto b = eval::eval_nc(cg, g, quick(3, 3));
  CHECK(a.accuracies == b.accuracies);
  CHECK(a.runs() == 3);
  CHECK(a.seeds == std::vector<std::uint64_t>{11, 12, 13});
  const auto lp1 = eval::eval_lp(cg, g, quick(2, 1));
  const auto lp2 = eval::eval_lp(cg, g, quick(2, 2));
  CHECK(lp1.accuracies == lp2.accuracies);
}

TEST_CASE("mean and population standard deviation") {
  const Graph g = eval_graph();
  const auto r = eval::eval_nc(as_condensed(g), g, quick(4, 1));
  double mean = 0.0;
  for (double a : r.accuracies) mean += a / 4.0;
  double var = 0.0;
  for (double a : r.accuracies) var += (a - mean) * (a - mean) / 4.0;
  CHECK(r.mean == doctest::Approx(mean));
  CHECK(r.std == doctest::Approx(std::sqrt(var)));
}

TEST_CASE("incompatible condensed graphs are rejected") {
  const Graph g = eval_graph();
  CondensedGraph cg = as_condensed(g);
  cg.features = Eigen::MatrixXd::Zero(cg.n(), 3);
  CHECK_THROWS_AS(eval::eval_nc(cg, g, quick(1, 1)), ContractError);
  cg = as_condensed(g);
  std::vector<int> no_class_two;
  for (int i : *cg.train_nodes) {
    if (cg.labels[static_cast<std::size_t>(i)] != 2) no_class_two.push_back(i);
  }
  cg.train_nodes = no_class_two;
  CHECK_THROWS_AS(eval::eval_nc(cg, g, quick(1, 1)), ContractError);
}

TEST_CASE("random baseline draws per-class training nodes") {
  const Graph g = eval_graph();
  Rng rng(3);
  const CondensedGraph cg = eval::random_condensed(g, 0.06, rng);
  CHECK(cg.n() == 12);
  for (int c = 0; c < 3; ++c) CHECK(std::count(cg.labels.begin(), cg.labels.end(), c) == 4);
  Rng rng2(3);
  CHECK(eval::random_condensed(g, 1.0, rng2).n() == g.n());
}

TEST_CASE("results file layout") {
  eval::EvalResult r;
  r.accuracies = {0.5, 0.7};
  r.seeds = {0, 1};
  r.mean = 0.6;
  r.config_hash = "h";
  const auto path = std::filesystem::temp_directory_path() / "hydro_results_test.json";
  eval::write_results({r}, path);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  CHECK(j["nc"]["runs"] == 2);
  CHECK(j["nc"]["mean"] == 0.6);
  CHECK(j["config_hash"] == "h");
  std::filesystem::remove(path);
}

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "fd.hpp"
#include "hydro/adgrad.hpp"
#include "hydro/errors.hpp"
#include "hydro/hypernet.hpp"
#include "suites.hpp"

using namespace hydro;
using ad::Var;

TEST_CASE("gradient suite") {
  const auto rep = testing::gradient_suite(9);
  CHECK(rep.cases.size() > 40);
  for (const auto& c : rep.cases) {
    INFO(c.name << " rel err " << c.error);
    CHECK(c.ok());
  }
}

TEST_CASE("gradients accumulate over shared subexpressions") {
  ad::Tape t;
  Eigen::MatrixXd xv(1, 1);
  xv << 3.0;
  const Var x = t.leaf(xv);
  const Var y = ad::hadamard(x, x);           // x^2
  const Var z = ad::add(y, ad::scale(x, 2));  // x^2 + 2x
  CHECK(t.backward(ad::sum(z))[x](0, 0) == doctest::Approx(8.0));
}

TEST_CASE("constants carry no gradient") {
  ad::Tape t;
  const Var c = t.constant(Eigen::MatrixXd::Ones(2, 2));
  const Var x = t.leaf(Eigen::MatrixXd::Ones(2, 2));
  const auto g = t.backward(ad::sum(ad::hadamard(c, x)));
  CHECK(g[c].isZero());
  CHECK(g[x].isOnes());
}

TEST_CASE("shape mismatches are contract errors") {
  ad::Tape t;
  const Var a = t.leaf(Eigen::MatrixXd::Ones(2, 3));
  const Var b = t.leaf(Eigen::MatrixXd::Ones(2, 2));
  CHECK_THROWS_AS(ad::add(a, b), ContractError);
  CHECK_THROWS_AS(ad::matmul(b, a.tape()->leaf(Eigen::MatrixXd::Ones(3, 3))), ContractError);
  CHECK_THROWS_AS(ad::symmetrize(a), ContractError);
  CHECK_THROWS_AS(t.backward(a), ContractError);  // loss must be 1x1
}

TEST_CASE("mixing tapes is a contract error") {
  ad::Tape t1, t2;
  const Var a = t1.leaf(Eigen::MatrixXd::Ones(2, 2));
  const Var b = t2.leaf(Eigen::MatrixXd::Ones(2, 2));
  CHECK_THROWS_AS(ad::add(a, b), ContractError);
}

TEST_CASE("fused first layer equals the materialized edge batch") {
  Rng rng(4);
  for (double c : {0.01, 1.0}) {
    const ad::Ball ball(c);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 4) * (0.8 * ball.radius());
    const Eigen::MatrixXd w = Eigen::MatrixXd::Random(8, 5);
    ad::Tape t;
    const Var xv = t.leaf(x), wv = t.leaf(w);
    const Var fused = ad::lifted_pair_linear(xv, wv, ball);
    const Var plain =
        ad::matmul(ad::logmap0_rows(ad::expmap0_rows(ad::edge_embed(xv), ball), ball), wv);
    CHECK((fused.value() - plain.value()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("generator output is a symmetric zero-diagonal matrix in (0, 1)") {
  Rng rng(2);
  const hypernet::HyperNetConfig cfg{2, 16, 0.01, true};
  const auto p = hypernet::init_params(cfg, 5, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(7, 5);
  const Eigen::MatrixXd a = hypernet::generate(cfg, p, x);
  CHECK(a.rows() == 7);
  CHECK((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.diagonal().isZero());
  for (Eigen::Index i = 0; i < 7; ++i) {
    for (Eigen::Index j = 0; j < 7; ++j) {
      if (i != j) CHECK((a(i, j) > 0.0 && a(i, j) < 1.0));
    }
  }
  hypernet::HyperNetConfig unfused = cfg;
  unfused.fused_first_layer = false;
  CHECK((hypernet::generate(unfused, p, x) - a).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("generator rejects batches it cannot normalize or store") {
  Rng rng(2);
  const hypernet::HyperNetConfig cfg{2, 4, 0.01, true};
  const auto p = hypernet::init_params(cfg, 3, rng);
  CHECK_THROWS_AS(hypernet::generate(cfg, p, Eigen::MatrixXd::Random(hypernet::kMaxNodes + 1, 3)), ContractError);
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng(8);
  const hypernet::HyperNetConfig cfg{3, 6, 0.01, true};
  const auto p = hypernet::init_params(cfg, 4, rng);
  const auto path = std::filesystem::temp_directory_path() / "hydro_ckpt_test.json";
  hypernet::save_checkpoint(p, path);
  const auto q = hypernet::load_checkpoint(path);
  REQUIRE(q.layers() == 3);
  for (int l = 0; l < 3; ++l) {
    CHECK(q.weights[static_cast<std::size_t>(l)] == p.weights[static_cast<std::size_t>(l)]);
    CHECK(q.biases[static_cast<std::size_t>(l)] == p.biases[static_cast<std::size_t>(l)]);
  }
  std::filesystem::remove(path);
}

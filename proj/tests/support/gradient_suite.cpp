// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <random>

#include "fd.hpp"
#include "hydro/distill.hpp"
#include "hydro/gnn.hpp"
#include "hydro/hypernet.hpp"
#include "hydro/spectral.hpp"
#include "suites.hpp"

namespace hydro::testing {

namespace {

using ad::Var;
using M = Eigen::MatrixXd;
constexpr double kTol = 1e-4;

struct Gen {
  std::mt19937_64 rng;
  std::normal_distribution<double> normal{0.0, 1.0};
  std::uniform_real_distribution<double> unit{0.0, 1.0};

  M randn(Eigen::Index r, Eigen::Index c, double s = 1.0) {
    M m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = s * normal(rng);
    return m;
  }
  M uniform(Eigen::Index r, Eigen::Index c, double lo, double hi) {
    M m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = lo + (hi - lo) * unit(rng);
    return m;
  }
  // Entries bounded away from zero so kinks stay out of the stencil.
  M away_from_zero(Eigen::Index r, Eigen::Index c) {
    M m = uniform(r, c, 0.2, 1.5);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (unit(rng) < 0.5) m(i) = -m(i);
    }
    return m;
  }
};

}  // namespace

SuiteReport gradient_suite(unsigned seed) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep;
  Gen gen{std::mt19937_64(seed)};
  std::uint64_t probe_seed = 100;
  const auto run = [&](const std::string& name, const std::vector<M>& inputs, const LossBuilder& f) {
    rep.cases.push_back({name, check_gradient(f, inputs).rel_err, kTol});
  };
  // Reduce a matrix output with a fixed random weighting.
  const auto probed = [&](std::function<Var(const std::vector<Var>&)> op) {
    const std::uint64_t s = probe_seed++;
    return [op, s](ad::Tape&, const std::vector<Var>& v) { return probe(op(v), s); };
  };

  // Elementwise and linear algebra.
  run("add", {gen.randn(3, 4), gen.randn(3, 4)}, probed([](auto& v) { return ad::add(v[0], v[1]); }));
  run("sub", {gen.randn(3, 4), gen.randn(3, 4)}, probed([](auto& v) { return ad::sub(v[0], v[1]); }));
  run("scale", {gen.randn(3, 4)}, probed([](auto& v) { return ad::scale(v[0], -1.7); }));
  run("affine", {gen.randn(3, 4)}, probed([](auto& v) { return ad::affine(v[0], 0.3, 2.0); }));
  run("hadamard", {gen.randn(3, 4), gen.randn(3, 4)}, probed([](auto& v) { return ad::hadamard(v[0], v[1]); }));
  run("matmul", {gen.randn(3, 4), gen.randn(4, 2)}, probed([](auto& v) { return ad::matmul(v[0], v[1]); }));
  run("transpose", {gen.randn(3, 4)}, probed([](auto& v) { return ad::transpose(v[0]); }));
  run("sum", {gen.randn(3, 4)}, [](ad::Tape&, auto& v) { return ad::scale(ad::sum(v[0]), 1.3); });
  run("mean", {gen.randn(3, 4)}, [](ad::Tape&, auto& v) { return ad::scale(ad::mean(v[0]), 1.3); });
  run("sum_squares", {gen.randn(3, 4)}, [](ad::Tape&, auto& v) { return ad::sum_squares(v[0]); });
  run("abs", {gen.away_from_zero(3, 4)}, probed([](auto& v) { return ad::abs(v[0]); }));
  run("sigmoid", {gen.randn(3, 4, 2.0)}, probed([](auto& v) { return ad::sigmoid(v[0]); }));
  run("relu", {gen.away_from_zero(3, 4)}, probed([](auto& v) { return ad::relu(v[0]); }));
  run("tanh", {gen.randn(3, 4)}, probed([](auto& v) { return ad::tanh(v[0]); }));
  run("log", {gen.uniform(3, 4, 0.3, 3.0)}, probed([](auto& v) { return ad::log(v[0]); }));
  run("row_softmax", {gen.randn(3, 5)}, probed([](auto& v) { return ad::row_softmax(v[0]); }));
  run("symmetrize", {gen.randn(4, 4)}, probed([](auto& v) { return ad::symmetrize(v[0]); }));
  run("zero_diagonal", {gen.randn(4, 4)}, probed([](auto& v) { return ad::zero_diagonal(v[0]); }));
  run("degree_normalize", {gen.uniform(5, 5, 0.1, 1.0)},
      probed([](auto& v) { return ad::degree_normalize(v[0], false); }));
  run("degree_normalize self-loops", {gen.uniform(5, 5, 0.0, 1.0)},
      probed([](auto& v) { return ad::degree_normalize(v[0], true); }));
  run("lambda2", {gen.randn(6, 6)}, [](ad::Tape&, auto& v) { return ad::lambda2(ad::symmetrize(v[0])); });
  run("select_rows", {gen.randn(5, 3)}, probed([](auto& v) { return ad::select_rows(v[0], {4, 1, 1, 0}); }));
  run("column", {gen.randn(5, 3)}, probed([](auto& v) { return ad::column(v[0], 2); }));
  run("reshape_rowmajor", {gen.randn(4, 3)}, probed([](auto& v) { return ad::reshape_rowmajor(v[0], 2, 6); }));
  run("standardize_cols", {gen.randn(6, 3)}, probed([](auto& v) { return ad::standardize_cols(v[0], 1e-5); }));
  run("affine_cols", {gen.randn(5, 3), gen.randn(1, 3), gen.randn(1, 3)},
      probed([](auto& v) { return ad::affine_cols(v[0], v[1], v[2]); }));
  {
    const M ref = gen.randn(5, 3);
    run("column_cosine_distance", {gen.randn(5, 3)},
        [ref](ad::Tape&, auto& v) { return ad::column_cosine_distance(v[0], ref); });
  }
  run("edge_embed", {gen.randn(3, 2)}, probed([](auto& v) { return ad::edge_embed(v[0]); }));

  // Manifold maps, including rows that hit the boundary projection.
  for (double c : {0.01, 1.0}) {
    const ad::Ball ball(c);
    const std::string tag = c == 1.0 ? " c=1" : " c=0.01";
    const double r = ball.radius();
    run("expmap0_rows" + tag, {gen.randn(4, 3, 0.5 * r)}, probed([ball](auto& v) { return ad::expmap0_rows(v[0], ball); }));
    run("logmap0_rows" + tag, {gen.randn(4, 3, 0.3 * r)}, probed([ball](auto& v) { return ad::logmap0_rows(v[0], ball); }));
    M outside = gen.randn(4, 3, 0.3 * r);
    outside.row(1) *= 3.0 * r / outside.row(1).norm();
    run("project_rows" + tag, {outside}, probed([ball](auto& v) { return ad::project_rows(v[0], ball); }));
    run("mobius_add_rows" + tag, {gen.randn(4, 3, 0.3 * r), gen.randn(4, 3, 0.3 * r)},
        probed([ball](auto& v) { return ad::mobius_add_rows(v[0], v[1], ball); }));
    run("mobius_add_rows broadcast" + tag, {gen.randn(1, 3, 0.3 * r), gen.randn(4, 3, 0.3 * r)},
        probed([ball](auto& v) { return ad::mobius_add_rows(v[0], v[1], ball); }));
    run("expmap_rows" + tag, {gen.randn(4, 3, 0.3 * r), gen.randn(4, 3, 0.2 * r)},
        probed([ball](auto& v) { return ad::expmap_rows(v[0], v[1], ball); }));
    run("logmap_rows" + tag, {gen.randn(4, 3, 0.3 * r), gen.randn(4, 3, 0.3 * r)},
        probed([ball](auto& v) { return ad::logmap_rows(v[0], v[1], ball); }));
    // Large inputs push some pair norms past the boundary cap.
    run("lifted_pair_linear" + tag, {gen.randn(4, 3, 0.9 * r), gen.randn(6, 5)},
        probed([ball](auto& v) { return ad::lifted_pair_linear(v[0], v[1], ball); }));
    run("unfused first layer" + tag, {gen.randn(4, 3, 0.9 * r), gen.randn(6, 5)}, probed([ball](auto& v) {
          return ad::matmul(ad::logmap0_rows(ad::expmap0_rows(ad::edge_embed(v[0]), ball), ball), v[1]);
        }));
  }

  // Vector-Jacobian products on the ball that have no tape wrapper.
  for (double c : {0.05, 1.0}) {
    const ad::Ball ball(c);
    const std::string tag = c == 1.0 ? " c=1" : " c=0.05";
    const double r = ball.radius();
    const Eigen::VectorXd p1 = gen.randn(3, 1, 0.3 * r), p2 = gen.randn(3, 1, 0.3 * r);
    const auto [g1, g2] = ball.distance_sq_vjp(p1, p2, 1.0);
    Eigen::VectorXd n1(3), n2(3);
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(3);
      e(i) = h;
      n1(i) = (ball.distance_sq(p1 + e, p2) - ball.distance_sq(p1 - e, p2)) / (2 * h);
      n2(i) = (ball.distance_sq(p1, p2 + e) - ball.distance_sq(p1, p2 - e)) / (2 * h);
    }
    rep.cases.push_back({"distance_sq vjp" + tag,
                         std::max((g1 - n1).norm() / n1.norm(), (g2 - n2).norm() / n2.norm()), kTol});
    const Eigen::VectorXd w = gen.randn(4, 1);
    const Eigen::VectorXd gh = ball.to_hyperboloid_vjp(p1, w);
    Eigen::VectorXd nh(3);
    for (int i = 0; i < 3; ++i) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(3);
      e(i) = h;
      nh(i) = (w.dot(ball.to_hyperboloid(p1 + e)) - w.dot(ball.to_hyperboloid(p1 - e))) / (2 * h);
    }
    rep.cases.push_back({"to_hyperboloid vjp" + tag, (gh - nh).norm() / nh.norm(), kTol});
  }

  // Composed generator: 2 layers, d = 3, n' = 4.
  for (const bool fused : {true, false}) {
    const hypernet::HyperNetConfig cfg{2, 5, 0.5, fused};
    Rng rng(seed);
    hypernet::HyperNetParams p = hypernet::init_params(cfg, 3, rng);
    p.biases[0] = gen.randn(1, 5, 0.1);
    p.biases[1] = gen.randn(1, 1, 0.1);
    p.bn_scale[0] = gen.uniform(1, 5, 0.5, 1.5);
    p.bn_shift[0] = gen.randn(1, 5, 0.2);
    const std::vector<M> inputs = {gen.randn(4, 3),   p.weights[0],  p.weights[1], p.biases[0],
                                   p.biases[1],       p.bn_scale[0], p.bn_shift[0]};
    run(fused ? "hypernet (fused)" : "hypernet (unfused)", inputs, probed([cfg](auto& v) {
          hypernet::HyperNetVars vars;
          vars.weights = {v[1], v[2]};
          vars.biases = {v[3], v[4]};
          vars.bn_scale = {v[5]};
          vars.bn_shift = {v[6]};
          return hypernet::forward(cfg, vars, v[0]);
        }));
  }

  // SGC gradient with respect to the propagated features and to theta.
  {
    const M theta = gen.randn(4, 3);
    const M onehot = gnn::one_hot({0, 2, 1, 2, 0}, 3);
    run("sgc_grad wrt features", {gen.randn(5, 4)},
        probed([theta, onehot](auto& v) { return gnn::sgc_grad(v[0], theta, onehot); }));
    const M feats = gen.randn(5, 4);
    run("cross_entropy wrt theta", {theta}, [feats, onehot](ad::Tape& t, auto& v) {
      return gnn::cross_entropy(ad::matmul(t.constant(feats), v[0]), onehot);
    });
    // The closed form must equal the tape gradient of the cross-entropy.
    ad::Tape t;
    const Var th = t.leaf(theta);
    const Var loss = gnn::cross_entropy(ad::matmul(t.constant(feats), th), onehot);
    const M tape_grad = t.backward(loss)[th];
    const M closed = gnn::sgc_grad(feats, theta, {0, 2, 1, 2, 0}, {0, 1, 2, 3, 4}, 3);
    rep.cases.push_back({"sgc_grad closed form = tape", (closed - tape_grad).norm() / tape_grad.norm(), 1e-12});
  }

  // Spectral-gap loss on small weighted graphs (connected, distinct eigenvalues).
  for (const int n : {8, 10}) {
    M sampled = M::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) sampled(i, i + 1) = sampled(i + 1, i) = 1.0;
    sampled(0, n / 2) = sampled(n / 2, 0) = 1.0;
    run("gap_loss n=" + std::to_string(n), {gen.uniform(n, n, 0.05, 1.0)}, [sampled](ad::Tape&, auto& v) {
      return spectral::gap_loss(ad::symmetrize(v[0]), sampled);
    });
    run("normalized gap loss n=" + std::to_string(n), {gen.uniform(n, n, 0.05, 1.0)}, [sampled](ad::Tape&, auto& v) {
      return distill::normalized_gap_loss(spectral::synthetic_gap(ad::symmetrize(v[0])),
                                          spectral::sampled_gap(sampled), 0.05);
    });
  }

  // Remaining loss terms.
  {
    const std::vector<M> real = {gen.randn(4, 3), gen.randn(4, 3)};
    run("match_loss", {gen.randn(4, 3), gen.randn(4, 3)}, [real](ad::Tape&, auto& v) {
      return distill::match_loss(std::vector<Var>{v[0], v[1]}, real);
    });
    const ad::Ball ball(0.5);
    run("feature_regularizer", {gen.randn(5, 3, 0.4)},
        [ball](ad::Tape&, auto& v) { return distill::feature_regularizer(v[0], ball); });
    run("total_loss", {gen.uniform(1, 1, 0.5, 1.0), gen.uniform(1, 1, 0.5, 1.0), gen.uniform(1, 1, 0.5, 1.0)},
        [](ad::Tape&, auto& v) { return distill::total_loss(v[0], v[1], v[2], 0.1); });
  }

  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace hydro::testing

// SPDX-License-Identifier: Apache-2.0
#include "hydro/distill.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>

#include "hydro/gnn.hpp"
#include "hydro/spectral.hpp"

namespace hydro::distill {

void DistillConfig::validate() const {
  const auto fail = [](const char* field, const std::string& why) {
    throw ConfigError(fmt::format("{}: {}", field, why));
  };
  if (!(ratio > 0.0 && ratio <= 1.0)) fail("ratio", fmt::format("{} is outside (0, 1]", ratio));
  if (epochs < 1) fail("epochs", "must be at least 1");
  if (outer < 1) fail("outer", "must be at least 1");
  if (inner < 1) fail("inner", "must be at least 1");
  if (!(lr_feat >= 0.0)) fail("lr_feat", "must be nonnegative");
  if (!(lr_struct >= 0.0)) fail("lr_struct", "must be nonnegative");
  if (!(lr_model >= 0.0)) fail("lr_model", "must be nonnegative");
  if (!(beta >= 0.0)) fail("beta", "must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must lie in [0, 1)");
  if (!(curvature > 0.0) || !std::isfinite(curvature)) fail("curvature", "must be positive");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be nonnegative");
  if (!(gap_weight >= 0.0)) fail("gap_weight", "must be nonnegative");
  if (!(gap_floor > 0.0)) fail("gap_floor", "must be positive");
  if (sample_size < 2) fail("sample_size", "must be at least 2");
  if (sgc_hops < 0) fail("sgc_hops", "must be nonnegative");
  if (hidden < 1) fail("hidden", "must be positive");
  if (layers < 1) fail("layers", "must be at least 1");
  if (probe_every < 0) fail("probe_every", "must be nonnegative");
  if (probe_epochs < 1) fail("probe_epochs", "must be positive");
}

Eigen::MatrixXd riemannian_step(const Eigen::MatrixXd& points, const Eigen::MatrixXd& euclid_grad,
                                RiemannianOptState& state, const ad::Ball& ball, int epoch) {
  if (points.rows() != euclid_grad.rows() || points.cols() != euclid_grad.cols()) {
    throw ContractError("riemannian_step: gradient shape differs from parameter shape");
  }
  if (!euclid_grad.allFinite()) throw TrainingError("riemannian_step: non-finite gradient", epoch);
  if (state.buffer.size() == 0) state.buffer = Eigen::MatrixXd::Zero(points.rows(), points.cols());
  const double c = ball.curvature();
  Eigen::MatrixXd out(points.rows(), points.cols());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Eigen::VectorXd p = points.row(i).transpose();
    Eigen::VectorXd g = euclid_grad.row(i).transpose();
    if (state.weight_decay != 0.0) g += state.weight_decay * ball.logmap0(p);
    const double conformal = 1.0 - c * p.squaredNorm();
    const Eigen::VectorXd riem = (conformal * conformal / 4.0) * g;
    const Eigen::VectorXd m = state.momentum * state.buffer.row(i).transpose() + riem;
    const Eigen::VectorXd next = ball.expmap(p, -state.lr * m);
    state.buffer.row(i) = ball.parallel_transport(p, next, m).transpose();
    if (next.squaredNorm() > ball.max_norm_sq() * (1.0 + 1e-12)) {
      throw Error("riemannian_step: parameter left the ball");
    }
    out.row(i) = next.transpose();
  }
  return out;
}

double match_loss(const std::vector<Eigen::MatrixXd>& syn, const std::vector<Eigen::MatrixXd>& real) {
  if (syn.size() != real.size()) throw ContractError("match_loss: layer counts differ");
  double total = 0.0;
  for (std::size_t l = 0; l < syn.size(); ++l) {
    if (syn[l].rows() != real[l].rows() || syn[l].cols() != real[l].cols()) {
      throw ContractError("match_loss: gradient shapes differ");
    }
    for (Eigen::Index k = 0; k < syn[l].cols(); ++k) {
      const double na = syn[l].col(k).norm(), nb = real[l].col(k).norm();
      if (na == 0.0 || nb == 0.0) continue;
      total += 1.0 - syn[l].col(k).dot(real[l].col(k)) / (na * nb);
    }
  }
  return total;
}

ad::Var match_loss(const std::vector<ad::Var>& syn, const std::vector<Eigen::MatrixXd>& real) {
  if (syn.empty()) throw ContractError("match_loss: no gradients");
  if (syn.size() != real.size()) throw ContractError("match_loss: layer counts differ");
  ad::Var total = ad::column_cosine_distance(syn[0], real[0]);
  for (std::size_t l = 1; l < syn.size(); ++l) total = ad::add(total, ad::column_cosine_distance(syn[l], real[l]));
  return total;
}

ad::Var normalized_gap_loss(const ad::Var& gap_syn, double gap_sub, double floor) {
  ad::Tape& tape = *gap_syn.tape();
  const ad::Var diff = ad::abs(ad::sub(gap_syn, tape.constant(Eigen::MatrixXd::Constant(1, 1, gap_sub))));
  return ad::scale(diff, 1.0 / std::max(gap_sub, floor));
}

ad::Var feature_regularizer(const ad::Var& points, const ad::Ball& ball) {
  return ad::scale(ad::sum_squares(ad::logmap0_rows(points, ball)), 1.0 / static_cast<double>(points.rows()));
}

double total_loss(double l_gm, double l_rw_norm, double l_reg, double beta) {
  return l_gm + l_rw_norm + beta * l_reg;
}

ad::Var total_loss(const ad::Var& l_gm, const ad::Var& l_rw_norm, const ad::Var& l_reg, double beta) {
  return ad::add(ad::add(l_gm, l_rw_norm), ad::scale(l_reg, beta));
}

std::string to_json_line(const EpochRecord& r) {
  return fmt::format(
      "{{\"epoch\":{},\"L_gm\":{},\"L_rw_norm\":{},\"L_reg\":{},\"L_total\":{},\"g_syn\":{},\"g_sub\":{},"
      "\"probe_val_acc\":{}}}",
      r.epoch, format_double(r.l_gm), format_double(r.l_rw_norm), format_double(r.l_reg), format_double(r.l_total),
      format_double(r.g_syn), format_double(r.g_sub), r.probe_val_acc ? format_double(*r.probe_val_acc) : "null");
}

namespace {

struct Adam {
  Eigen::MatrixXd m, v;
  int t = 0;
  void step(Eigen::MatrixXd& p, const Eigen::MatrixXd& g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (m.size() == 0) {
      m = Eigen::MatrixXd::Zero(p.rows(), p.cols());
      v = m;
    }
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseProduct(g);
    const double c1 = 1 - std::pow(b1, t), c2 = 1 - std::pow(b2, t);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

Eigen::MatrixXd rows_map(const Eigen::MatrixXd& x, const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = f(x.row(i).transpose()).transpose();
  return out;
}

Eigen::MatrixXd init_theta(Eigen::Index d, Eigen::Index c, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> unif(-bound, bound);
  Eigen::MatrixXd theta(d, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) theta(i, j) = unif(rng);
  }
  return theta;
}

struct Snapshot {
  Eigen::MatrixXd points;
  hypernet::HyperNetParams params;
};

}  // namespace

DistillResult distill(const Graph& g, const DistillConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (g.splits.train.empty()) throw ContractError("distill: dataset has no training nodes");
  Rng rng(cfg.seed);
  const ad::Ball ball(cfg.curvature);
  const hypernet::HyperNetConfig hcfg{cfg.layers, cfg.hidden, cfg.curvature, true};
  const int num_classes = g.num_classes;
  const int sample_size = std::min(cfg.sample_size, g.n());

  const CondensedGraph init = init_condensed(g, cfg.ratio, rng);
  if (init.n() > hypernet::kMaxNodes) {
    throw ConfigError(fmt::format("ratio: {} condensed nodes exceeds the generator limit of {}", init.n(),
                                  hypernet::kMaxNodes));
  }
  Eigen::MatrixXd points = rows_map(init.features, [&](const Eigen::VectorXd& v) { return ball.project(ball.expmap0(v)); });
  hypernet::HyperNetParams params = hypernet::init_params(hcfg, g.dim(), rng);

  // Real-side gradients use the full graph's propagated features.
  const SparseMatrix s_full = gnn::normalized_adjacency(g.adjacency);
  const Eigen::MatrixXd p_real = gnn::propagate(s_full, g.features, cfg.sgc_hops);
  std::vector<std::vector<int>> real_rows(static_cast<std::size_t>(num_classes));
  for (int i : g.splits.train) real_rows[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(i)])].push_back(i);
  std::vector<std::vector<int>> syn_rows(static_cast<std::size_t>(num_classes));
  for (int i = 0; i < init.n(); ++i) syn_rows[static_cast<std::size_t>(init.labels[static_cast<std::size_t>(i)])].push_back(i);
  std::vector<int> active;
  std::vector<Eigen::MatrixXd> real_feat, real_onehot, syn_onehot;
  for (int c = 0; c < num_classes; ++c) {
    const auto& rr = real_rows[static_cast<std::size_t>(c)];
    const auto& sr = syn_rows[static_cast<std::size_t>(c)];
    if (rr.empty() || sr.empty()) continue;
    active.push_back(c);
    Eigen::MatrixXd pf(static_cast<Eigen::Index>(rr.size()), p_real.cols());
    for (std::size_t k = 0; k < rr.size(); ++k) pf.row(static_cast<Eigen::Index>(k)) = p_real.row(rr[k]);
    real_feat.push_back(std::move(pf));
    real_onehot.push_back(gnn::one_hot(std::vector<int>(rr.size(), c), num_classes));
    syn_onehot.push_back(gnn::one_hot(std::vector<int>(sr.size(), c), num_classes));
  }
  const Eigen::MatrixXd syn_all_onehot = gnn::one_hot(init.labels, num_classes);

  RiemannianOptState feat_state{cfg.lr_feat, cfg.momentum, cfg.weight_decay, {}};
  std::vector<RiemannianOptState> bias_state(params.biases.size(),
                                             RiemannianOptState{cfg.lr_struct, cfg.momentum, cfg.weight_decay, {}});
  std::vector<Adam> w_opt(params.weights.size()), scale_opt(params.bn_scale.size()), shift_opt(params.bn_shift.size());

  const auto materialize = [&](const Snapshot& s) {
    CondensedGraph cg;
    cg.features = rows_map(s.points, [&](const Eigen::VectorXd& v) { return ball.logmap0(v); });
    cg.adjacency = hypernet::generate(hcfg, s.params, cg.features);
    cg.labels = init.labels;
    cg.num_classes = num_classes;
    cg.seed = cfg.seed;
    return cg;
  };

  DistillResult result;
  Snapshot last_good{points, params};
  std::optional<Snapshot> best;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const Graph sub = sample_subgraph(g, sample_size, rng);
    const double g_sub = spectral::sampled_gap(dense_adjacency(sub));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.g_sub = g_sub;
    int steps = 0;
    try {
      for (int o = 0; o < cfg.outer; ++o) {
        Eigen::MatrixXd theta = init_theta(g.dim(), num_classes, rng);
        Adam theta_opt;
        for (int it = 0; it < cfg.inner; ++it) {
          ad::Tape tape;
          const ad::Var xb = tape.leaf(points);
          const hypernet::HyperNetVars vars = hypernet::bind(tape, params);
          const ad::Var x = ad::logmap0_rows(xb, ball);
          const ad::Var adj = hypernet::forward(hcfg, vars, x);

          ad::Var prop = x;
          const ad::Var s_syn = ad::degree_normalize(adj, /*add_self_loops=*/true);
          for (int k = 0; k < cfg.sgc_hops; ++k) prop = ad::matmul(s_syn, prop);

          std::vector<ad::Var> g_syn_list;
          std::vector<Eigen::MatrixXd> g_real_list;
          for (std::size_t a = 0; a < active.size(); ++a) {
            const auto c = static_cast<std::size_t>(active[a]);
            g_syn_list.push_back(gnn::sgc_grad(ad::select_rows(prop, syn_rows[c]), theta, syn_onehot[a]));
            const Eigen::MatrixXd pf = real_feat[a];
            const Eigen::MatrixXd resid = gnn::softmax_rows(pf * theta) - real_onehot[a];
            g_real_list.push_back(pf.transpose() * resid / static_cast<double>(pf.rows()));
          }
          const ad::Var l_gm = match_loss(g_syn_list, g_real_list);
          const ad::Var gap = spectral::synthetic_gap(adj);
          const ad::Var l_rw = ad::scale(normalized_gap_loss(gap, g_sub, cfg.gap_floor), cfg.gap_weight);
          const ad::Var l_reg = feature_regularizer(xb, ball);
          const ad::Var loss = total_loss(l_gm, l_rw, l_reg, cfg.beta);
          if (!std::isfinite(loss.scalar())) throw TrainingError("distill: loss is not finite", epoch);

          const ad::Gradients grads = tape.backward(loss);
          points = riemannian_step(points, grads[xb], feat_state, ball, epoch);
          for (std::size_t l = 0; l < params.weights.size(); ++l) {
            const Eigen::MatrixXd gw = grads[vars.weights[l]];
            if (!gw.allFinite()) throw TrainingError("distill: non-finite weight gradient", epoch);
            w_opt[l].step(params.weights[l], gw, cfg.lr_struct);
            params.biases[l] = riemannian_step(params.biases[l], grads[vars.biases[l]], bias_state[l], ball, epoch);
          }
          for (std::size_t l = 0; l < params.bn_scale.size(); ++l) {
            scale_opt[l].step(params.bn_scale[l], grads[vars.bn_scale[l]], cfg.lr_struct);
            shift_opt[l].step(params.bn_shift[l], grads[vars.bn_shift[l]], cfg.lr_struct);
          }

          rec.l_gm += l_gm.scalar();
          rec.l_rw_norm += l_rw.scalar();
          rec.l_reg += l_reg.scalar();
          rec.l_total += loss.scalar();
          rec.g_syn += gap.scalar();
          ++steps;

          if (it + 1 < cfg.inner) {
            const Eigen::MatrixXd& pv = prop.value();
            const Eigen::MatrixXd gt = pv.transpose() * (gnn::softmax_rows(pv * theta) - syn_all_onehot) /
                                       static_cast<double>(pv.rows());
            theta_opt.step(theta, gt, cfg.lr_model);
          }
        }
      }
    } catch (const TrainingError& e) {
      spdlog::error("epoch {}: {}", epoch, e.what());
      throw DivergenceError(e.what(), epoch, std::make_shared<const CondensedGraph>(materialize(last_good)));
    }
    rec.l_gm /= steps;
    rec.l_rw_norm /= steps;
    rec.l_reg /= steps;
    rec.l_total /= steps;
    rec.g_syn /= steps;
    last_good = Snapshot{points, params};

    const bool probe = cfg.probe_every > 0 && !g.splits.val.empty() &&
                       (epoch % cfg.probe_every == 0 || epoch == cfg.epochs);
    if (probe) {
      const CondensedGraph cg = materialize(last_good);
      gnn::GcnConfig gcfg;
      gcfg.epochs = cfg.probe_epochs;
      Rng probe_rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch)));
      const gnn::GcnModel model = gnn::gcn_train(cg, gcfg, probe_rng);
      const std::vector<int> pred = gnn::gcn_infer(model, s_full, g.features).predictions;
      int correct = 0;
      for (int i : g.splits.val) correct += pred[static_cast<std::size_t>(i)] == g.labels[static_cast<std::size_t>(i)];
      rec.probe_val_acc = static_cast<double>(correct) / static_cast<double>(g.splits.val.size());
      if (!result.best_val_acc || *rec.probe_val_acc > *result.best_val_acc) {
        result.best_val_acc = rec.probe_val_acc;
        result.best_epoch = epoch;
        best = last_good;
      }
    }
    spdlog::debug("epoch {}: L_total={:.6g} L_gm={:.6g} L_rw={:.6g} g_syn={:.6g} g_sub={:.6g}", epoch, rec.l_total,
                  rec.l_gm, rec.l_rw_norm, rec.g_syn, rec.g_sub);
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }

  const Snapshot& chosen = best ? *best : last_good;
  if (!best) result.best_epoch = cfg.epochs;
  result.graph = materialize(chosen);
  result.params = chosen.params;
  return result;
}

}  // namespace hydro::distill

// SPDX-License-Identifier: Apache-2.0
//
// Condensation loop: gradient matching + spectral-gap alignment, with
// Riemannian SGD for ball-valued parameters.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "hydro/adgrad.hpp"
#include "hydro/errors.hpp"
#include "hydro/graph.hpp"
#include "hydro/hypernet.hpp"

namespace hydro::distill {

struct DistillConfig {
  double ratio = 0.026;
  int epochs = 600;
  int outer = 10;  // SGC re-initializations per epoch
  int inner = 1;   // synthetic updates along each SGC trajectory
  double lr_feat = 0.1;
  double lr_struct = 0.01;
  double lr_model = 0.01;  // SGC step size
  double beta = 0.1;
  double momentum = 0.0;
  double curvature = 0.01;
  double weight_decay = 0.0;
  /// Multiplier on the normalized gap term (1 in the full objective).
  double gap_weight = 1.0;
  /// Denominator floor of the normalized gap term.
  double gap_floor = 0.05;
  int sample_size = 1000;
  int sgc_hops = 2;
  int hidden = 128;
  int layers = 2;
  int probe_every = 50;
  int probe_epochs = 200;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Momentum state for a block of ball points stored one per row.
struct RiemannianOptState {
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
  /// Tangent vectors based at the current points; empty until the first step.
  Eigen::MatrixXd buffer;
};

/// One Riemannian SGD step on every row of `points`:
///   r = ((1 - c|p|^2)^2 / 4) (g + wd * log0(p)),  m <- mu m + r,
///   p' = exp_p(-lr m),  m <- PT_{p -> p'}(m).
/// Throws TrainingError(epoch) on a non-finite gradient.
Eigen::MatrixXd riemannian_step(const Eigen::MatrixXd& points, const Eigen::MatrixXd& euclid_grad,
                                RiemannianOptState& state, const ad::Ball& ball, int epoch = 0);

/// Sum over layers and columns of (1 - cos); zero-norm columns add 0.
double match_loss(const std::vector<Eigen::MatrixXd>& syn, const std::vector<Eigen::MatrixXd>& real);
ad::Var match_loss(const std::vector<ad::Var>& syn, const std::vector<Eigen::MatrixXd>& real);

/// |g_syn - g_sub| / max(g_sub, floor).
ad::Var normalized_gap_loss(const ad::Var& gap_syn, double gap_sub, double floor);

/// Mean squared tangent norm of the rows of a ball-point matrix.
ad::Var feature_regularizer(const ad::Var& points, const ad::Ball& ball);

double total_loss(double l_gm, double l_rw_norm, double l_reg, double beta);
ad::Var total_loss(const ad::Var& l_gm, const ad::Var& l_rw_norm, const ad::Var& l_reg, double beta);

struct EpochRecord {
  int epoch = 0;
  double l_gm = 0.0, l_rw_norm = 0.0, l_reg = 0.0, l_total = 0.0;
  double g_syn = 0.0, g_sub = 0.0;
  std::optional<double> probe_val_acc;
};

std::string to_json_line(const EpochRecord& r);

struct DistillResult {
  CondensedGraph graph;
  hypernet::HyperNetParams params;
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  std::optional<double> best_val_acc;
};

/// Raised when the objective turns non-finite; carries the last finite state.
class DivergenceError : public TrainingError {
 public:
  DivergenceError(const std::string& what, int epoch, std::shared_ptr<const CondensedGraph> last_good)
      : TrainingError(what, epoch), last_good_(std::move(last_good)) {}
  const std::shared_ptr<const CondensedGraph>& last_good() const { return last_good_; }

 private:
  std::shared_ptr<const CondensedGraph> last_good_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Condenses `g`. The result's features are the log0 coordinates of the
/// learned ball points; the adjacency is the generator output. Deterministic
/// in (g, cfg).
DistillResult distill(const Graph& g, const DistillConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace hydro::distill

// SPDX-License-Identifier: Apache-2.0
#include "hydro/gnn.hpp"

#include <fmt/format.h>

#include <cmath>

#include "hydro/errors.hpp"

namespace hydro::gnn {

namespace {

// A matrix stored sparse when that pays off.
class Operand {
 public:
  explicit Operand(const Eigen::MatrixXd& m, double max_density = 0.25) {
    const double nnz = static_cast<double>((m.array() != 0.0).count());
    sparse_ = m.size() > 0 && nnz / static_cast<double>(m.size()) <= max_density;
    if (sparse_) {
      s_ = m.sparseView();
    } else {
      d_ = m;
    }
  }
  explicit Operand(SparseMatrix m) : sparse_(true), s_(std::move(m)) {}

  Eigen::MatrixXd mul(const Eigen::MatrixXd& b) const {
    if (sparse_) return s_ * b;
    return d_ * b;
  }
  Eigen::MatrixXd tmul(const Eigen::MatrixXd& b) const {
    if (sparse_) return s_.transpose() * b;
    return d_.transpose() * b;
  }
  Eigen::Index rows() const { return sparse_ ? s_.rows() : d_.rows(); }
  Eigen::Index cols() const { return sparse_ ? s_.cols() : d_.cols(); }

 private:
  bool sparse_ = false;
  SparseMatrix s_;
  Eigen::MatrixXd d_;
};

struct Adam {
  Eigen::MatrixXd m, v;
  void step(Eigen::MatrixXd& p, Eigen::MatrixXd g, int t, const GcnConfig& cfg) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (m.size() == 0) {
      m = Eigen::MatrixXd::Zero(p.rows(), p.cols());
      v = m;
    }
    g += cfg.weight_decay * p;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseProduct(g);
    const double c1 = 1 - std::pow(b1, t), c2 = 1 - std::pow(b2, t);
    p.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

Eigen::MatrixXd glorot(Eigen::Index in, Eigen::Index out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> unif(-bound, bound);
  Eigen::MatrixXd w(in, out);
  for (Eigen::Index j = 0; j < out; ++j) {
    for (Eigen::Index i = 0; i < in; ++i) w(i, j) = unif(rng);
  }
  return w;
}

}  // namespace

SparseMatrix normalized_adjacency(const SparseMatrix& a) {
  const Eigen::Index n = a.rows();
  SparseMatrix looped = a;
  SparseMatrix eye(n, n);
  eye.setIdentity();
  looped += eye;
  Eigen::VectorXd deg = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < looped.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(looped, i); it; ++it) deg(i) += it.value();
  }
  const Eigen::VectorXd s = deg.cwiseSqrt().cwiseInverse();
  for (int i = 0; i < looped.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(looped, i); it; ++it) it.valueRef() *= s(i) * s(it.col());
  }
  return looped;
}

Eigen::MatrixXd normalized_adjacency(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  const Eigen::MatrixXd looped = a + Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd s = looped.rowwise().sum().cwiseSqrt().cwiseInverse();
  return s.asDiagonal() * looped * s.asDiagonal();
}

Eigen::MatrixXd propagate(const SparseMatrix& s, const Eigen::MatrixXd& x, int k) {
  if (k < 0) throw ContractError("propagate: hop count must be nonnegative");
  Eigen::MatrixXd out = x;
  for (int i = 0; i < k; ++i) out = s * out;
  return out;
}

Eigen::MatrixXd propagate(const Eigen::MatrixXd& s, const Eigen::MatrixXd& x, int k) {
  if (k < 0) throw ContractError("propagate: hop count must be nonnegative");
  Eigen::MatrixXd out = x;
  for (int i = 0; i < k; ++i) out = s * out;
  return out;
}

Eigen::MatrixXd one_hot(const std::vector<int>& labels, int num_classes) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw ContractError("one_hot: label out of range");
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()), 0);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    int best = 0;
    for (Eigen::Index j = 1; j < m.cols(); ++j) {
      if (m(i, j) > m(i, best)) best = static_cast<int>(j);
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m.colwise() - m.rowwise().maxCoeff();
  out = out.array().exp().matrix();
  out = out.array().colwise() / out.rowwise().sum().array();
  return out;
}

Eigen::MatrixXd sgc_forward(const Graph& g, const SgcModel& m) {
  if (m.theta.rows() != g.dim()) throw ContractError("sgc_forward: theta rows differ from feature width");
  return propagate(normalized_adjacency(g.adjacency), g.features, m.k) * m.theta;
}

Eigen::MatrixXd sgc_forward(const CondensedGraph& g, const SgcModel& m) {
  if (m.theta.rows() != g.dim()) throw ContractError("sgc_forward: theta rows differ from feature width");
  return propagate(normalized_adjacency(g.adjacency), g.features, m.k) * m.theta;
}

Eigen::MatrixXd sgc_grad(const Eigen::MatrixXd& propagated, const Eigen::MatrixXd& theta,
                         const std::vector<int>& labels, const std::vector<int>& mask, int num_classes) {
  if (mask.empty()) throw ContractError("sgc_grad: empty mask");
  if (propagated.cols() != theta.rows()) throw ContractError("sgc_grad: shape mismatch");
  Eigen::MatrixXd p(static_cast<Eigen::Index>(mask.size()), propagated.cols());
  std::vector<int> y;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    p.row(static_cast<Eigen::Index>(k)) = propagated.row(mask[k]);
    y.push_back(labels[static_cast<std::size_t>(mask[k])]);
  }
  const Eigen::MatrixXd residual = softmax_rows(p * theta) - one_hot(y, num_classes);
  return p.transpose() * residual / static_cast<double>(mask.size());
}

ad::Var sgc_grad(const ad::Var& propagated, const Eigen::MatrixXd& theta, const Eigen::MatrixXd& onehot) {
  if (propagated.rows() != onehot.rows() || propagated.rows() == 0) {
    throw ContractError("sgc_grad: rows of features and labels differ");
  }
  ad::Tape& tape = *propagated.tape();
  const ad::Var probs = ad::row_softmax(ad::matmul(propagated, tape.constant(theta)));
  const ad::Var residual = ad::sub(probs, tape.constant(onehot));
  return ad::scale(ad::matmul(ad::transpose(propagated), residual), 1.0 / static_cast<double>(onehot.rows()));
}

ad::Var cross_entropy(const ad::Var& logits, const Eigen::MatrixXd& onehot) {
  ad::Tape& tape = *logits.tape();
  const ad::Var logp = ad::log(ad::row_softmax(logits));
  const ad::Var picked = ad::sum(ad::hadamard(logp, tape.constant(onehot)));
  return ad::scale(picked, -1.0 / static_cast<double>(onehot.rows()));
}

GcnModel gcn_train(const CondensedGraph& g, const GcnConfig& cfg, Rng& rng, std::vector<double>* losses) {
  const std::vector<int> train = g.training_nodes();
  if (train.empty()) throw ContractError("gcn_train: no training nodes");
  if (g.num_classes < 1) throw ContractError("gcn_train: no classes");
  if (cfg.epochs < 0 || cfg.hidden < 1 || !(cfg.lr >= 0.0) || !(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) {
    throw ConfigError("gcn_train: invalid configuration");
  }
  const Operand adj(normalized_adjacency(g.adjacency), 0.1);
  const Operand x(g.features);
  const Eigen::Index n = g.n(), c = g.num_classes;

  GcnModel m;
  m.w1 = glorot(g.dim(), cfg.hidden, rng);
  m.w2 = glorot(cfg.hidden, c, rng);
  m.b1 = Eigen::RowVectorXd::Zero(cfg.hidden);
  m.b2 = Eigen::RowVectorXd::Zero(c);

  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(n, c);
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(n);
  for (int i : train) {
    target(i, g.labels[static_cast<std::size_t>(i)]) = 1.0;
    weight(i) += 1.0 / static_cast<double>(train.size());
  }

  Adam opt_w1, opt_w2, opt_b1, opt_b2;
  const double keep = 1.0 - cfg.dropout;
  std::bernoulli_distribution coin(keep);
  Eigen::MatrixXd mask(n, cfg.hidden);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const Eigen::MatrixXd z1 = adj.mul(x.mul(m.w1)).rowwise() + m.b1;
    Eigen::MatrixXd h1 = z1.cwiseMax(0.0);
    if (cfg.dropout > 0.0) {
      for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = coin(rng) ? 1.0 / keep : 0.0;
      }
      h1 = h1.cwiseProduct(mask);
    }
    const Eigen::MatrixXd z2 = adj.mul(h1 * m.w2).rowwise() + m.b2;
    const Eigen::MatrixXd probs = softmax_rows(z2);

    if (losses) {
      double loss = 0.0;
      for (int i : train) loss -= std::log(std::max(probs(i, g.labels[static_cast<std::size_t>(i)]), 1e-300));
      losses->push_back(loss / static_cast<double>(train.size()));
    }

    const Eigen::MatrixXd dz2 = weight.asDiagonal() * (probs - target);
    const Eigen::MatrixXd g2 = adj.tmul(dz2);
    const Eigen::MatrixXd dw2 = h1.transpose() * g2;
    const Eigen::RowVectorXd db2 = dz2.colwise().sum();
    Eigen::MatrixXd dh1 = g2 * m.w2.transpose();
    if (cfg.dropout > 0.0) dh1 = dh1.cwiseProduct(mask);
    const Eigen::MatrixXd dz1 = (z1.array() > 0.0).select(dh1, 0.0);
    const Eigen::MatrixXd g1 = adj.tmul(dz1);
    const Eigen::MatrixXd dw1 = x.tmul(g1);
    const Eigen::RowVectorXd db1 = dz1.colwise().sum();

    opt_w1.step(m.w1, dw1, epoch, cfg);
    opt_w2.step(m.w2, dw2, epoch, cfg);
    Eigen::MatrixXd b1 = m.b1, b2 = m.b2;
    opt_b1.step(b1, db1, epoch, cfg);
    opt_b2.step(b2, db2, epoch, cfg);
    m.b1 = b1;
    m.b2 = b2;
  }
  if (!m.w1.allFinite() || !m.w2.allFinite()) throw TrainingError("gcn_train: weights diverged", cfg.epochs);
  return m;
}

GcnOutput gcn_infer(const GcnModel& m, const SparseMatrix& normalized, const Eigen::MatrixXd& features) {
  if (features.cols() != m.w1.rows()) {
    throw ContractError(fmt::format("gcn_infer: features have width {}, model expects {}", features.cols(),
                                    m.w1.rows()));
  }
  if (normalized.rows() != features.rows()) throw ContractError("gcn_infer: adjacency/feature rows differ");
  const Operand x(features);
  GcnOutput out;
  out.embeddings = (normalized * x.mul(m.w1)).rowwise() + m.b1;
  const Eigen::MatrixXd h1 = out.embeddings.cwiseMax(0.0);
  out.logits = (normalized * (h1 * m.w2)).rowwise() + m.b2;
  out.predictions = argmax_rows(out.logits);
  return out;
}

GcnOutput gcn_infer(const GcnModel& m, const Graph& g) {
  return gcn_infer(m, normalized_adjacency(g.adjacency), g.features);
}

}  // namespace hydro::gnn

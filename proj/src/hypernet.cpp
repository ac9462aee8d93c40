// SPDX-License-Identifier: Apache-2.0
#include "hydro/hypernet.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "hydro/errors.hpp"

namespace hydro::hypernet {

namespace {

void check_config(const HyperNetConfig& cfg) {
  if (cfg.layers < 1) throw ConfigError("hypernet: layers must be at least 1");
  if (cfg.hidden < 1) throw ConfigError("hypernet: hidden width must be positive");
  if (!(cfg.curvature > 0.0)) throw ConfigError("hypernet: curvature must be positive");
}

}  // namespace

HyperNetParams init_params(const HyperNetConfig& cfg, int feature_dim, Rng& rng) {
  check_config(cfg);
  if (feature_dim < 1) throw ContractError("hypernet: feature dimension must be positive");
  HyperNetParams p;
  int in = 2 * feature_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    const bool last = l + 1 == cfg.layers;
    const int out = last ? 1 : cfg.hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> unif(-bound, bound);
    Eigen::MatrixXd w(in, out);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = unif(rng);
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::MatrixXd::Zero(1, out));
    if (!last) {
      p.bn_scale.push_back(Eigen::MatrixXd::Ones(1, out));
      p.bn_shift.push_back(Eigen::MatrixXd::Zero(1, out));
    }
    in = out;
  }
  return p;
}

HyperNetVars bind(ad::Tape& tape, const HyperNetParams& params) {
  HyperNetVars v;
  for (const auto& w : params.weights) v.weights.push_back(tape.leaf(w));
  for (const auto& b : params.biases) v.biases.push_back(tape.leaf(b));
  for (const auto& s : params.bn_scale) v.bn_scale.push_back(tape.leaf(s));
  for (const auto& s : params.bn_shift) v.bn_shift.push_back(tape.leaf(s));
  return v;
}

Var lift(const Var& e, const Ball& ball) { return ad::project_rows(ad::expmap0_rows(e, ball), ball); }

namespace {
// b (+) exp0(t) for a tangent batch t.
Var translate(const Var& t, const Var& b, const Ball& ball) {
  const Var z = ad::project_rows(ad::expmap0_rows(t, ball), ball);
  return ad::mobius_add_rows(b, z, ball);
}
}  // namespace

Var mobius_linear(const Var& z, const Var& w, const Var& b, const Ball& ball) {
  if (z.cols() != w.rows()) {
    throw ContractError(fmt::format("mobius_linear: input width {} but weight has {} rows", z.cols(), w.rows()));
  }
  if (b.rows() != 1 || b.cols() != w.cols()) throw ContractError("mobius_linear: bias must be 1 x out");
  return translate(ad::matmul(ad::logmap0_rows(z, ball), w), b, ball);
}

Var tangent_batchnorm(const Var& z, const Var& scale, const Var& shift, const Ball& ball) {
  if (z.rows() < 2) throw ContractError("tangent_batchnorm: batch statistics need at least two rows");
  const Var t = ad::standardize_cols(ad::logmap0_rows(z, ball), kBatchNormEps);
  return ad::project_rows(ad::expmap0_rows(ad::affine_cols(t, scale, shift), ball), ball);
}

Var hyperbolic_relu(const Var& z, const Ball& ball) {
  return ad::project_rows(ad::expmap0_rows(ad::relu(ad::logmap0_rows(z, ball)), ball), ball);
}

Var adjacency_head(const Var& z_last, int n, const Ball& ball) {
  if (z_last.rows() != static_cast<Eigen::Index>(n) * n) {
    throw ContractError(fmt::format("adjacency_head: expected {} rows, got {}", n * n, z_last.rows()));
  }
  const Var logits = ad::column(ad::logmap0_rows(z_last, ball), 0);
  const Var square = ad::reshape_rowmajor(logits, n, n);
  return ad::zero_diagonal(ad::sigmoid(ad::symmetrize(square)));
}

Var forward(const HyperNetConfig& cfg, const HyperNetVars& vars, const Var& x) {
  check_config(cfg);
  const auto layers = static_cast<int>(vars.weights.size());
  if (layers < 1) throw ContractError("hypernet: no layers bound");
  const int n = static_cast<int>(x.rows());
  if (n > kMaxNodes) throw ContractError(fmt::format("hypernet: {} nodes exceeds the limit of {}", n, kMaxNodes));
  if (vars.weights[0].rows() != 2 * x.cols()) {
    throw ContractError(fmt::format("hypernet: features have width {}, first layer expects {}", x.cols(),
                                    vars.weights[0].rows() / 2));
  }
  const Ball ball(cfg.curvature);

  Var z;
  if (cfg.fused_first_layer) {
    z = translate(ad::lifted_pair_linear(x, vars.weights[0], ball), vars.biases[0], ball);
  } else {
    z = mobius_linear(lift(ad::edge_embed(x), ball), vars.weights[0], vars.biases[0], ball);
  }
  for (int l = 0;; ++l) {
    if (l + 1 == layers) break;
    z = tangent_batchnorm(z, vars.bn_scale[static_cast<std::size_t>(l)], vars.bn_shift[static_cast<std::size_t>(l)],
                          ball);
    z = hyperbolic_relu(z, ball);
    z = mobius_linear(z, vars.weights[static_cast<std::size_t>(l) + 1], vars.biases[static_cast<std::size_t>(l) + 1],
                      ball);
  }
  return adjacency_head(z, n, ball);
}

Eigen::MatrixXd generate(const HyperNetConfig& cfg, const HyperNetParams& params, const Eigen::MatrixXd& x) {
  ad::Tape tape;
  const HyperNetVars vars = bind(tape, params);
  return forward(cfg, vars, tape.constant(x)).value();
}

namespace {

nlohmann::json matrices_json(const std::vector<Eigen::MatrixXd>& ms) {
  auto arr = nlohmann::json::array();
  for (const auto& m : ms) {
    nlohmann::json data = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    }
    arr.push_back({{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}});
  }
  return arr;
}

std::vector<Eigen::MatrixXd> json_matrices(const nlohmann::json& arr) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& e : arr) {
    const auto rows = e.at("rows").get<Eigen::Index>(), cols = e.at("cols").get<Eigen::Index>();
    const auto& data = e.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw IngestionError("checkpoint: data size mismatch");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = data[static_cast<std::size_t>(i * cols + j)].get<double>();
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

void save_checkpoint(const HyperNetParams& params, const std::filesystem::path& path) {
  const nlohmann::json j = {{"weights", matrices_json(params.weights)},
                            {"biases", matrices_json(params.biases)},
                            {"bn_scale", matrices_json(params.bn_scale)},
                            {"bn_shift", matrices_json(params.bn_shift)}};
  // Re-emit numbers with 17 significant digits so checkpoints diff cleanly.
  std::ostringstream out;
  std::function<void(const nlohmann::json&)> emit = [&](const nlohmann::json& v) {
    if (v.is_object()) {
      out << '{';
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        out << (first ? "" : ",") << nlohmann::json(it.key()).dump() << ':';
        emit(it.value());
        first = false;
      }
      out << '}';
    } else if (v.is_array()) {
      out << '[';
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out << ',';
        emit(v[i]);
      }
      out << ']';
    } else if (v.is_number_float()) {
      out << format_double(v.get<double>());
    } else {
      out << v.dump();
    }
  };
  emit(j);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << out.str() << '\n';
}

HyperNetParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestionError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(f);
    HyperNetParams p;
    p.weights = json_matrices(j.at("weights"));
    p.biases = json_matrices(j.at("biases"));
    p.bn_scale = json_matrices(j.at("bn_scale"));
    p.bn_shift = json_matrices(j.at("bn_shift"));
    if (p.biases.size() != p.weights.size() || p.bn_scale.size() + 1 != p.weights.size() ||
        p.bn_shift.size() != p.bn_scale.size()) {
      throw IngestionError("checkpoint: inconsistent layer counts");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
}

}  // namespace hydro::hypernet

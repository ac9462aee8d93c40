// SPDX-License-Identifier: Apache-2.0
#include "hydro/eval.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "hydro/errors.hpp"
#include "hydro/spectral.hpp"

namespace hydro::eval {

std::string task_name(Task t) { return t == Task::NodeClassification ? "nc" : "lp"; }

namespace {

// Runs f(r) for r in [0, runs) on up to `jobs` threads; results land by index.
std::vector<double> run_all(int runs, int jobs, const std::function<double(int)>& f) {
  if (runs < 1) throw ConfigError("runs must be at least 1");
  std::vector<double> out(static_cast<std::size_t>(runs), 0.0);
  jobs = std::clamp(jobs, 1, runs);
  if (jobs == 1) {
    for (int r = 0; r < runs; ++r) out[static_cast<std::size_t>(r)] = f(r);
    return out;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (int r = next++; r < runs; r = next++) {
        try {
          out[static_cast<std::size_t>(r)] = f(r);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

EvalResult summarize(Task task, std::vector<double> acc, std::uint64_t seed) {
  EvalResult r;
  r.task = task;
  r.accuracies = std::move(acc);
  const double n = static_cast<double>(r.accuracies.size());
  r.mean = std::accumulate(r.accuracies.begin(), r.accuracies.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : r.accuracies) ss += (a - r.mean) * (a - r.mean);
  r.std = std::sqrt(ss / n);
  for (std::size_t i = 0; i < r.accuracies.size(); ++i) r.seeds.push_back(seed + i);
  return r;
}

void check_compatible(const CondensedGraph& cg, const Graph& g) {
  if (cg.dim() != g.dim()) {
    throw ContractError(fmt::format("condensed features have width {}, dataset has {}", cg.dim(), g.dim()));
  }
  std::vector<char> has(static_cast<std::size_t>(std::max(g.num_classes, cg.num_classes)), 0);
  for (int i : cg.training_nodes()) has[static_cast<std::size_t>(cg.labels[static_cast<std::size_t>(i)])] = 1;
  for (int c = 0; c < g.num_classes; ++c) {
    if (!has[static_cast<std::size_t>(c)]) {
      throw ContractError(fmt::format("class {} has no training node in the condensed graph", c));
    }
  }
}

double test_accuracy(const std::vector<int>& pred, const Graph& g) {
  if (g.splits.test.empty()) throw ContractError("dataset has an empty test split");
  int correct = 0;
  for (int i : g.splits.test) correct += pred[static_cast<std::size_t>(i)] == g.labels[static_cast<std::size_t>(i)];
  return static_cast<double>(correct) / static_cast<double>(g.splits.test.size());
}

}  // namespace

EvalResult eval_nc(const CondensedGraph& cg, const Graph& g, const EvalOptions& opt) {
  check_compatible(cg, g);
  const SparseMatrix norm = gnn::normalized_adjacency(g.adjacency);
  auto acc = run_all(opt.runs, opt.jobs, [&](int r) {
    Rng rng(opt.seed + static_cast<std::uint64_t>(r));
    const gnn::GcnModel model = gnn::gcn_train(cg, opt.gcn, rng);
    return test_accuracy(gnn::gcn_infer(model, norm, g.features).predictions, g);
  });
  return summarize(Task::NodeClassification, std::move(acc), opt.seed);
}

LinkSplit split_links(const Graph& g, Rng& rng) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < g.adjacency.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(g.adjacency, i); it; ++it) {
      if (it.col() > i) edges.emplace_back(i, static_cast<int>(it.col()));
    }
  }
  const auto m = static_cast<std::int64_t>(edges.size());
  const std::int64_t held = m / 10;
  if (held < 1) {
    throw ConfigError(fmt::format("link prediction needs at least 10 edges to hold out one (graph has {})", m));
  }
  const std::int64_t n = g.n();
  if (n * (n - 1) / 2 - m < held) throw ConfigError("link prediction: not enough non-edges to sample negatives");

  std::shuffle(edges.begin(), edges.end(), rng);
  LinkSplit split;
  split.positives.assign(edges.begin(), edges.begin() + held);
  std::set<std::pair<int, int>> held_set(split.positives.begin(), split.positives.end());

  std::set<std::pair<int, int>> chosen;
  std::uniform_int_distribution<int> node(0, g.n() - 1);
  while (static_cast<std::int64_t>(split.negatives.size()) < held) {
    int u = node(rng), v = node(rng);
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (g.adjacency.coeff(u, v) != 0.0 || !chosen.emplace(u, v).second) continue;
    split.negatives.emplace_back(u, v);
  }

  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < g.adjacency.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(g.adjacency, i); it; ++it) {
      const int j = static_cast<int>(it.col());
      if (held_set.count({std::min(i, j), std::max(i, j)})) continue;
      trips.emplace_back(i, j, it.value());
    }
  }
  split.train_adjacency.resize(g.n(), g.n());
  split.train_adjacency.setFromTriplets(trips.begin(), trips.end());
  split.train_adjacency.makeCompressed();
  return split;
}

double link_accuracy(const Eigen::MatrixXd& embeddings, const LinkSplit& split) {
  const auto score = [&](const std::pair<int, int>& e) {
    const double dot = embeddings.row(e.first).dot(embeddings.row(e.second));
    return 1.0 / (1.0 + std::exp(-dot));
  };
  std::size_t correct = 0;
  for (const auto& e : split.positives) correct += score(e) >= 0.5;
  for (const auto& e : split.negatives) correct += score(e) < 0.5;
  return static_cast<double>(correct) / static_cast<double>(split.positives.size() + split.negatives.size());
}

EvalResult eval_lp(const CondensedGraph& cg, const Graph& g, const EvalOptions& opt) {
  check_compatible(cg, g);
  auto acc = run_all(opt.runs, opt.jobs, [&](int r) {
    Rng rng(opt.seed + static_cast<std::uint64_t>(r));
    const LinkSplit split = split_links(g, rng);
    const gnn::GcnModel model = gnn::gcn_train(cg, opt.gcn, rng);
    const auto out = gnn::gcn_infer(model, gnn::normalized_adjacency(split.train_adjacency), g.features);
    return link_accuracy(out.embeddings, split);
  });
  return summarize(Task::LinkPrediction, std::move(acc), opt.seed);
}

CondensedGraph random_condensed(const Graph& g, double ratio, Rng& rng) {
  const int budget = condensed_size(g.n(), ratio);
  if (budget >= g.n()) return as_condensed(g);
  const std::vector<int> counts = train_class_counts(g);
  std::vector<int> per_class = apportion(counts, budget);
  std::vector<std::vector<int>> pool(counts.size());
  for (int i : g.splits.train) pool[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(i)])].push_back(i);
  std::vector<int> nodes;
  for (std::size_t c = 0; c < pool.size(); ++c) {
    auto& p = pool[c];
    std::shuffle(p.begin(), p.end(), rng);
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(per_class[c]), p.size());
    nodes.insert(nodes.end(), p.begin(), p.begin() + static_cast<std::ptrdiff_t>(take));
  }
  const Graph sub = induced_subgraph(g, nodes);
  CondensedGraph cg;
  cg.adjacency = dense_adjacency(sub);
  cg.features = sub.features;
  cg.labels = sub.labels;
  cg.num_classes = g.num_classes;
  return cg;
}

EvalResult baseline_random(const Graph& g, double ratio, const EvalOptions& opt) {
  const SparseMatrix norm = gnn::normalized_adjacency(g.adjacency);
  auto acc = run_all(opt.runs, opt.jobs, [&](int r) {
    Rng rng(opt.seed + static_cast<std::uint64_t>(r));
    const CondensedGraph cg = random_condensed(g, ratio, rng);
    check_compatible(cg, g);
    const gnn::GcnModel model = gnn::gcn_train(cg, opt.gcn, rng);
    return test_accuracy(gnn::gcn_infer(model, norm, g.features).predictions, g);
  });
  return summarize(Task::NodeClassification, std::move(acc), opt.seed);
}

namespace {
std::vector<double> upper_triangle(const Eigen::MatrixXd& m, double cap) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) out.push_back(std::min(m(i, j), cap) / cap);
  }
  return out;
}
}  // namespace

double commute_score(const Eigen::MatrixXd& condensed_commute, const Eigen::MatrixXd& original_commute, double cap) {
  if (!(cap > 0.0)) throw ContractError("commute_score: cap must be positive");
  std::vector<double> a = upper_triangle(condensed_commute, cap);
  std::vector<double> b = upper_triangle(original_commute, cap);
  if (a.empty() || b.empty()) throw ContractError("commute_score: both graphs need at least two nodes");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t m = a.size(), big_n = b.size();
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const auto idx = static_cast<std::size_t>(std::floor((static_cast<double>(k) + 0.5) * static_cast<double>(big_n) /
                                                         static_cast<double>(m)));
    total += std::abs(a[k] - b[std::min(idx, big_n - 1)]);
  }
  return total / static_cast<double>(m);
}

CommuteComparison compare_commute(const Eigen::MatrixXd& condensed_adjacency,
                                  const Eigen::MatrixXd& original_adjacency, double cap) {
  CommuteComparison out;
  out.condensed_capped = spectral::cap_matrix(spectral::commute_matrix(condensed_adjacency), cap);
  out.original_capped = spectral::cap_matrix(spectral::commute_matrix(original_adjacency), cap);
  out.score = commute_score(out.condensed_capped, out.original_capped, cap);
  return out;
}

void write_results(const std::vector<EvalResult>& results, const std::filesystem::path& path) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& r : results) {
    j[task_name(r.task)] = {{"task", task_name(r.task)}, {"mean", r.mean},   {"std", r.std},
                            {"runs", r.runs()},          {"seeds", r.seeds}, {"accuracies", r.accuracies},
                            {"config_hash", r.config_hash}};
  }
  if (!results.empty()) j["config_hash"] = results.front().config_hash;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace hydro::eval

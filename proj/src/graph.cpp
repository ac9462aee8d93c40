// SPDX-License-Identifier: Apache-2.0
#include "hydro/graph.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "hydro/errors.hpp"

namespace hydro {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

// Calls f(line_number, fields) for each non-blank line.
template <typename F>
void for_each_csv_line(const std::string& text, const fs::path& path, F&& f) {
  std::size_t pos = 0;
  int line_no = 0;
  std::vector<std::string_view> fields;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    fields.clear();
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    try {
      f(line_no, fields);
    } catch (const IngestionError& e) {
      throw IngestionError(path.filename().string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw IngestionError("cannot parse '" + std::string(s) + "' as a number");
  }
  return v;
}

std::vector<int> json_int_list(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw IngestionError(std::string("splits.json: missing array '") + key + "'");
  }
  std::vector<int> out;
  for (const auto& v : j[key]) {
    if (!v.is_number_integer()) throw IngestionError(std::string("splits.json: non-integer in ") + key);
    out.push_back(v.get<int>());
  }
  return out;
}

void write_int_array(std::ostream& out, const std::vector<int>& v) {
  out << '[';
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  out << ']';
}

void write_matrix_json(std::ostream& out, const Eigen::MatrixXd& m) {
  out << '[';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << (i ? ",\n  [" : "\n  [");
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << ']';
  }
  out << (m.rows() ? "\n]" : "]");
}

Eigen::MatrixXd json_matrix(const json& j, const char* what, Eigen::Index cols_hint = -1) {
  if (!j.is_array()) throw IngestionError(std::string(what) + ": expected a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].size()) : std::max<Eigen::Index>(cols_hint, 0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw IngestionError(std::string(what) + ": ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

std::int64_t Graph::num_edges() const {
  std::int64_t count = 0;
  for (int i = 0; i < adjacency.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(adjacency, i); it; ++it) {
      if (it.col() > i) ++count;
    }
  }
  return count;
}

std::vector<int> CondensedGraph::training_nodes() const {
  if (train_nodes) return *train_nodes;
  std::vector<int> all(static_cast<std::size_t>(n()));
  std::iota(all.begin(), all.end(), 0);
  return all;
}

void validate(const Graph& g) {
  const int n = g.n();
  if (g.features.rows() != n) {
    throw IngestionError(fmt::format("features have {} rows for {} labels", g.features.rows(), n));
  }
  if (g.adjacency.rows() != n || g.adjacency.cols() != n) {
    throw IngestionError("adjacency shape does not match node count");
  }
  if (!g.features.allFinite()) throw IngestionError("features contain non-finite values");
  for (int y : g.labels) {
    if (y < 0 || y >= g.num_classes) throw IngestionError(fmt::format("label {} out of range", y));
  }
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (const auto* split : {&g.splits.train, &g.splits.val, &g.splits.test}) {
    for (int i : *split) {
      if (i < 0 || i >= n) throw IngestionError(fmt::format("split index {} out of range", i));
      if (seen[static_cast<std::size_t>(i)]) {
        throw IngestionError(fmt::format("node {} appears in more than one split slot", i));
      }
      seen[static_cast<std::size_t>(i)] = 1;
    }
  }
  const SparseMatrix t = g.adjacency.transpose();
  if ((g.adjacency - t).norm() > 1e-12) throw IngestionError("adjacency is not symmetric");
  for (int i = 0; i < n; ++i) {
    if (g.adjacency.coeff(i, i) != 0.0) throw IngestionError("adjacency has a nonzero diagonal");
  }
  for (int k = 0; k < g.adjacency.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(g.adjacency, k); it; ++it) {
      if (!(it.value() >= 0.0) || !std::isfinite(it.value())) {
        throw IngestionError("adjacency has a negative or non-finite weight");
      }
    }
  }
}

SparseMatrix adjacency_from_edges(int n, const std::vector<std::pair<int, int>>& edges,
                                  const std::vector<double>& weights) {
  std::map<std::pair<int, int>, double> merged;
  std::size_t self_loops = 0, repeats = 0;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    auto [u, v] = edges[k];
    if (u < 0 || v < 0 || u >= n || v >= n) {
      throw IngestionError(fmt::format("edge ({}, {}) references a node outside [0, {})", u, v, n));
    }
    const double w = weights.empty() ? 1.0 : weights[k];
    if (!(w >= 0.0) || !std::isfinite(w)) throw IngestionError("edge weight must be finite and nonnegative");
    if (u == v) {
      ++self_loops;
      continue;
    }
    if (u > v) std::swap(u, v);
    if (!merged.emplace(std::make_pair(u, v), w).second) ++repeats;
  }
  if (self_loops) spdlog::warn("dropped {} self-loop(s)", self_loops);
  if (repeats) spdlog::warn("merged {} repeated or reversed edge(s); the edge list is symmetrized", repeats);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(merged.size() * 2);
  for (const auto& [e, w] : merged) {
    trips.emplace_back(e.first, e.second, w);
    trips.emplace_back(e.second, e.first, w);
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  return a;
}

Graph load_dataset(const fs::path& dir) {
  for (const char* name : {"edges.csv", "features.csv", "labels.csv", "splits.json"}) {
    if (!fs::exists(dir / name)) throw IngestionError(fmt::format("{}: missing {}", dir.string(), name));
  }
  Graph g;

  const std::string label_text = read_file(dir / "labels.csv");
  for_each_csv_line(label_text, dir / "labels.csv", [&](int, const auto& f) {
    if (f.size() != 1) throw IngestionError("expected one label per line");
    const int y = parse_number<int>(f[0]);
    if (y < 0) throw IngestionError("negative label");
    g.labels.push_back(y);
  });
  const int n = g.n();
  g.num_classes = n ? *std::max_element(g.labels.begin(), g.labels.end()) + 1 : 0;

  std::vector<double> values;
  Eigen::Index d = -1;
  int rows = 0;
  const std::string feature_text = read_file(dir / "features.csv");
  for_each_csv_line(feature_text, dir / "features.csv", [&](int, const auto& f) {
    if (d < 0) d = static_cast<Eigen::Index>(f.size());
    if (static_cast<Eigen::Index>(f.size()) != d) {
      throw IngestionError(fmt::format("expected {} values, found {}", d, f.size()));
    }
    for (const auto& s : f) values.push_back(parse_number<double>(s));
    ++rows;
  });
  if (rows != n) throw IngestionError(fmt::format("features.csv has {} rows, labels.csv has {}", rows, n));
  g.features = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, std::max<Eigen::Index>(d, 0));

  std::vector<std::pair<int, int>> edges;
  std::vector<double> weights;
  bool weighted = false;
  const std::string edge_text = read_file(dir / "edges.csv");
  for_each_csv_line(edge_text, dir / "edges.csv", [&](int, const auto& f) {
    if (f.size() != 2 && f.size() != 3) throw IngestionError("expected 'u,v' or 'u,v,w'");
    edges.emplace_back(parse_number<int>(f[0]), parse_number<int>(f[1]));
    weighted = weighted || f.size() == 3;
    weights.push_back(f.size() == 3 ? parse_number<double>(f[2]) : 1.0);
  });
  g.adjacency = adjacency_from_edges(n, edges, weighted ? weights : std::vector<double>{});
  if (edges.empty()) spdlog::warn("{}: graph has no edges", dir.string());

  json sj;
  try {
    sj = json::parse(read_file(dir / "splits.json"));
  } catch (const json::exception& e) {
    throw IngestionError(std::string("splits.json: ") + e.what());
  }
  g.splits.train = json_int_list(sj, "train");
  g.splits.val = json_int_list(sj, "val");
  g.splits.test = json_int_list(sj, "test");

  validate(g);

  if (fs::exists(dir / "meta.json")) {
    json meta;
    try {
      meta = json::parse(read_file(dir / "meta.json"));
    } catch (const json::exception& e) {
      throw IngestionError(std::string("meta.json: ") + e.what());
    }
    const auto check = [&](const char* key, std::int64_t actual) {
      if (meta.contains(key) && meta[key].get<std::int64_t>() != actual) {
        throw IngestionError(fmt::format("meta.json declares {} = {}, found {}", key,
                                         meta[key].get<std::int64_t>(), actual));
      }
    };
    check("nodes", n);
    check("edges", g.num_edges());
    check("classes", g.num_classes);
    check("features", g.dim());
  }
  return g;
}

void save_dataset(const Graph& g, const fs::path& dir) {
  validate(g);
  fs::create_directories(dir);
  bool weighted = false;
  for (int k = 0; k < g.adjacency.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(g.adjacency, k); it; ++it) weighted = weighted || it.value() != 1.0;
  }
  {
    auto out = open_out(dir / "edges.csv");
    for (int i = 0; i < g.adjacency.outerSize(); ++i) {
      for (SparseMatrix::InnerIterator it(g.adjacency, i); it; ++it) {
        if (it.col() <= i) continue;
        out << i << ',' << it.col();
        if (weighted) out << ',' << format_double(it.value());
        out << '\n';
      }
    }
  }
  {
    auto out = open_out(dir / "features.csv");
    for (Eigen::Index i = 0; i < g.features.rows(); ++i) {
      for (Eigen::Index j = 0; j < g.features.cols(); ++j) {
        out << (j ? "," : "") << format_double(g.features(i, j));
      }
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "labels.csv");
    for (int y : g.labels) out << y << '\n';
  }
  {
    auto out = open_out(dir / "splits.json");
    out << "{\"train\":";
    write_int_array(out, g.splits.train);
    out << ",\"val\":";
    write_int_array(out, g.splits.val);
    out << ",\"test\":";
    write_int_array(out, g.splits.test);
    out << "}\n";
  }
}

Eigen::MatrixXd dense_adjacency(const Graph& g) { return Eigen::MatrixXd(g.adjacency); }

Graph induced_subgraph(const Graph& g, const std::vector<int>& nodes) {
  const int n = g.n();
  std::vector<int> pos(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const int v = nodes[k];
    if (v < 0 || v >= n) throw ContractError("induced_subgraph: node id out of range");
    if (pos[static_cast<std::size_t>(v)] >= 0) throw ContractError("induced_subgraph: repeated node id");
    pos[static_cast<std::size_t>(v)] = static_cast<int>(k);
  }
  const auto s = static_cast<int>(nodes.size());
  Graph sub;
  sub.num_classes = g.num_classes;
  sub.features.resize(s, g.features.cols());
  sub.labels.resize(nodes.size());
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < s; ++k) {
    const int v = nodes[static_cast<std::size_t>(k)];
    sub.features.row(k) = g.features.row(v);
    sub.labels[static_cast<std::size_t>(k)] = g.labels[static_cast<std::size_t>(v)];
    for (SparseMatrix::InnerIterator it(g.adjacency, v); it; ++it) {
      const int p = pos[static_cast<std::size_t>(it.col())];
      if (p >= 0) trips.emplace_back(k, p, it.value());
    }
  }
  sub.adjacency.resize(s, s);
  sub.adjacency.setFromTriplets(trips.begin(), trips.end());
  sub.adjacency.makeCompressed();
  const auto remap = [&](const std::vector<int>& idx) {
    std::vector<int> out;
    for (int i : idx) {
      if (pos[static_cast<std::size_t>(i)] >= 0) out.push_back(pos[static_cast<std::size_t>(i)]);
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  sub.splits = {remap(g.splits.train), remap(g.splits.val), remap(g.splits.test)};
  return sub;
}

Graph sample_subgraph(const Graph& g, int size, Rng& rng, std::vector<int>* nodes_out) {
  if (size < 1 || size > g.n()) {
    throw ContractError(fmt::format("sample_subgraph: size {} outside [1, {}]", size, g.n()));
  }
  std::vector<int> order(static_cast<std::size_t>(g.n()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(static_cast<std::size_t>(size));
  if (nodes_out) *nodes_out = order;
  return induced_subgraph(g, order);
}

namespace {
void require_nonnegative_square(const Eigen::MatrixXd& a, const char* op) {
  if (a.rows() != a.cols()) throw ContractError(std::string(op) + ": matrix must be square");
  if (!a.allFinite() || (a.array() < 0.0).any()) {
    throw DomainError(std::string(op) + ": entries must be finite and nonnegative");
  }
}
}  // namespace

Eigen::MatrixXd lazy_walk_synthetic(const Eigen::MatrixXd& a) {
  require_nonnegative_square(a, "lazy_walk_synthetic");
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd deg = a.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (deg(i) < 1e-12) continue;  // stays put: row is e_i
    w.row(i) = 0.5 * (w.row(i) + a.row(i) / deg(i));
  }
  return w;
}

Eigen::MatrixXd lazy_walk_synthetic_sym(const Eigen::MatrixXd& a) {
  require_nonnegative_square(a, "lazy_walk_synthetic_sym");
  const Eigen::Index n = a.rows();
  const Eigen::VectorXd deg = a.rowwise().sum();
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) s(i) = deg(i) < 1e-12 ? 0.0 : 1.0 / std::sqrt(deg(i));
  Eigen::MatrixXd norm = s.asDiagonal() * a * s.asDiagonal();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (deg(i) < 1e-12) norm(i, i) = 1.0;
  }
  return 0.5 * (Eigen::MatrixXd::Identity(n, n) + norm);
}

Eigen::MatrixXd lazy_walk_sampled(const Eigen::MatrixXd& a) {
  require_nonnegative_square(a, "lazy_walk_sampled");
  const Eigen::Index n = a.rows();
  const Eigen::MatrixXd looped = a + Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd s = looped.rowwise().sum().cwiseSqrt().cwiseInverse();
  return 0.5 * (Eigen::MatrixXd::Identity(n, n) + s.asDiagonal() * looped * s.asDiagonal());
}

std::vector<int> apportion(const std::vector<int>& counts, int total) {
  const long long sum = std::accumulate(counts.begin(), counts.end(), 0LL);
  const auto present = std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; });
  if (total < present) {
    throw ContractError(fmt::format("budget of {} node(s) is smaller than the {} classes present", total, present));
  }
  const std::size_t k = counts.size();
  std::vector<int> out(k, 0);
  std::vector<double> rem(k, 0.0);
  int assigned = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] <= 0) continue;
    const double quota = static_cast<double>(total) * counts[c] / static_cast<double>(sum);
    out[c] = std::max(1, static_cast<int>(std::floor(quota)));
    rem[c] = quota - out[c];
    assigned += out[c];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  // Largest remainder first; ties to the lower class index.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % k) {
    if (counts[order[i]] <= 0) continue;
    ++out[order[i]];
    ++assigned;
  }
  // Minimum-one floors can overshoot; take back from the most over-served classes.
  for (std::size_t i = k; assigned > total;) {
    i = (i == 0 ? k : i) - 1;
    const std::size_t c = order[i];
    if (out[c] > 1) {
      --out[c];
      --assigned;
    }
  }
  return out;
}

int condensed_size(int n, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError(fmt::format("ratio {} outside (0, 1]", ratio));
  // Guard against ratio*n landing a hair under an integer.
  return static_cast<int>(std::floor(ratio * n + 1e-9));
}

std::vector<int> train_class_counts(const Graph& g) {
  std::vector<int> counts(static_cast<std::size_t>(g.num_classes), 0);
  for (int i : g.splits.train) ++counts[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(i)])];
  return counts;
}

CondensedGraph init_condensed(const Graph& g, double ratio, Rng& rng) {
  const int budget = condensed_size(g.n(), ratio);
  const std::vector<int> counts = train_class_counts(g);
  const std::vector<int> per_class = apportion(counts, budget);

  std::vector<std::vector<int>> pool(counts.size());
  for (int i : g.splits.train) pool[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(i)])].push_back(i);

  CondensedGraph cg;
  cg.num_classes = g.num_classes;
  cg.features.resize(budget, g.features.cols());
  cg.adjacency = Eigen::MatrixXd::Zero(budget, budget);
  int row = 0;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    auto& nodes = pool[c];
    std::shuffle(nodes.begin(), nodes.end(), rng);
    for (int k = 0; k < per_class[c]; ++k) {
      // Classes smaller than their share reuse nodes in shuffled order.
      const int src = nodes[static_cast<std::size_t>(k) % nodes.size()];
      cg.features.row(row++) = g.features.row(src);
      cg.labels.push_back(static_cast<int>(c));
    }
  }
  return cg;
}

CondensedGraph as_condensed(const Graph& g) {
  CondensedGraph cg;
  cg.adjacency = dense_adjacency(g);
  cg.features = g.features;
  cg.labels = g.labels;
  cg.num_classes = g.num_classes;
  cg.train_nodes = g.splits.train;
  return cg;
}

void save_condensed(const CondensedGraph& cg, const fs::path& path) {
  auto out = open_out(path);
  out << "{\n\"n\": " << cg.n() << ",\n\"num_classes\": " << cg.num_classes << ",\n\"adjacency\": ";
  write_matrix_json(out, cg.adjacency);
  out << ",\n\"features\": ";
  write_matrix_json(out, cg.features);
  out << ",\n\"labels\": ";
  write_int_array(out, cg.labels);
  if (cg.train_nodes) {
    out << ",\n\"train_nodes\": ";
    write_int_array(out, *cg.train_nodes);
  }
  out << ",\n\"config_hash\": " << json(cg.config_hash).dump() << ",\n\"seed\": " << cg.seed << "\n}\n";
}

CondensedGraph load_condensed(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
  CondensedGraph cg;
  try {
    const int n = j.at("n").get<int>();
    cg.adjacency = json_matrix(j.at("adjacency"), "adjacency", n);
    cg.features = json_matrix(j.at("features"), "features");
    cg.labels = j.at("labels").get<std::vector<int>>();
    cg.num_classes = j.contains("num_classes")
                         ? j["num_classes"].get<int>()
                         : (cg.labels.empty() ? 0 : *std::max_element(cg.labels.begin(), cg.labels.end()) + 1);
    if (j.contains("train_nodes")) cg.train_nodes = j["train_nodes"].get<std::vector<int>>();
    cg.config_hash = j.value("config_hash", "");
    cg.seed = j.value("seed", std::uint64_t{0});
    if (cg.n() != n || cg.adjacency.rows() != n || cg.adjacency.cols() != n || cg.features.rows() != n) {
      throw IngestionError("node count disagrees with adjacency/features/labels");
    }
  } catch (const json::exception& e) {
    throw IngestionError(path.string() + ": " + e.what());
  } catch (const IngestionError& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
  for (int y : cg.labels) {
    if (y < 0 || y >= cg.num_classes) throw IngestionError(path.string() + ": label out of range");
  }
  if ((cg.adjacency.array() < 0.0).any() || (cg.adjacency - cg.adjacency.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw IngestionError(path.string() + ": adjacency must be symmetric and nonnegative");
  }
  return cg;
}

void write_matrix_csv(const Eigen::MatrixXd& m, const fs::path& path) {
  auto out = open_out(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

Eigen::MatrixXd read_matrix_csv(const fs::path& path) {
  std::vector<double> values;
  Eigen::Index cols = -1, rows = 0;
  const std::string text = read_file(path);
  for_each_csv_line(text, path, [&](int, const auto& f) {
    if (cols < 0) cols = static_cast<Eigen::Index>(f.size());
    if (static_cast<Eigen::Index>(f.size()) != cols) throw IngestionError("ragged CSV row");
    for (const auto& s : f) values.push_back(parse_number<double>(s));
    ++rows;
  });
  return Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, std::max<Eigen::Index>(cols, 0));
}

}  // namespace hydro

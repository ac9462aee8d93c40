// SPDX-License-Identifier: Apache-2.0
//
// hydro: condense a labeled graph, evaluate condensed graphs, analyze walks.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 dataset/artifact error, 4 training divergence.
#include <CLI11.hpp>
#include <Eigen/Core>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "hydro/config.hpp"
#include "hydro/distill.hpp"
#include "hydro/errors.hpp"
#include "hydro/eval.hpp"
#include "hydro/graph.hpp"
#include "hydro/spectral.hpp"

namespace fs = std::filesystem;
using namespace hydro;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIngestion = 3;
constexpr int kExitDivergence = 4;

int thread_cap() {
  if (const char* env = std::getenv("HYDRO_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
    spdlog::warn("ignoring HYDRO_THREADS='{}'", env);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void write_meta(const fs::path& artifact, const std::string& hash, const nlohmann::ordered_json& extra) {
  nlohmann::ordered_json j = {{"artifact", artifact.filename().string()}, {"config_hash", hash}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  std::ofstream out(fs::path(artifact.string() + ".meta.json"), std::ios::trunc);
  if (!out) throw Error("cannot write metadata for " + artifact.string());
  out << j.dump(2) << '\n';
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Validation messages start with the field name; report it as the flag.
[[noreturn]] void rethrow_as_flag(const ConfigError& e) {
  std::string msg = e.what();
  const auto colon = msg.find(':');
  if (colon != std::string::npos) {
    std::string field = msg.substr(0, colon);
    if (field.find(' ') == std::string::npos) {
      std::replace(field.begin(), field.end(), '_', '-');
      msg = "--" + field + msg.substr(colon);
    }
  }
  throw ConfigError(msg);
}

// --- distill -------------------------------------------------------------------

struct DistillArgs {
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> overrides;
};

void add_distill(CLI::App& app, DistillArgs& args, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("distill", "Condense a dataset into a small synthetic graph");
  cmd->add_option("--config", args.config_file, "TOML run configuration; flags override it")->check(CLI::ExistingFile);
  const std::vector<std::pair<std::string, std::string>> flags = {
      {"dataset", "Dataset directory"},
      {"output", "Output directory (default: out)"},
      {"ratio", "Reduction rate r; the graph keeps floor(r n) nodes"},
      {"epochs", "Training epochs"},
      {"outer", "SGC re-initializations per epoch"},
      {"inner", "Synthetic updates per SGC trajectory"},
      {"lr_feat", "Step size for condensed features"},
      {"lr_struct", "Step size for the structure generator"},
      {"lr_model", "Step size of the inner SGC"},
      {"beta", "Regularization weight"},
      {"momentum", "Riemannian momentum"},
      {"curvature", "Ball curvature c"},
      {"weight_decay", "Riemannian weight decay"},
      {"gap_weight", "Weight of the spectral-gap term"},
      {"gap_floor", "Denominator floor of the spectral-gap term"},
      {"sample_size", "Nodes per sampled subgraph"},
      {"sgc_hops", "SGC propagation hops"},
      {"hidden", "Generator hidden width"},
      {"layers", "Generator layers"},
      {"probe_every", "Validation probe cadence in epochs (0 disables)"},
      {"probe_epochs", "GCN epochs per validation probe"},
      {"seed", "Random seed"},
  };
  for (const auto& [key, help] : flags) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    cmd->add_option_function<std::string>(
        flag, [&args, key = key](const std::string& v) { args.overrides.emplace_back(key, v); }, help);
  }
  cmd->callback([&action, &args] {
    action = [&args] {
      config::RunConfig cfg;
      cfg.output = "out";
      if (!args.config_file.empty()) cfg = config::load(args.config_file);
      if (cfg.output.empty()) cfg.output = "out";
      for (const auto& [k, v] : args.overrides) {
        try {
          config::set_field(cfg, k, v);
        } catch (const ConfigError& e) {
          rethrow_as_flag(e);
        }
      }
      try {
        cfg.distill.validate();
      } catch (const ConfigError& e) {
        rethrow_as_flag(e);
      }
      if (cfg.dataset.empty()) throw ConfigError("--dataset is required");

      const Graph g = load_dataset(cfg.dataset);
      const std::string hash = config::config_hash(cfg);
      const fs::path out(cfg.output);
      fs::create_directories(out);
      config::save(cfg, out / "config.toml");

      std::ofstream log(out / "run_log.jsonl", std::ios::trunc);
      spdlog::info("distilling {} ({} nodes) at ratio {} for {} epochs; config {}", cfg.dataset, g.n(),
                   cfg.distill.ratio, cfg.distill.epochs, hash.substr(0, 12));
      try {
        distill::DistillResult res = distill::distill(g, cfg.distill, [&](const distill::EpochRecord& r) {
          log << distill::to_json_line(r) << '\n';
          log.flush();
          if (r.probe_val_acc) {
            spdlog::info("epoch {:4d}  L_total {:.4f}  g_syn {:.4f}  g_sub {:.4f}  val {:.4f}", r.epoch, r.l_total,
                         r.g_syn, r.g_sub, *r.probe_val_acc);
          }
        });
        res.graph.config_hash = hash;
        save_condensed(res.graph, out / "condensed.json");
        hypernet::save_checkpoint(res.params, out / "hypernet.json");
        spdlog::info("wrote {} ({} nodes, best epoch {})", (out / "condensed.json").string(), res.graph.n(),
                     res.best_epoch);
      } catch (const distill::DivergenceError& e) {
        if (e.last_good()) {
          CondensedGraph cg = *e.last_good();
          cg.config_hash = hash;
          save_condensed(cg, out / "condensed.last_good.json");
          spdlog::error("diverged at epoch {}; last finite state saved to condensed.last_good.json", e.epoch());
        }
        throw;
      }
      return kExitOk;
    };
  });
}

// --- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string condensed, dataset, output = "results.json", tasks = "nc", baseline;
  double ratio = 0.0;
  int runs = 10, jobs = 1, epochs = 500;
  std::uint64_t seed = 0;
  bool force = false, whole = false;
};

void add_eval(CLI::App& app, EvalArgs& a, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("eval", "Evaluate a condensed graph on the original dataset");
  cmd->add_option("--condensed", a.condensed, "condensed.json to evaluate");
  cmd->add_option("--dataset", a.dataset, "Dataset directory")->required();
  cmd->add_option("--task", a.tasks, "Comma-separated tasks: nc, lp");
  cmd->add_option("--runs", a.runs, "Repetitions")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "Base seed; run r uses seed + r");
  cmd->add_option("--jobs", a.jobs, "Runs evaluated in parallel")->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", a.epochs, "GCN training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--output", a.output, "results.json path");
  cmd->add_flag("--force", a.force, "Evaluate even when the artifact's config hash does not match its config.toml");
  cmd->add_flag("--whole", a.whole, "Evaluate the whole dataset as its own condensed graph");
  cmd->add_option("--baseline", a.baseline, "Evaluate a baseline instead of an artifact")->check(CLI::IsMember({"random"}));
  cmd->add_option("--ratio", a.ratio, "Reduction rate for --baseline");
  cmd->callback([&action, &a] {
    action = [&a] {
      const int sources = !a.condensed.empty() + a.whole + !a.baseline.empty();
      if (sources != 1) throw ConfigError("give exactly one of --condensed, --whole, --baseline");
      std::vector<eval::Task> tasks;
      for (const auto& t : split_list(a.tasks)) {
        if (t == "nc") tasks.push_back(eval::Task::NodeClassification);
        else if (t == "lp") tasks.push_back(eval::Task::LinkPrediction);
        else throw ConfigError(fmt::format("--task: unknown task '{}'", t));
      }
      if (tasks.empty()) throw ConfigError("--task: no task given");
      if (!a.baseline.empty() && !(a.ratio > 0.0 && a.ratio <= 1.0)) throw ConfigError("--ratio: must lie in (0, 1]");

      const Graph g = load_dataset(a.dataset);
      eval::EvalOptions opt;
      opt.runs = a.runs;
      opt.seed = a.seed;
      opt.jobs = std::min(a.jobs, thread_cap());
      opt.gcn.epochs = a.epochs;

      CondensedGraph cg;
      std::string hash;
      if (!a.condensed.empty()) {
        cg = load_condensed(a.condensed);
        if (cg.dim() != g.dim()) {
          throw IngestionError(fmt::format("{} has feature width {}, dataset has {}", a.condensed, cg.dim(), g.dim()));
        }
        hash = cg.config_hash;
        const fs::path cfg_file = fs::path(a.condensed).parent_path() / "config.toml";
        if (fs::exists(cfg_file)) {
          const std::string expected = config::config_hash(config::load(cfg_file));
          if (expected != cg.config_hash) {
            if (!a.force) {
              throw ConfigError(fmt::format("config hash of {} ({}) does not match {} ({}); use --force to override",
                                            a.condensed, cg.config_hash, cfg_file.string(), expected));
            }
            spdlog::warn("config hash mismatch ignored (--force)");
          }
        }
      } else if (a.whole) {
        cg = as_condensed(g);
        hash = config::sha256_hex(fmt::format("{{\"whole\":{}}}", nlohmann::json(a.dataset).dump()));
      } else {
        hash = config::sha256_hex(fmt::format("{{\"baseline\":\"random\",\"dataset\":{},\"ratio\":{}}}",
                                              nlohmann::json(a.dataset).dump(), format_double(a.ratio)));
      }

      std::vector<eval::EvalResult> results;
      for (auto t : tasks) {
        eval::EvalResult r;
        if (!a.baseline.empty()) {
          if (t != eval::Task::NodeClassification) throw ConfigError("--baseline supports --task nc only");
          r = eval::baseline_random(g, a.ratio, opt);
        } else if (t == eval::Task::NodeClassification) {
          r = eval::eval_nc(cg, g, opt);
        } else {
          r = eval::eval_lp(cg, g, opt);
        }
        r.config_hash = hash;
        fmt::print("{}: mean {:.4f} std {:.4f} over {} runs\n", eval::task_name(t), r.mean, r.std, r.runs());
        results.push_back(std::move(r));
      }
      eval::write_results(results, a.output);
      return kExitOk;
    };
  });
}

// --- analyze -------------------------------------------------------------------

struct AnalyzeArgs {
  std::string graph, condensed, metric = "commute", output, compare;
  double cap = spectral::kDefaultCap;
  int start = 0;
};

void add_analyze(CLI::App& app, AnalyzeArgs& a, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("analyze", "Commute times, flow distances and walk diagnostics");
  cmd->add_option("--graph", a.graph, "Dataset directory");
  cmd->add_option("--condensed", a.condensed, "condensed.json");
  cmd->add_option("--metric", a.metric, "commute, flow or diagnostics")
      ->check(CLI::IsMember({"commute", "flow", "diagnostics"}));
  cmd->add_option("--cap", a.cap, "Commute-time cap")->check(CLI::PositiveNumber);
  cmd->add_option("--output", a.output, "CSV path (default: <metric>.csv)");
  cmd->add_option("--compare", a.compare, "Dataset directory to compare a --condensed graph's commute times against");
  cmd->add_option("--start", a.start, "Start node of the total-variation curve");
  cmd->callback([&action, &a] {
    action = [&a] {
      if (a.graph.empty() == a.condensed.empty()) throw ConfigError("give exactly one of --graph, --condensed");
      const Eigen::MatrixXd adj =
          a.graph.empty() ? load_condensed(a.condensed).adjacency : dense_adjacency(load_dataset(a.graph));
      const std::string source = a.graph.empty() ? a.condensed : a.graph;
      const std::string hash = config::sha256_hex(fmt::format("{{\"cap\":{},\"metric\":{},\"source\":{}}}",
                                                              format_double(a.cap), nlohmann::json(a.metric).dump(),
                                                              nlohmann::json(source).dump()));
      const fs::path out = a.output.empty() ? fs::path(a.metric + ".csv") : fs::path(a.output);

      if (a.metric == "commute") {
        const Eigen::MatrixXd capped = spectral::commute_heatmap_export(adj, a.cap, out);
        write_meta(out, hash, {{"metric", "commute"}, {"cap", a.cap}, {"source", source}});
        fmt::print("commute: {}x{} matrix written to {}\n", capped.rows(), capped.cols(), out.string());
        if (!a.compare.empty()) {
          if (a.condensed.empty()) throw ConfigError("--compare needs --condensed");
          const eval::CommuteComparison cmp = eval::compare_commute(adj, dense_adjacency(load_dataset(a.compare)), a.cap);
          const fs::path orig = out.parent_path() / (out.stem().string() + ".original.csv");
          write_matrix_csv(cmp.original_capped, orig);
          write_meta(orig, hash, {{"metric", "commute"}, {"cap", a.cap}, {"source", a.compare}});
          fmt::print("commute score: {}\n", format_double(cmp.score));
        }
      } else if (a.metric == "flow") {
        const Eigen::MatrixXd d = spectral::flow_distance(adj);
        write_matrix_csv(d, out);
        write_meta(out, hash, {{"metric", "flow"}, {"source", source}});
        fmt::print("flow: {}x{} matrix written to {}\n", d.rows(), d.cols(), out.string());
      } else {
        const spectral::Diagnostics d = spectral::walk_diagnostics(adj, a.start);
        fmt::print("spectral gap: {}\nlambda2: {}\nmixing estimate: {}\nnu2: {}\ncheeger bounds: [{}, {}]\n",
                   format_double(d.gap), format_double(d.lambda2), format_double(d.mixing_estimate),
                   format_double(d.nu2), format_double(d.cheeger_lower), format_double(d.cheeger_upper));
        // Commute-time scale 2 / (pi_i pi_j gap) for the highest-degree pair, as a reference figure.
        const Eigen::VectorXd deg = adj.rowwise().sum();
        const double pi_max = deg.maxCoeff() / deg.sum();
        fmt::print("tau (2 / (pi_max^2 gap)): {}\n", format_double(2.0 / (pi_max * pi_max * d.gap)));
        Eigen::MatrixXd curve(static_cast<Eigen::Index>(d.tv_curve.size()), 2);
        for (std::size_t t = 0; t < d.tv_curve.size(); ++t) {
          curve(static_cast<Eigen::Index>(t), 0) = static_cast<double>(t);
          curve(static_cast<Eigen::Index>(t), 1) = d.tv_curve[t];
        }
        write_matrix_csv(curve, out);
        write_meta(out, hash,
                   {{"metric", "diagnostics"}, {"source", source}, {"columns", {"t", "total_variation"}},
                    {"spectral_gap", d.gap}, {"mixing_estimate", d.mixing_estimate},
                    {"cheeger_lower", d.cheeger_lower}, {"cheeger_upper", d.cheeger_upper}});
      }
      return kExitOk;
    };
  });
}

// --- validate ------------------------------------------------------------------

void add_validate(CLI::App& app, std::string& dataset, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("validate", "Load and check a dataset directory");
  cmd->add_option("--dataset", dataset, "Dataset directory")->required();
  cmd->callback([&action, &dataset] {
    action = [&dataset] {
      const Graph g = load_dataset(dataset);
      fmt::print("nodes {}\nedges {}\nclasses {}\nfeatures {}\nsplits {}/{}/{}\n", g.n(), g.num_edges(),
                 g.num_classes, g.dim(), g.splits.train.size(), g.splits.val.size(), g.splits.test.size());
      return kExitOk;
    };
  });
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("hydro"));
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

  CLI::App app{"hydro: hyperbolic graph condensation with spectral-gap alignment"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::function<int()> action;
  DistillArgs distill_args;
  EvalArgs eval_args;
  AnalyzeArgs analyze_args;
  std::string validate_dataset;
  add_distill(app, distill_args, action);
  add_eval(app, eval_args, action);
  add_analyze(app, analyze_args, action);
  add_validate(app, validate_dataset, action);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);

  const int threads = thread_cap();
  Eigen::setNbThreads(threads);
#ifdef _OPENMP
  omp_set_num_threads(threads);
#endif

  try {
    return action ? action() : kExitConfig;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const IngestionError& e) {
    spdlog::error("{}", e.what());
    return kExitIngestion;
  } catch (const TrainingError& e) {
    spdlog::error("training diverged at epoch {}: {}", e.epoch(), e.what());
    return kExitDivergence;
  } catch (const ContractError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
}

// c2hm-lab: training, experiments, planning and property checks.
//
// Settings are resolved in this order, later wins: built-in defaults,
// --config file, key=value arguments, then the --seed and --out flags.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "c2hm/config.hpp"
#include "c2hm/errors.hpp"
#include "c2hm/experiments.hpp"
#include "c2hm/fetch.hpp"
#include "c2hm/report.hpp"
#include "c2hm/verify.hpp"

using namespace c2hm;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
  std::vector<std::string> args;  // positionals: command arguments and key=value overrides
  bool print_config = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "flat key = value config file");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&c](std::uint64_t s) { c.seed = s, c.seed_set = true; }, "master seed");
  cmd->add_option("--out", c.out_dir, "output directory");
  cmd->add_flag("--print-config", c.print_config, "print the resolved config and exit");
  cmd->add_option("args", c.args, "arguments and key=value overrides");
}

// Splits positionals into plain arguments and applies key=value overrides.
std::vector<std::string> resolve(const Common& c, RunConfig& config) {
  if (!c.config_path.empty()) apply_config_file(config, c.config_path);
  std::vector<std::string> plain;
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& a : c.args) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) {
      plain.push_back(a);
    } else {
      overrides.emplace_back(a.substr(0, eq), a.substr(eq + 1));
    }
  }
  // Validate every key before applying any.
  for (const auto& [k, v] : overrides) get_config_value(config, k);
  for (const auto& [k, v] : overrides) set_config_value(config, k, v);
  if (c.seed_set) config.seed = c.seed;
  if (!c.out_dir.empty()) config.out_dir = c.out_dir;
  return plain;
}

std::string path_in(const RunConfig& config, const std::string& name) {
  return (std::filesystem::path(config.out_dir) / name).string();
}

std::string emit(ExperimentReport& rep, const RunConfig& config, const std::string& name, const std::string& text) {
  const std::string p = path_in(config, name);
  write_text_file(p, text);
  rep.artifacts.push_back(p);
  return p;
}

int finish(const ExperimentReport& rep) {
  std::cout << rep.text();
  std::cout << (rep.all_pass() ? "all checks passed" : "some checks failed") << "\n";
  return rep.all_pass() ? 0 : 1;
}

std::string g4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ConfigError("--seeds: bad seed '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--seeds: empty list");
  return out;
}

LabeledDataset load_data(const RunConfig& config) {
  const std::string dir = std::string(C2HM_SOURCE_DIR) + "/data/mnist-subset/";
  const std::string images = config.mnist_images.empty() ? dir + "images-idx3-ubyte.gz" : config.mnist_images;
  const std::string labels = config.mnist_labels.empty() ? dir + "labels-idx1-ubyte.gz" : config.mnist_labels;
  for (const auto& p : {images, labels}) {
    if (!std::filesystem::exists(p)) {
      throw ConfigError("missing data file " + p + "; run `c2hm-lab fetch-mnist` and point mnist_images/mnist_labels at the result");
    }
  }
  return load_mnist_idx(images, labels);
}

int cmd_train(const std::vector<std::string>& plain, const std::string& seeds_text, RunConfig& config) {
  std::vector<ModelKind> kinds;
  const std::string which = plain.empty() ? "both" : plain.front();
  if (plain.size() > 1) throw ConfigError("train takes one model argument");
  if (which == "both") {
    kinds = {ModelKind::C2hm, ModelKind::WakeSleep};
  } else {
    kinds = {parse_model_kind(which)};
  }
  const auto seeds = seeds_text.empty() ? std::vector<std::uint64_t>{config.seed} : parse_seeds(seeds_text);

  const LabeledDataset all = load_data(config);
  const MnistSplits splits = make_mnist_splits(all, config.train_count, config.test_count, config.validation_fraction);
  ModelConfig model = config.model;
  model.D = all.dim();
  std::cout << "data: " << splits.train.size() << " train, " << splits.validation.size() << " validation, "
            << splits.test.size() << " test images\n";

  ProbeConfig pc = config.probe;
  pc.seed = config.seed;
  const ProbeClassifier probe = train_probe(all.slice(0, config.train_count, "probe-train"), splits.test, pc);
  std::cout << "probe accuracy " << g4(probe.accuracy) << "\n";

  ExperimentReport rep;
  rep.id = "train";
  std::vector<MetricsRecord> records;
  std::string epochs_csv;
  double worst_seconds = 0.0;
  std::vector<std::pair<std::uint64_t, C2hmParams>> c2hm_models;
  for (std::uint64_t seed : seeds) {
    for (ModelKind kind : kinds) {
      TrainConfig tc = config.train;
      tc.seed = seed;
      const std::string name = model_kind_name(kind);
      auto on_epoch = [&](const EpochLog& l) {
        std::cout << name << " seed " << seed << " epoch " << l.epoch << " train " << g4(l.train.total)
                  << " validation " << g4(l.validation_total) << " (" << g4(l.seconds) << " s)\n";
      };
      TrainRun run = train_and_evaluate(kind, tc, model, config.weights, splits, probe, config.gf_per_class, on_epoch);
      const auto& m = run.metrics;
      std::cout << name << " seed " << seed << ": RE " << g4(m.re) << " CC " << g4(m.cc) << " GF " << g4(m.gf)
                << " LC " << g4(m.lc) << " (" << g4(run.seconds) << " s)\n";
      worst_seconds = std::max(worst_seconds, run.seconds);
      const std::string ckpt = path_in(config, name + "-seed" + std::to_string(seed) + ".ckpt");
      std::filesystem::create_directories(config.out_dir);
      save_checkpoint(run.result.params, ckpt);
      rep.artifacts.push_back(ckpt);
      const std::string log = epoch_log_csv(name, seed, run.result.logs);
      epochs_csv += epochs_csv.empty() ? log : log.substr(log.find('\n', log.find('\n') + 1) + 1);
      records.push_back(m);
      if (kind == ModelKind::C2hm) c2hm_models.emplace_back(seed, std::move(run.result.params));
    }
  }
  emit(rep, config, "metrics.csv", metrics_csv(records));
  emit(rep, config, "epochs.csv", epochs_csv);

  auto band = [&](const std::string& model_name, double lo, double hi) {
    bool ok = true, any = false;
    std::string detail;
    for (const auto& r : records) {
      if (r.model != model_name) continue;
      any = true;
      ok = ok && r.re >= lo && r.re <= hi;
      detail += g4(r.re) + " ";
    }
    if (any) {
      rep.verdicts.push_back({"C1", "RE(" + model_name + ") in [" + g4(lo) + ", " + g4(hi) + "]", ok, "RE " + detail});
    }
  };
  band("c2hm", 0.03, 0.08);
  band("wakesleep", 0.04, 0.09);
  if (kinds.size() == 2) {
    struct Rule {
      const char* name;
      std::function<bool(const MetricsRecord&, const MetricsRecord&)> holds;
    };
    const Rule rules[] = {
        {"RE(c2hm) < RE(wakesleep)", [](const auto& c, const auto& w) { return c.re < w.re; }},
        {"CC(c2hm) <= 0.1 CC(wakesleep)", [](const auto& c, const auto& w) { return c.cc <= 0.1 * w.cc; }},
        {"GF(c2hm) > GF(wakesleep)", [](const auto& c, const auto& w) { return c.gf > w.gf; }},
        {"LC(c2hm) < LC(wakesleep)", [](const auto& c, const auto& w) { return c.lc < w.lc; }},
    };
    std::size_t joint = 0;
    for (std::size_t i = 0; i + 1 < records.size(); i += 2) {
      bool all = true;
      for (const auto& rule : rules) all = all && rule.holds(records[i], records[i + 1]);
      joint += all;
    }
    rep.verdicts.push_back({"C1", "all four relations hold jointly", 2 * joint > seeds.size(),
                            std::to_string(joint) + "/" + std::to_string(seeds.size()) + " seeds (majority needed)"});
    for (const auto& rule : rules) {
      std::size_t wins = 0;
      for (std::size_t i = 0; i + 1 < records.size(); i += 2) wins += rule.holds(records[i], records[i + 1]);
      const std::size_t n = seeds.size();
      rep.verdicts.push_back({"C1", rule.name, 2 * wins > n,
                              std::to_string(wins) + "/" + std::to_string(n) + " seeds (majority needed)"});
    }
  }
  rep.verdicts.push_back({"C1", "runtime per model <= 30 min", worst_seconds <= 1800.0,
                          "slowest run " + g4(worst_seconds) + " s"});

  // Inference loop on held-out images with the first C2HM model.
  if (!c2hm_models.empty()) {
    const auto& [seed, params] = c2hm_models.front();
    const LoopStudy s = run_loop_study(params, splits.test.images, 10, config.loop, seed);
    std::size_t conv = 0, max_used = 0;
    for (const auto& r : s.amortized) {
      conv += r.converged;
      max_used = std::max(max_used, r.iterations_used);
    }
    rep.verdicts.push_back({"C4", "trained-model amortized loop converges (tol " + g4(config.loop.fixed_point.tol) + ")",
                            conv == s.amortized.size(),
                            std::to_string(conv) + "/" + std::to_string(s.amortized.size()) +
                                " images, max iterations " + std::to_string(max_used)});
    double worst = 1.0;
    for (const auto& t : s.gradient_traces) worst = std::min(worst, entropy_descent_check(t));
    rep.verdicts.push_back({"C5", "entropy proxy non-increasing on gradient-loop traces", worst >= 0.95,
                            "lowest fraction " + g4(worst) + " over " + std::to_string(s.gradient_traces.size()) +
                                " traces"});
    emit(rep, config, "trace-amortized.csv", s.amortized_traces.front().to_csv());
    emit(rep, config, "trace-gradient.csv", s.gradient_traces.front().to_csv());
  }
  return finish(rep);
}

int cmd_exp_curse(RunConfig& config) {
  ExperimentReport rep;
  rep.id = "exp-curse";
  CurseConfig c = config.curse;
  c.seed = config.seed;
  const CurseResult r = run_curse_experiment(c);
  CurseConfig clean = c;
  clean.sigma = 0.0;
  const CurseResult z = run_curse_experiment(clean);
  std::cout << "bottom-up MSE " << g4(r.mse_bottom_up) << ", inverted MSE " << g4(r.mse_inverted)
            << ", least-squares MSE " << g4(r.mse_least_squares) << ", ratio " << g4(r.ratio) << " ("
            << g4(r.seconds + z.seconds) << " s)\n";
  emit(rep, config, "curse.csv", curse_csv(r));
  emit(rep, config, "curse-noiseless.csv", curse_csv(z));
  rep.verdicts.push_back({"C2", "MSE(inverted) <= 0.1 MSE(bottom-up)", r.mse_inverted <= 0.1 * r.mse_bottom_up,
                          "inverted " + g4(r.mse_inverted) + ", bottom-up " + g4(r.mse_bottom_up) + ", ratio " +
                              g4(r.ratio)});
  rep.verdicts.push_back({"C2", "noiseless MSE(inverted) < 1e-4", z.mse_inverted < 1e-4,
                          "inverted " + g4(z.mse_inverted) + ", least-squares oracle " + g4(z.mse_least_squares)});
  rep.verdicts.push_back({"C2", "runtime <= 2 min", r.seconds + z.seconds <= 120.0, g4(r.seconds + z.seconds) + " s"});
  return finish(rep);
}

int cmd_exp_delta(RunConfig& config) {
  ExperimentReport rep;
  rep.id = "exp-delta";
  DeltaConfig dc = config.delta;
  dc.seed = config.seed;
  const auto data = make_delta_dataset(config.seed);
  const DeltaSweepResult sweep = run_delta_sweep(dc, config.delta_betas, data, config.delta_burn_in);
  double seconds = 0.0;
  std::vector<Series> series;
  for (const auto& e : sweep.entries) {
    std::cout << "beta " << g4(e.beta) << ": variance " << g4(e.initial_var) << " -> " << g4(e.final_var)
              << ", non-increasing fraction " << g4(e.descent_fraction) << "\n";
    seconds += e.seconds;
    Series s{"beta = " + g4(e.beta), {}, {}};
    for (std::size_t i = 0; i < e.trace.size(); ++i) {
      s.x.push_back(static_cast<double>(i + 1));
      s.y.push_back(e.trace.iterations[i].latent_var_mean);
    }
    series.push_back(std::move(s));
  }
  emit(rep, config, "delta.csv", delta_csv(sweep));
  emit(rep, config, "delta.svg",
       svg_line_plot("Latent variance under the variational bottleneck", "iteration", "mean latent variance", series,
                     true, utc_now()));
  const auto main_it = std::find_if(sweep.entries.begin(), sweep.entries.end(),
                                    [&](const DeltaSweepEntry& e) { return e.beta == dc.beta; });
  if (main_it == sweep.entries.end()) throw ConfigError("delta.betas must include the main beta " + g4(dc.beta));
  const auto& m = *main_it;
  rep.verdicts.push_back({"C3", "variance non-increasing after burn-in (beta " + g4(m.beta) + ")",
                          m.descent_fraction >= 0.95, "fraction " + g4(m.descent_fraction)});
  rep.verdicts.push_back({"C3", "final variance < 5% of initial (beta " + g4(m.beta) + ")",
                          m.final_var < 0.05 * m.initial_var, "ratio " + g4(m.final_var / m.initial_var)});
  const char* dir = sweep.direction > 0 ? "deepens with beta" : sweep.direction < 0 ? "weakens with beta" : "flat";
  rep.verdicts.push_back({"C3", "collapse depth monotone in beta", sweep.monotone, std::string("collapse ") + dir});
  rep.verdicts.push_back({"C3", "runtime <= 2 min", seconds <= 120.0, g4(seconds) + " s"});
  return finish(rep);
}

int cmd_plan(const std::vector<std::string>& plain, long random_seed, bool sweep, RunConfig& config) {
  ExperimentReport rep;
  rep.id = "plan";
  PlannerConfig pc = config.planner;
  pc.seed = config.seed;
  if (sweep) {
    std::vector<std::pair<std::string, PlanReport>> reports;
    std::size_t success = 0, within = 0;
    double seconds = 0.0;
    for (std::size_t s = 1; s <= config.random_maps; ++s) {
      const GridWorld g = make_gridworld(s, config.map_density);
      auto r = run_plan(g, pc);
      success += r.plan.collision_free;
      within += r.pass;
      seconds += r.seconds;
      std::cout << "map " << s << ": " << (r.plan.collision_free ? "free" : "collision") << ", length "
                << r.plan.length << " vs " << r.plan.oracle_length << "\n";
      reports.emplace_back("random-" + std::to_string(s), std::move(r));
    }
    emit(rep, config, "plan-summary.csv", plan_summary_csv(reports));
    const double n = static_cast<double>(config.random_maps);
    rep.verdicts.push_back({"C7", "random maps collision-free >= 90%", success >= 0.9 * n,
                            std::to_string(success) + "/" + std::to_string(config.random_maps)});
    rep.verdicts.push_back({"C7", "length <= 1.5x optimum on successes", within == success,
                            std::to_string(within) + "/" + std::to_string(success) + " successes"});
    rep.verdicts.push_back({"C7", "runtime <= 2 min", seconds <= 120.0, g4(seconds) + " s"});
    return finish(rep);
  }
  GridWorld grid;
  std::string name;
  if (random_seed >= 0) {
    if (!plain.empty()) throw ConfigError("plan takes a scenario file or --random, not both");
    grid = make_gridworld(static_cast<std::uint64_t>(random_seed), config.map_density);
    name = "random-" + std::to_string(random_seed);
  } else {
    if (plain.size() != 1) throw ConfigError("plan needs one scenario file (or --random N / --random-sweep)");
    grid = load_scenario(plain.front());
    name = std::filesystem::path(plain.front()).stem().string();
  }
  const BfsResult oracle = bfs_shortest_path(grid);
  const PlanReport r = run_plan(grid, pc);
  std::cout << name << ": " << (r.plan.collision_free ? "collision-free" : "collides") << ", length " << r.plan.length
            << ", optimum " << r.plan.oracle_length << ", expansions " << r.plan.expansions << " vs BFS "
            << r.plan.oracle_expanded << "\n";
  emit(rep, config, "plan.csv", plan_path_csv(r.plan));
  emit(rep, config, "plan-summary.csv", plan_summary_csv({{name, r}}));
  emit(rep, config, "plan.svg", svg_plan(grid, oracle.path, r.plan, "Planned path: " + name, utc_now()));
  rep.verdicts.push_back({"C7", name + " collision-free with length <= 1.5x optimum", r.pass,
                          "length " + std::to_string(r.plan.length) + ", optimum " +
                              std::to_string(r.plan.oracle_length) + ", ratio " + g4(r.ratio)});
  return finish(rep);
}

int cmd_verify(bool inject, RunConfig& config) {
  VerifyOptions vo;
  vo.seed = config.seed;
  vo.inject_grad_bug = inject;
  return finish(run_verify(vo));
}

int cmd_fetch(const std::string& mirror_flag, RunConfig& config) {
  const std::string mirror = resolve_mirror(mirror_flag.empty() ? config.mirror_url : mirror_flag);
  const std::string dir = path_in(config, "mnist");
  std::cout << "fetching from " << mirror << "\n";
  for (const auto& f : fetch_mnist(mirror, dir)) {
    std::cout << "wrote " << f.path << " (" << f.bytes << " bytes, " << f.items << " items)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"C2HM lab: cycle-consistent Helmholtz machine experiments"};
  app.require_subcommand(1);
  Common common;

  auto* train = app.add_subcommand("train", "train c2hm, wakesleep or both and evaluate RE/CC/GF/LC");
  std::string seeds;
  train->add_option("--seeds", seeds, "comma-separated seeds (overrides --seed)");
  auto* curse = app.add_subcommand("exp-curse", "bottom-up regression vs inverted inference");
  auto* delta = app.add_subcommand("exp-delta", "latent collapse under the variational bottleneck");
  auto* plan = app.add_subcommand("plan", "goal-seeded path planning on a scenario or random map");
  long random_seed = -1;
  bool sweep = false;
  plan->add_option("--random", random_seed, "plan on the random map with this seed");
  plan->add_flag("--random-sweep", sweep, "plan on random maps 1..plan.random_maps");
  auto* verify = app.add_subcommand("verify", "run the property suite");
  bool inject = false;
  verify->add_flag("--inject-grad-bug", inject, "add a function with a broken gradient");
  auto* fetch = app.add_subcommand("fetch-mnist", "download MNIST IDX files from a mirror");
  std::string mirror;
  fetch->add_option("--mirror", mirror, "mirror URL (default: $C2HM_MNIST_MIRROR or the public mirror)");
  for (auto* cmd : {train, curse, delta, plan, verify, fetch}) add_common(cmd, common);

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig config;
    const auto plain = resolve(common, config);
    if (common.print_config) {
      std::cout << dump_config(config);
      return 0;
    }
    if (train->parsed()) return cmd_train(plain, seeds, config);
    if (!plain.empty() && !plan->parsed()) throw ConfigError("unexpected argument '" + plain.front() + "'");
    if (curse->parsed()) return cmd_exp_curse(config);
    if (delta->parsed()) return cmd_exp_delta(config);
    if (plan->parsed()) return cmd_plan(plain, random_seed, sweep, config);
    if (verify->parsed()) return cmd_verify(inject, config);
    if (fetch->parsed()) return cmd_fetch(mirror, config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

#include "c2hm/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>
#include <type_traits>

#include "c2hm/errors.hpp"

namespace c2hm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

struct Entry {
  std::string help;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename F>
Entry real(std::string help, F field) {
  return {std::move(help),
          [field](RunConfig& c, const std::string& k, const std::string& v) { field(c) = parse_double(k, v); },
          [field](const RunConfig& c) { return num(field(c)); }};
}

template <typename F>
Entry count(std::string help, F field) {
  return {std::move(help),
          [field](RunConfig& c, const std::string& k, const std::string& v) {
            field(c) = static_cast<std::remove_cvref_t<decltype(field(c))>>(parse_uint(k, v));
          },
          [field](const RunConfig& c) { return std::to_string(field(c)); }};
}

template <typename F>
Entry text(std::string help, F field) {
  return {std::move(help), [field](RunConfig& c, const std::string&, const std::string& v) { field(c) = v; },
          [field](const RunConfig& c) { return field(c); }};
}

template <typename F>
Entry activation(std::string help, F field) {
  return {std::move(help),
          [field](RunConfig& c, const std::string& k, const std::string& v) {
            try {
              field(c) = parse_activation(v);
            } catch (const std::exception& e) {
              throw ConfigError(k + ": " + e.what());
            }
          },
          [field](const RunConfig& c) { return std::string(activation_name(field(c))); }};
}

#define FIELD(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<std::pair<std::string, Entry>>& registry() {
  static const std::vector<std::pair<std::string, Entry>> r = {
      {"seed", count("master seed for every random stream", FIELD(seed))},
      {"out_dir", text("output directory", FIELD(out_dir))},
      {"mnist_images", text("IDX image file (gzip allowed); empty = bundled subset", FIELD(mnist_images))},
      {"mnist_labels", text("IDX label file (gzip allowed); empty = bundled subset", FIELD(mnist_labels))},
      {"train_count", count("leading images used for training (incl. validation)", FIELD(train_count))},
      {"test_count", count("trailing images held out for metrics and the probe", FIELD(test_count))},
      {"validation_fraction", real("tail of the training subset used for early stopping", FIELD(validation_fraction))},
      {"mirror_url", text("MNIST mirror for fetch-mnist (overrides C2HM_MNIST_MIRROR)", FIELD(mirror_url))},
      {"model.d", count("content dimension", FIELD(model.d))},
      {"model.k", count("latent dimension", FIELD(model.k))},
      {"model.hidden", count("hidden width", FIELD(model.hidden))},
      {"model.hidden_layers", count("hidden layers per network", FIELD(model.hidden_layers))},
      {"model.hidden_activation", activation("identity, sigmoid or tanh", FIELD(model.hidden_activation))},
      {"model.decoder_output", activation("decoder output activation", FIELD(model.decoder_output))},
      {"loss.lambda_cyc", real("loop reconstruction weight", FIELD(weights.lambda_cyc))},
      {"loss.lambda_z", real("latent alignment weight", FIELD(weights.lambda_z))},
      {"loss.beta", real("KL weight of the variational objective", FIELD(weights.beta))},
      {"train.epochs", count("maximum epochs", FIELD(train.epochs))},
      {"train.batch_size", count("minibatch size", FIELD(train.batch_size))},
      {"train.lr", real("Adam learning rate", FIELD(train.lr))},
      {"train.patience", count("early stopping patience (epochs)", FIELD(train.patience))},
      {"train.min_delta", real("early stopping minimum improvement", FIELD(train.min_delta))},
      {"probe.hidden", count("probe hidden width", FIELD(probe.hidden))},
      {"probe.epochs", count("probe epochs", FIELD(probe.epochs))},
      {"probe.lr", real("probe learning rate", FIELD(probe.lr))},
      {"probe.accuracy_floor", real("minimum probe test accuracy", FIELD(probe.accuracy_floor))},
      {"metrics.gf_per_class", count("generated samples per class for GF", FIELD(gf_per_class))},
      {"loop.eta", real("half-cycle gradient step size", FIELD(loop.eta))},
      {"loop.kappa", real("amortized step residual gain", FIELD(loop.kappa))},
      {"loop.tol", real("fixed-point tolerance on the step norm", FIELD(loop.fixed_point.tol))},
      {"loop.max_iter", count("fixed-point iteration cap", FIELD(loop.fixed_point.max_iter))},
      {"curse.D", count("context dimension", FIELD(curse.D))},
      {"curse.d", count("content dimension", FIELD(curse.d))},
      {"curse.k", count("latent dimension", FIELD(curse.k))},
      {"curse.N", count("samples", FIELD(curse.N))},
      {"curse.sigma", real("observation noise sd", FIELD(curse.sigma))},
      {"curse.train_fraction", real("leading fraction used for training", FIELD(curse.train_fraction))},
      {"curse.epochs", count("training epochs for both models", FIELD(curse.epochs))},
      {"curse.batch_size", count("minibatch size", FIELD(curse.batch_size))},
      {"curse.lr", real("Adam learning rate", FIELD(curse.lr))},
      {"curse.eta", real("half-cycle step size", FIELD(curse.eta))},
      {"curse.tol", real("fixed-point tolerance", FIELD(curse.loop.tol))},
      {"curse.max_iter", count("fixed-point iteration cap", FIELD(curse.loop.max_iter))},
      {"delta.iterations", count("bottleneck iterations", FIELD(delta.iterations))},
      {"delta.k", count("latent dimension", FIELD(delta.k))},
      {"delta.hidden", count("hidden width", FIELD(delta.hidden))},
      {"delta.lr", real("Adam learning rate", FIELD(delta.lr))},
      {"delta.obs_sd", real("observation sd of the likelihood", FIELD(delta.obs_sd))},
      {"delta.burn_in", count("iterations skipped by the descent check", FIELD(delta_burn_in))},
      {"delta.betas",
       {"comma-separated KL weights for the sweep",
        [](RunConfig& c, const std::string& k, const std::string& v) { c.delta_betas = parse_list(k, v); },
        [](const RunConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.delta_betas.size(); ++i) s += (i ? "," : "") + num(c.delta_betas[i]);
          return s;
        }}},
      {"plan.waypoints", count("waypoints in the path code", FIELD(planner.waypoints))},
      {"plan.eta", real("gradient step size", FIELD(planner.eta))},
      {"plan.max_iter", count("gradient steps per restart", FIELD(planner.max_iter))},
      {"plan.restarts", count("initializations", FIELD(planner.restarts))},
      {"plan.obstacle_weight", real("obstacle overlap weight", FIELD(planner.obstacle_weight))},
      {"plan.length_weight", real("squared segment length weight", FIELD(planner.length_weight))},
      {"plan.blur_start", real("initial obstacle blur width (cells)", FIELD(planner.blur_start))},
      {"plan.blur_end", real("final obstacle blur width (cells)", FIELD(planner.blur_end))},
      {"plan.blur_fraction", real("share of iterations spent shrinking the blur", FIELD(planner.blur_fraction))},
      {"plan.max_step", real("per-waypoint step cap (cells)", FIELD(planner.max_step))},
      {"plan.restart_spread", real("bulge height of restart initializations", FIELD(planner.restart_spread))},
      {"plan.raster_sigma", real("raster blob width (cells)", FIELD(planner.raster.sigma))},
      {"plan.raster_samples", count("raster samples per segment", FIELD(planner.raster.samples_per_segment))},
      {"plan.density", real("obstacle density of random maps", FIELD(map_density))},
      {"plan.random_maps", count("random maps for plan --random-sweep", FIELD(random_maps))},
  };
  return r;
}

#undef FIELD

const Entry& lookup(const std::string& key) {
  static const auto index = [] {
    std::map<std::string, const Entry*> m;
    for (const auto& [k, e] : registry()) m.emplace(k, &e);
    return m;
  }();
  const auto it = index.find(key);
  if (it == index.end()) throw ConfigError("unknown config key '" + key + "'");
  return *it->second;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const auto keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& [k, e] : registry()) out.push_back({k, e.help});
    return out;
  }();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  lookup(key).set(config, key, trim(value));
}

std::string get_config_value(const RunConfig& config, const std::string& key) { return lookup(key).get(config); }

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

void apply_config_text(RunConfig& config, const std::string& text) {
  const auto pairs = parse_config_text(text);
  // Every key is checked before any value is applied.
  for (const auto& [k, v] : pairs) lookup(k);
  for (const auto& [k, v] : pairs) set_config_value(config, k, v);
}

void apply_config_file(RunConfig& config, const std::string& path) {
  const auto bytes = read_file_bytes(path);
  apply_config_text(config, std::string(bytes.begin(), bytes.end()));
}

std::string dump_config(const RunConfig& config) {
  std::string out;
  for (const auto& [k, e] : registry()) out += k + " = " + e.get(config) + "\n";
  return out;
}

}  // namespace c2hm

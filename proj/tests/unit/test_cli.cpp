#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "c2hm/config.hpp"
#include "c2hm/errors.hpp"
#include "c2hm/metrics.hpp"
#include "c2hm/report.hpp"

using namespace c2hm;
namespace fs = std::filesystem;

namespace {

const std::string kSource = C2HM_SOURCE_DIR;

struct Run {
  int code = -1;
  std::string output;
};

std::string lab() {
  const char* p = std::getenv("C2HM_LAB");
  REQUIRE_MESSAGE(p != nullptr, "C2HM_LAB must name the c2hm-lab binary");
  return p;
}

Run run(const std::string& args) {
  Run r;
  const std::string cmd = lab() + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("c2hm_cli_" + name);
  fs::remove_all(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string drop_timestamp(const std::string& svg) {
  const auto a = svg.find("<!-- generated");
  if (a == std::string::npos) return svg;
  const auto b = svg.find("-->", a);
  return svg.substr(0, a) + svg.substr(b + 3);
}

// Tag balance with attribute quoting and comments; enough to catch broken emitters.
bool well_formed_xml(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  bool root_seen = false;
  while (i < s.size()) {
    if (s[i] != '<') {
      if (s[i] == '&') {
        const auto semi = s.find(';', i);
        if (semi == std::string::npos) return false;
        const std::string ent = s.substr(i, semi - i + 1);
        if (ent != "&amp;" && ent != "&lt;" && ent != "&gt;" && ent != "&quot;" && ent != "&apos;") return false;
      }
      ++i;
      continue;
    }
    if (s.compare(i, 4, "<!--") == 0) {
      const auto e = s.find("-->", i + 4);
      if (e == std::string::npos) return false;
      i = e + 3;
      continue;
    }
    if (s.compare(i, 2, "<?") == 0) {
      const auto e = s.find("?>", i);
      if (e == std::string::npos) return false;
      i = e + 2;
      continue;
    }
    std::size_t j = i + 1;
    char quote = 0;
    while (j < s.size() && (quote || s[j] != '>')) {
      if (quote && s[j] == quote) {
        quote = 0;
      } else if (!quote && (s[j] == '"' || s[j] == '\'')) {
        quote = s[j];
      } else if (!quote && s[j] == '<') {
        return false;
      }
      ++j;
    }
    if (j >= s.size()) return false;
    std::string tag = s.substr(i + 1, j - i - 1);
    i = j + 1;
    if (tag.empty()) return false;
    if (tag[0] == '/') {
      const std::string name = tag.substr(1, tag.find_first_of(" \t\n") - 1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
      continue;
    }
    const bool self_closing = tag.back() == '/';
    const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
    if (stack.empty()) {
      if (root_seen) return false;
      root_seen = true;
    }
    if (!self_closing) stack.push_back(name);
  }
  return root_seen && stack.empty();
}

std::size_t count_lines_with(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) n += line.find(needle) != std::string::npos;
  return n;
}

}  // namespace

TEST_CASE("config text parsing and key registry") {
  const auto kv = parse_config_text("# comment\n\nseed = 5\n  train.epochs=3  # trailing\n");
  REQUIRE(kv.size() == 2);
  CHECK(kv[0] == std::pair<std::string, std::string>{"seed", "5"});
  CHECK(kv[1] == std::pair<std::string, std::string>{"train.epochs", "3"});
  CHECK_THROWS_AS(parse_config_text("no equals sign\n"), ConfigError);

  RunConfig c;
  apply_config_text(c, "seed = 5\ntrain.epochs = 3\n");
  CHECK(c.seed == 5);
  CHECK(c.train.epochs == 3);
  CHECK_THROWS_AS(set_config_value(c, "train.epoch", "3"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "train.epochs", "three"), ConfigError);
  // Nothing is applied when any key is unknown.
  RunConfig d;
  CHECK_THROWS_AS(apply_config_text(d, "seed = 9\nbogus = 1\n"), ConfigError);
  CHECK(d.seed == 1);

  // Every documented key round trips through dump_config.
  RunConfig e;
  e.weights.beta = 0.25;
  RunConfig f;
  apply_config_text(f, dump_config(e));
  CHECK(dump_config(f) == dump_config(e));
  for (const auto& k : config_keys()) CHECK_NOTHROW(get_config_value(e, k.name));
}

TEST_CASE("frozen defaults") {
  const RunConfig c;
  CHECK(c.weights.lambda_cyc == 0.1);
  CHECK(c.weights.lambda_z == 0.01);
  CHECK(c.train.epochs == 20);
  CHECK(c.curse.D == 100);
  CHECK(c.curse.d == 4);
  CHECK(c.curse.k == 8);
  CHECK(c.curse.N == 10000);
  CHECK(c.planner.waypoints == 8);
  CHECK(c.planner.eta == 0.05);
  CHECK(c.planner.max_iter == 300);
  CHECK(c.planner.restarts == 4);
  CHECK(c.planner.obstacle_weight == 10.0);
  CHECK(c.planner.length_weight == 0.1);
  CHECK(c.map_density == 0.25);
}

TEST_CASE("precedence: defaults, file, key=value, flags") {
  const std::string conf = kSource + "/tests/fixtures/small.conf";
  const Run r = run("exp-curse --print-config --config " + conf + " train.epochs=5 seed=3 --seed 9");
  REQUIRE(r.code == 0);
  CHECK(r.output.find("train.epochs = 5\n") != std::string::npos);
  CHECK(r.output.find("train_count = 600\n") != std::string::npos);
  CHECK(r.output.find("seed = 9\n") != std::string::npos);
}

TEST_CASE("unknown keys abort before any work") {
  const std::string out = fresh_dir("unknown");
  const Run r = run("exp-delta --out " + out + " delta.iterationz=5");
  CHECK(r.code == 2);
  CHECK(r.output.find("delta.iterationz") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
  const std::string bad = fresh_dir("bad.conf");
  write_text_file(bad, "seed = 1\nplan.wayponts = 3\n");
  CHECK(run("plan --config " + bad + " --out " + out).code == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("missing data gives a fetch hint") {
  const Run r = run("train c2hm mnist_images=/nonexistent/images.gz mnist_labels=/nonexistent/labels.gz --out " +
                    fresh_dir("nodata"));
  CHECK(r.code == 2);
  CHECK(r.output.find("fetch-mnist") != std::string::npos);
}

TEST_CASE("verify passes and reports each check once") {
  const Run r = run("verify");
  CHECK(r.code == 0);
  std::istringstream in(r.output);
  std::vector<std::string> names;
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("PASS [", 0) == 0 || line.rfind("FAIL [", 0) == 0) {
      const std::string name = line.substr(0, line.find(':'));
      for (const auto& n : names) CHECK(n != name);
      names.push_back(name);
    }
  }
  CHECK(names.size() >= 8);
  for (const char* c : {"[C4]", "[C5]", "[C6]", "[C7]", "[C8]"}) CHECK(count_lines_with(r.output, c) >= 1);
}

TEST_CASE("injected gradient bug fails the gradient check") {
  const Run r = run("verify --inject-grad-bug");
  CHECK(r.code == 1);
  CHECK(count_lines_with(r.output, "FAIL [C6] autodiff") == 1);
}

TEST_CASE("exp-delta is reproducible and its SVG is well formed") {
  const std::string a = fresh_dir("delta_a"), b = fresh_dir("delta_b");
  const Run ra = run("exp-delta --out " + a);
  const Run rb = run("exp-delta --out " + b);
  CHECK(ra.code == 0);
  CHECK(rb.code == 0);
  const std::string csv = slurp(a + "/delta.csv");
  CHECK(csv.rfind("# schema: delta-v1\nbeta,iter,step_norm,entropy_proxy,vb_value,latent_var_mean\n", 0) == 0);
  CHECK(csv == slurp(b + "/delta.csv"));
  const std::string svg = slurp(a + "/delta.svg");
  CHECK(well_formed_xml(svg));
  CHECK(drop_timestamp(svg) == drop_timestamp(slurp(b + "/delta.svg")));
  CHECK_FALSE(well_formed_xml("<svg><g></svg>"));
}

TEST_CASE("plan on bundled scenarios and random maps") {
  const std::string out = fresh_dir("plan_short");
  const Run r = run("plan " + kSource + "/scenarios/short.map --out " + out);
  CHECK(r.code == 0);
  CHECK(slurp(out + "/plan.csv").rfind("# schema: plan-v1\nstep,row,col\n", 0) == 0);
  CHECK(well_formed_xml(slurp(out + "/plan.svg")));
  CHECK(run("plan " + kSource + "/scenarios/long.map --out " + fresh_dir("plan_long")).code == 0);

  const std::string a = fresh_dir("plan_r3a"), b = fresh_dir("plan_r3b");
  run("plan --random 3 --out " + a);
  run("plan --random 3 --out " + b);
  CHECK(slurp(a + "/plan.csv") == slurp(b + "/plan.csv"));
  CHECK(slurp(a + "/plan-summary.csv") == slurp(b + "/plan-summary.csv"));
  CHECK(drop_timestamp(slurp(a + "/plan.svg")) == drop_timestamp(slurp(b + "/plan.svg")));

  const std::string blocked = fresh_dir("blocked.map");
  write_text_file(blocked, "S#.\n##.\n..G\n");
  CHECK(run("plan " + blocked + " --out " + fresh_dir("plan_blocked")).code == 2);
}

TEST_CASE("exp-curse writes identical CSVs on reruns") {
  const std::string a = fresh_dir("curse_a"), b = fresh_dir("curse_b");
  const Run ra = run("exp-curse --out " + a);
  run("exp-curse --out " + b);
  CHECK(count_lines_with(ra.output, "[C2]") >= 2);
  const std::string csv = slurp(a + "/curse.csv");
  CHECK(csv.rfind("# schema: curse-v1\nquantity,value\n", 0) == 0);
  CHECK(csv == slurp(b + "/curse.csv"));
  CHECK(slurp(a + "/curse-noiseless.csv") == slurp(b + "/curse-noiseless.csv"));
}

TEST_CASE("train writes one metrics row per model and seed") {
  const std::string conf = kSource + "/tests/fixtures/small.conf";
  const std::string a = fresh_dir("train_a"), b = fresh_dir("train_b");
  const std::string args = "train both --seeds 1,2,3 --config " + conf + " probe.accuracy_floor=0.5 --out ";
  const Run ra = run(args + a);
  REQUIRE_MESSAGE(ra.code != 2, ra.output);
  const auto rows = parse_metrics_csv(slurp(a + "/metrics.csv"));
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].model == "c2hm");
  CHECK(rows[1].model == "wakesleep");
  CHECK(rows[5].seed == 3);
  CHECK(fs::exists(a + "/c2hm-seed2.ckpt"));
  run(args + b);
  CHECK(slurp(a + "/metrics.csv") == slurp(b + "/metrics.csv"));
  CHECK(slurp(a + "/epochs.csv") == slurp(b + "/epochs.csv"));

  const std::string c = fresh_dir("train_c");
  run("train c2hm --seed 7 --config " + conf + " probe.accuracy_floor=0.5 --out " + c);
  const auto one = parse_metrics_csv(slurp(c + "/metrics.csv"));
  REQUIRE(one.size() == 1);
  CHECK(one[0].model == "c2hm");
  CHECK(one[0].seed == 7);
}

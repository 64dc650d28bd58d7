#pragma once

#include <string>
#include <vector>

#include "c2hm/experiments.hpp"

namespace c2hm {

// %.6g, the decimal format of every CSV.
std::string fmt6(double v);

// Creates parent directories as needed.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// `# schema: epochs-v1`, then model,seed,epoch,rec,loop,latent,total,validation_total.
std::string epoch_log_csv(const std::string& model, std::uint64_t seed, const std::vector<EpochLog>& logs);
// `# schema: curse-v1`, then quantity,value.
std::string curse_csv(const CurseResult& result);
// `# schema: delta-v1`, then beta,iter,step_norm,entropy_proxy,vb_value,latent_var_mean.
std::string delta_csv(const DeltaSweepResult& sweep);
// `# schema: plan-v1`, then step,row,col of the planned path.
std::string plan_path_csv(const PlanResult& plan);
// `# schema: plan-summary-v1`, one row per named map.
std::string plan_summary_csv(const std::vector<std::pair<std::string, PlanReport>>& reports);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line plot. `timestamp` goes into a leading XML comment and is the only
/// part of the document that varies between identical runs.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series, bool log_y, const std::string& timestamp);

// Occupancy grid with the oracle path, the snapped plan and its polyline.
std::string svg_plan(const GridWorld& grid, const std::vector<Cell>& oracle_path, const PlanResult& plan,
                     const std::string& title, const std::string& timestamp);

std::string utc_now();

struct Verdict {
  std::string criterion;  // acceptance criterion the check belongs to, e.g. "C7"
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ExperimentReport {
  std::string id;
  std::vector<Verdict> verdicts;
  std::vector<std::string> artifacts;

  bool all_pass() const;
  // One `PASS|FAIL [criterion] name: detail` line per verdict, then artifacts.
  std::string text() const;
};

std::string verdict_line(const Verdict& v);

}  // namespace c2hm

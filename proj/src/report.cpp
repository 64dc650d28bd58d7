#include "c2hm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "c2hm/errors.hpp"

namespace c2hm {

namespace {

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Comments may not contain "--".
std::string comment_safe(std::string s) {
  for (std::size_t i = s.find("--"); i != std::string::npos; i = s.find("--")) s.replace(i, 2, "- ");
  return s;
}

std::string svg_open(double w, double h, const std::string& timestamp) {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!-- generated " + comment_safe(timestamp) +
         " -->\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(w) + "\" height=\"" + px(h) +
         "\" viewBox=\"0 0 " + px(w) + " " + px(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path);
  f << text;
  if (!f) throw FormatError("write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

std::string epoch_log_csv(const std::string& model, std::uint64_t seed, const std::vector<EpochLog>& logs) {
  std::string out = "# schema: epochs-v1\nmodel,seed,epoch,rec,loop,latent,total,validation_total\n";
  for (const auto& l : logs) {
    out += model + "," + std::to_string(seed) + "," + std::to_string(l.epoch) + "," + fmt6(l.train.rec) + "," +
           fmt6(l.train.loop) + "," + fmt6(l.train.latent) + "," + fmt6(l.train.total) + "," +
           fmt6(l.validation_total) + "\n";
  }
  return out;
}

std::string curse_csv(const CurseResult& r) {
  std::string out = "# schema: curse-v1\nquantity,value\n";
  out += "mse_bottom_up," + fmt6(r.mse_bottom_up) + "\n";
  out += "mse_inverted," + fmt6(r.mse_inverted) + "\n";
  out += "mse_least_squares," + fmt6(r.mse_least_squares) + "\n";
  out += "ratio," + fmt6(r.ratio) + "\n";
  out += "converged," + std::to_string(r.converged ? 1 : 0) + "\n";
  out += "iterations," + std::to_string(r.iterations) + "\n";
  out += "train_size," + std::to_string(r.train_size) + "\n";
  out += "test_size," + std::to_string(r.test_size) + "\n";
  return out;
}

std::string delta_csv(const DeltaSweepResult& sweep) {
  std::string out = "# schema: delta-v1\nbeta,iter,step_norm,entropy_proxy,vb_value,latent_var_mean\n";
  for (const auto& e : sweep.entries) {
    for (std::size_t i = 0; i < e.trace.iterations.size(); ++i) {
      const auto& r = e.trace.iterations[i];
      out += fmt6(e.beta) + "," + std::to_string(i + 1) + "," + fmt6(r.step_norm) + "," + fmt6(r.entropy_proxy) +
             "," + fmt6(r.vb_value) + "," + fmt6(r.latent_var_mean) + "\n";
    }
  }
  return out;
}

std::string plan_path_csv(const PlanResult& plan) {
  std::string out = "# schema: plan-v1\nstep,row,col\n";
  for (std::size_t i = 0; i < plan.path.size(); ++i) {
    out += std::to_string(i) + "," + std::to_string(plan.path[i].row) + "," + std::to_string(plan.path[i].col) + "\n";
  }
  return out;
}

std::string plan_summary_csv(const std::vector<std::pair<std::string, PlanReport>>& reports) {
  std::string out =
      "# schema: plan-summary-v1\nmap,collision_free,length,oracle_length,ratio,expansions,oracle_expanded,restart,"
      "objective,verdict\n";
  for (const auto& [name, r] : reports) {
    out += name + "," + std::to_string(r.plan.collision_free ? 1 : 0) + "," + std::to_string(r.plan.length) + "," +
           std::to_string(r.plan.oracle_length) + "," + fmt6(r.ratio) + "," + std::to_string(r.plan.expansions) + "," +
           std::to_string(r.plan.oracle_expanded) + "," + std::to_string(r.plan.restart) + "," +
           fmt6(r.plan.objective) + "," + (r.pass ? "pass" : "fail") + "\n";
  }
  return out;
}

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series, bool log_y, const std::string& timestamp) {
  const double W = 640, H = 400, L = 70, R = 150, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  auto ty = [log_y](double y) { return log_y ? std::log10(std::max(y, 1e-300)) : y; };
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("series '" + s.name + "': x and y lengths differ");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0.0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (ty(y) - y0) / (y1 - y0) * (H - T - B); };

  std::string out = svg_open(W, H, timestamp);
  out += "<rect x=\"0\" y=\"0\" width=\"" + px(W) + "\" height=\"" + px(H) + "\" fill=\"white\"/>\n";
  out += "<text x=\"" + px(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + xml_escape(title) +
         "</text>\n";
  out += "<rect x=\"" + px(L) + "\" y=\"" + px(T) + "\" width=\"" + px(W - L - R) + "\" height=\"" + px(H - T - B) +
         "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double fy = y0 + (y1 - y0) * i / 4.0;
    const double X = L + (W - L - R) * i / 4.0, Y = H - B - (H - T - B) * i / 4.0;
    out += "<text x=\"" + px(X) + "\" y=\"" + px(H - B + 16) + "\" text-anchor=\"middle\">" + fmt6(fx) + "</text>\n";
    out += "<text x=\"" + px(L - 6) + "\" y=\"" + px(Y + 4) + "\" text-anchor=\"end\">" +
           fmt6(log_y ? std::pow(10.0, fy) : fy) + "</text>\n";
    out += "<line x1=\"" + px(L) + "\" y1=\"" + px(Y) + "\" x2=\"" + px(W - R) + "\" y2=\"" + px(Y) +
           "\" stroke=\"#ddd\"/>\n";
  }
  out += "<text x=\"" + px(L + (W - L - R) / 2) + "\" y=\"" + px(H - 12) + "\" text-anchor=\"middle\">" +
         xml_escape(x_label) + "</text>\n";
  out += "<text transform=\"translate(16," + px(T + (H - T - B) / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         xml_escape(y_label) + (log_y ? " (log)" : "") + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0.0)) continue;
      pts += (pts.empty() ? "" : " ") + px(sx(s.x[i])) + "," + px(sy(s.y[i]));
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
           "\"/>\n";
    const double ly = T + 14 + 18.0 * static_cast<double>(k);
    out += "<line x1=\"" + px(W - R + 10) + "\" y1=\"" + px(ly - 4) + "\" x2=\"" + px(W - R + 30) + "\" y2=\"" +
           px(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + px(W - R + 36) + "\" y=\"" + px(ly) + "\">" + xml_escape(s.name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string svg_plan(const GridWorld& grid, const std::vector<Cell>& oracle_path, const PlanResult& plan,
                     const std::string& title, const std::string& timestamp) {
  const double c = 16, top = 30;
  const double W = c * grid.cols(), H = c * grid.rows() + top;
  std::string out = svg_open(W, H, timestamp);
  out += "<rect x=\"0\" y=\"0\" width=\"" + px(W) + "\" height=\"" + px(H) + "\" fill=\"white\"/>\n";
  out += "<text x=\"" + px(W / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + xml_escape(title) +
         "</text>\n";
  auto cell_rect = [&](Cell cell, const char* fill, const char* extra) {
    return "<rect x=\"" + px(cell.col * c) + "\" y=\"" + px(top + cell.row * c) + "\" width=\"" + px(c) +
           "\" height=\"" + px(c) + "\" fill=\"" + fill + "\"" + extra + "/>\n";
  };
  out += "<g id=\"occupancy\">\n";
  for (int r = 0; r < grid.rows(); ++r)
    for (int q = 0; q < grid.cols(); ++q)
      if (grid.occupied({r, q})) out += cell_rect({r, q}, "#333", "");
  out += "</g>\n<g id=\"plan\">\n";
  for (const Cell& cell : plan.path) {
    out += cell_rect(cell, plan.collision_free ? "#1f77b4" : "#d62728", " fill-opacity=\"0.45\"");
  }
  out += "</g>\n";
  auto centre = [&](double col, double row) { return px(col * c + c / 2) + "," + px(top + row * c + c / 2); };
  std::string pts;
  for (const Cell& cell : oracle_path) pts += (pts.empty() ? "" : " ") + centre(cell.col, cell.row);
  out += "<polyline id=\"oracle\" fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"2\" stroke-dasharray=\"4 3\" "
         "points=\"" + pts + "\"/>\n";
  pts.clear();
  for (const Point& p : plan.polyline) pts += (pts.empty() ? "" : " ") + centre(p.x, p.y);
  out += "<polyline id=\"polyline\" fill=\"none\" stroke=\"#ff7f0e\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
  out += cell_rect(grid.start, "#2ca02c", " stroke=\"black\"");
  out += cell_rect(grid.goal, "#d62728", " stroke=\"black\"");
  out += "</svg>\n";
  return out;
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

bool ExperimentReport::all_pass() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

std::string verdict_line(const Verdict& v) {
  return std::string(v.pass ? "PASS" : "FAIL") + " [" + v.criterion + "] " + v.name + ": " + v.detail;
}

std::string ExperimentReport::text() const {
  std::string out;
  for (const auto& v : verdicts) out += verdict_line(v) + "\n";
  for (const auto& a : artifacts) out += "wrote " + a + "\n";
  return out;
}

}  // namespace c2hm

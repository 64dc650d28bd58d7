#include "c2hm/planner.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <map>

#include "c2hm/errors.hpp"
#include "c2hm/rng.hpp"

namespace c2hm {

namespace {

std::size_t waypoint_count(const Tensor& code) {
  if (code.size() % 2 != 0) throw ShapeError("path code needs an even number of entries, got " + code.shape_string());
  return code.size() / 2;
}

Cell cell_of(Point p) {
  return {static_cast<int>(std::floor(p.y + 0.5)), static_cast<int>(std::floor(p.x + 0.5))};
}

// Constant matrices mapping the code row to waypoint rows of x or y
// coordinates (pinned endpoints included) and waypoints to samples.
struct PathMatrices {
  Tensor select_x, select_y;  // [2m x (m+2)]
  Tensor pinned_x, pinned_y;  // [1 x (m+2)]
  Tensor interp;              // [(m+2) x n]
  Tensor diff;                // [(m+2) x (m+1)]
};

PathMatrices path_matrices(std::size_t m, const GridWorld& grid, std::size_t samples) {
  const std::size_t w = m + 2;
  PathMatrices pm{Tensor({2 * m, w}), Tensor({2 * m, w}), Tensor({1, w}), Tensor({1, w}),
                  Tensor({w, (w - 1) * samples}), Tensor({w, w - 1})};
  for (std::size_t i = 0; i < m; ++i) {
    pm.select_x.at(2 * i, i + 1) = 1.0;
    pm.select_y.at(2 * i + 1, i + 1) = 1.0;
  }
  pm.pinned_x.at(0, 0) = grid.start.col;
  pm.pinned_y.at(0, 0) = grid.start.row;
  pm.pinned_x.at(0, w - 1) = grid.goal.col;
  pm.pinned_y.at(0, w - 1) = grid.goal.row;
  for (std::size_t s = 0; s + 1 < w; ++s) {
    for (std::size_t j = 0; j < samples; ++j) {
      const double t = samples == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(samples - 1);
      pm.interp.at(s, s * samples + j) = 1.0 - t;
      pm.interp.at(s + 1, s * samples + j) = t;
    }
    pm.diff.at(s, s) = -1.0;
    pm.diff.at(s + 1, s) = 1.0;
  }
  return pm;
}

// exp(-(coordinate - cell index)^2 / (2 sigma^2)) as a [cells x n] tape value.
Var blob_axis(Var coords_row, std::size_t cells, double sigma) {
  Tape& t = coords_row.tape();
  const std::size_t n = coords_row.value().cols();
  Tensor index({cells, n});
  for (std::size_t r = 0; r < cells; ++r)
    for (std::size_t j = 0; j < n; ++j) index.at(r, j) = static_cast<double>(r);
  const Var spread = ad::matmul(t.constant(Tensor({cells, 1}, 1.0)), coords_row);
  const Var delta = ad::sub(spread, t.constant(std::move(index)));
  return ad::exp(ad::scale(ad::square(delta), -0.5 / (sigma * sigma)));
}

Var waypoint_row(Var code_row, const Tensor& select, const Tensor& pinned) {
  Tape& t = code_row.tape();
  return ad::add(ad::matmul(code_row, t.constant(select)), t.constant(pinned));
}

Tensor straight_code(const GridWorld& grid, std::size_t m) {
  Tensor code({1, 2 * m});
  for (std::size_t i = 0; i < m; ++i) {
    const double t = static_cast<double>(i + 1) / static_cast<double>(m + 1);
    code[2 * i] = grid.start.col + t * (grid.goal.col - grid.start.col);
    code[2 * i + 1] = grid.start.row + t * (grid.goal.row - grid.start.row);
  }
  return code;
}

void clamp_to_grid(Tensor& code, const GridWorld& grid) {
  for (std::size_t i = 0; i < code.size(); i += 2) {
    code[i] = std::clamp(code[i], 0.0, static_cast<double>(grid.cols() - 1));
    code[i + 1] = std::clamp(code[i + 1], 0.0, static_cast<double>(grid.rows() - 1));
  }
}

// Grid traversal of one segment; appends every crossed cell after the first.
// When the axis the segment crosses first leads into an obstacle and the
// other axis does not, the free neighbour is taken (corner cutting).
void walk_segment(Point a, Point b, const GridWorld& grid, std::vector<Cell>& out) {
  Cell c = cell_of(a);
  const Cell end = cell_of(b);
  const double dx = b.x - a.x, dy = b.y - a.y;
  const int sx = dx > 0 ? 1 : -1, sy = dy > 0 ? 1 : -1;
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double tdx = dx != 0.0 ? std::abs(1.0 / dx) : inf;
  const double tdy = dy != 0.0 ? std::abs(1.0 / dy) : inf;
  // Parameter at which the segment crosses the next cell border on each axis.
  double tx = dx != 0.0 ? ((sx > 0 ? (c.col + 0.5) - a.x : a.x - (c.col - 0.5)) * tdx) : inf;
  double ty = dy != 0.0 ? ((sy > 0 ? (c.row + 0.5) - a.y : a.y - (c.row - 0.5)) * tdy) : inf;
  const int budget = std::abs(end.col - c.col) + std::abs(end.row - c.row);
  for (int i = 0; i < budget; ++i) {
    bool step_x = c.col != end.col && (tx <= ty || c.row == end.row);
    const bool can_x = c.col != end.col, can_y = c.row != end.row;
    if (can_x && can_y) {
      const bool free_x = grid.free({c.row, c.col + sx}), free_y = grid.free({c.row + sy, c.col});
      if (step_x && !free_x && free_y) step_x = false;
      else if (!step_x && !free_y && free_x) step_x = true;
    }
    if (step_x) {
      c.col += sx;
      tx += tdx;
    } else {
      c.row += sy;
      ty += tdy;
    }
    out.push_back(c);
  }
}

}  // namespace

std::vector<Point> decode_path(const Tensor& code, const GridWorld& grid) {
  const std::size_t m = waypoint_count(code);
  std::vector<Point> pts{{static_cast<double>(grid.start.col), static_cast<double>(grid.start.row)}};
  for (std::size_t i = 0; i < m; ++i) pts.push_back({code[2 * i], code[2 * i + 1]});
  pts.push_back({static_cast<double>(grid.goal.col), static_cast<double>(grid.goal.row)});
  return pts;
}

Var rasterize_path(Var code, const GridWorld& grid, const RasterOptions& options) {
  const std::size_t m = waypoint_count(code.value());
  if (options.samples_per_segment < 1 || !(options.sigma > 0.0)) throw ContractError("invalid raster options");
  const auto pm = path_matrices(m, grid, options.samples_per_segment);
  Tape& t = code.tape();
  // A rank-1 code becomes a [1 x 2m] row.
  const Var row = code.value().rank() == 1 ? ad::transpose(ad::transpose(code)) : code;
  const Var xs = ad::matmul(waypoint_row(row, pm.select_x, pm.pinned_x), t.constant(pm.interp));
  const Var ys = ad::matmul(waypoint_row(row, pm.select_y, pm.pinned_y), t.constant(pm.interp));
  const Var ex = blob_axis(xs, static_cast<std::size_t>(grid.cols()), options.sigma);
  const Var ey = blob_axis(ys, static_cast<std::size_t>(grid.rows()), options.sigma);
  const Var density = ad::matmul(ey, ad::transpose(ex));
  return ad::add_scalar(ad::scale(ad::exp(ad::scale(density, -1.0)), -1.0), 1.0);
}

Tensor rasterize_path(const Tensor& code, const GridWorld& grid, const RasterOptions& options) {
  Tape t;
  const Tensor r = rasterize_path(t.constant(code), grid, options).value();
  return r.reshaped({r.size()});
}

Tensor blurred_occupancy(const GridWorld& grid, double sigma) {
  const int rows = grid.rows(), cols = grid.cols();
  Tensor occ({static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) occ.at(r, c) = grid.occupied({r, c}) ? 1.0 : 0.0;
  if (sigma <= 1e-9) return occ;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) norm += k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= norm;
  // Cells beyond the border count as occupied so the field pushes paths inwards.
  auto sample = [&](const Tensor& src, int r, int c) {
    if (r < 0 || c < 0 || r >= rows || c >= cols) return 1.0;
    return src.at(r, c);
  };
  Tensor tmp(occ.shape()), out(occ.shape());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[static_cast<std::size_t>(i + radius)] * sample(occ, r, c + i);
      tmp.at(r, c) = s;
    }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int rr = r + i;
        s += k[static_cast<std::size_t>(i + radius)] * (rr < 0 || rr >= rows ? 1.0 : tmp.at(rr, c));
      }
      out.at(r, c) = s;
    }
  return out;
}

Var planning_objective(Var code, const GridWorld& grid, const Tensor& field, const PlannerConfig& config) {
  Tape& t = code.tape();
  const std::size_t m = waypoint_count(code.value());
  const auto pm = path_matrices(m, grid, 1);
  const Var row = code.value().rank() == 1 ? ad::transpose(ad::transpose(code)) : code;
  const Var overlap = ad::sum(ad::mul(rasterize_path(row, grid, config.raster), t.constant(field)));
  const Var dx = ad::matmul(waypoint_row(row, pm.select_x, pm.pinned_x), t.constant(pm.diff));
  const Var dy = ad::matmul(waypoint_row(row, pm.select_y, pm.pinned_y), t.constant(pm.diff));
  const Var length = ad::add(ad::sum(ad::square(dx)), ad::sum(ad::square(dy)));
  return ad::add(ad::scale(overlap, config.obstacle_weight), ad::scale(length, config.length_weight));
}

BfsResult bfs_shortest_path(const GridWorld& grid) {
  if (!grid.free(grid.start) || !grid.free(grid.goal)) throw ContractError("start and goal must be free cells");
  const int cols = grid.cols();
  auto id = [cols](Cell c) { return static_cast<std::size_t>(c.row * cols + c.col); };
  std::vector<int> parent(static_cast<std::size_t>(grid.rows() * cols), -2);
  std::deque<Cell> queue{grid.start};
  parent[id(grid.start)] = -1;
  BfsResult res;
  constexpr int dr[] = {-1, 1, 0, 0};
  constexpr int dc[] = {0, 0, -1, 1};
  bool found = false;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    ++res.expanded;
    if (c == grid.goal) {
      found = true;
      break;
    }
    for (int k = 0; k < 4; ++k) {
      const Cell n{c.row + dr[k], c.col + dc[k]};
      if (grid.free(n) && parent[id(n)] == -2) {
        parent[id(n)] = static_cast<int>(id(c));
        queue.push_back(n);
      }
    }
  }
  if (!found) throw NoPathError("no path from start to goal");
  for (int at = static_cast<int>(id(grid.goal)); at != -1; at = parent[static_cast<std::size_t>(at)]) {
    res.path.push_back({at / cols, at % cols});
  }
  std::reverse(res.path.begin(), res.path.end());
  res.length = res.path.size() - 1;
  return res;
}

std::vector<Cell> snap_to_cells(const std::vector<Point>& polyline, const GridWorld& grid) {
  if (polyline.empty()) throw ContractError("snap_to_cells: empty polyline");
  if (!(cell_of(polyline.front()) == grid.start) || !(cell_of(polyline.back()) == grid.goal)) {
    throw ContractError("snap_to_cells: polyline must run from the start cell to the goal cell");
  }
  std::vector<Cell> cells{grid.start};
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    if (cells.back() != cell_of(polyline[i])) throw ContractError("snap_to_cells: broken polyline");
    walk_segment(polyline[i], polyline[i + 1], grid, cells);
  }
  // Loop erasure: a revisited cell cuts out everything since its first visit.
  std::vector<Cell> out;
  for (const Cell& c : cells) {
    auto it = std::find(out.begin(), out.end(), c);
    if (it != out.end()) {
      out.erase(it + 1, out.end());
    } else {
      out.push_back(c);
    }
  }
  return out;
}

bool path_is_valid(const std::vector<Cell>& path, const GridWorld& grid) {
  if (path.empty()) return false;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (!grid.free(path[i])) return false;
    if (i > 0 && manhattan(path[i - 1], path[i]) != 1) return false;
  }
  return true;
}

PlanResult plan_half_cycle(const GridWorld& grid, const PlannerConfig& config) {
  if (config.waypoints < 1 || config.restarts < 1 || config.max_iter < 1) {
    throw ContractError("planner needs at least one waypoint, restart and iteration");
  }
  if (!(config.eta > 0.0)) throw ContractError("planner eta must be positive");
  const auto oracle = bfs_shortest_path(grid);
  const std::size_t m = config.waypoints;

  // Fields for each iteration share one blurred map per distinct width.
  const auto blur_iters = static_cast<std::size_t>(config.blur_fraction * static_cast<double>(config.max_iter));
  auto blur_at = [&](std::size_t it) {
    if (blur_iters == 0 || it >= blur_iters) return config.blur_end;
    const double frac = static_cast<double>(it) / static_cast<double>(blur_iters);
    const double w = config.blur_start + frac * (config.blur_end - config.blur_start);
    return std::round(w * 4.0) / 4.0;
  };
  std::map<double, Tensor> fields;
  auto field_for = [&](double width) -> const Tensor& {
    auto it = fields.find(width);
    if (it == fields.end()) it = fields.emplace(width, blurred_occupancy(grid, width)).first;
    return it->second;
  };
  const Tensor& plain = field_for(0.0);

  PlanResult best;
  bool have_best = false;
  std::size_t expansions = 0;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    SeededRng rng = SeededRng(config.seed).fork(100 + r);
    Tensor code = straight_code(grid, m);
    if (r > 0) {
      const double dx = grid.goal.col - grid.start.col, dy = grid.goal.row - grid.start.row;
      const double len = std::max(1.0, std::hypot(dx, dy));
      const double nx = -dy / len, ny = dx / len;
      // Bulges alternate sides and grow: +s, -s, +2s, -2s, ...
      const double side = r % 2 == 1 ? 1.0 : -1.0;
      const double offset = side * config.restart_spread * static_cast<double>((r + 1) / 2);
      for (std::size_t i = 0; i < m; ++i) {
        // Bulge that vanishes at the pinned endpoints.
        const double t = static_cast<double>(i + 1) / static_cast<double>(m + 1);
        const double bump = 4.0 * t * (1.0 - t) * offset;
        code[2 * i] += bump * nx + 0.5 * rng.standard_normal();
        code[2 * i + 1] += bump * ny + 0.5 * rng.standard_normal();
      }
      clamp_to_grid(code, grid);
    }
    for (std::size_t it = 0; it < config.max_iter; ++it) {
      Tape t;
      const Var c = t.leaf(code);
      const Var obj = planning_objective(c, grid, field_for(blur_at(it)), config);
      const Tensor g = t.backward(obj)[c];
      for (std::size_t i = 0; i < m; ++i) {
        double sx = -config.eta * g[2 * i], sy = -config.eta * g[2 * i + 1];
        const double norm = std::hypot(sx, sy);
        if (norm > config.max_step) {
          sx *= config.max_step / norm;
          sy *= config.max_step / norm;
        }
        code[2 * i] += sx;
        code[2 * i + 1] += sy;
      }
      clamp_to_grid(code, grid);
    }
    expansions += config.max_iter * m;

    PlanResult cand;
    cand.code = code;
    cand.restart = r;
    cand.polyline = decode_path(code, grid);
    {
      Tape t;
      cand.objective = planning_objective(t.constant(code), grid, plain, config).value().item();
    }
    cand.path = snap_to_cells(cand.polyline, grid);
    cand.collision_free = path_is_valid(cand.path, grid);
    cand.length = cand.path.size() - 1;
    const bool better = !have_best || (cand.collision_free && !best.collision_free) ||
                        (cand.collision_free == best.collision_free && cand.objective < best.objective);
    if (better) {
      best = std::move(cand);
      have_best = true;
    }
  }
  best.expansions = expansions;
  best.oracle_length = oracle.length;
  best.oracle_expanded = oracle.expanded;
  return best;
}

}  // namespace c2hm

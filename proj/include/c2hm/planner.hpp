#pragma once

#include <vector>

#include "c2hm/gridworld.hpp"
#include "c2hm/tape.hpp"

namespace c2hm {

struct Point {
  double x = 0.0;  // column coordinate
  double y = 0.0;  // row coordinate
};

struct RasterOptions {
  double sigma = 0.5;                    // blob width in cells
  std::size_t samples_per_segment = 16;  // blob centres per polyline segment
};

// Polyline start -> code waypoints -> goal. The code is [x1, y1, ..., xm, ym].
std::vector<Point> decode_path(const Tensor& code, const GridWorld& grid);

/// Soft raster of the polyline: cell intensity 1 - exp(-sum of Gaussian
/// blobs centred on points sampled along every segment). Values in [0, 1).
Tensor rasterize_path(const Tensor& code, const GridWorld& grid, const RasterOptions& options = {});
// Same raster as a [rows x cols] tape value, differentiable in `code`.
Var rasterize_path(Var code, const GridWorld& grid, const RasterOptions& options = {});

struct PlannerConfig {
  std::size_t waypoints = 8;
  double eta = 0.05;
  std::size_t max_iter = 300;
  std::size_t restarts = 4;
  double obstacle_weight = 10.0;
  double length_weight = 0.1;
  // Obstacle field is the occupancy blurred with a Gaussian whose width
  // falls linearly from blur_start to blur_end over the first blur_fraction
  // of the iterations (coarse-to-fine continuation).
  double blur_start = 3.0;
  double blur_end = 0.0;
  double blur_fraction = 0.6;
  // Per-waypoint displacement cap for a single gradient step, in cells.
  double max_step = 1.0;
  // Restart r > 0 starts from the straight line bent sideways by a bulge of
  // height restart_spread * ceil(r / 2), alternating sides, plus jitter.
  double restart_spread = 12.0;
  RasterOptions raster;
  std::uint64_t seed = 1;
};

struct PlanResult {
  std::vector<Cell> path;
  bool collision_free = false;
  std::size_t length = 0;  // moves along the path (cells - 1)
  std::size_t expansions = 0;
  std::size_t oracle_length = 0;
  std::size_t oracle_expanded = 0;
  double objective = 0.0;
  Tensor code;
  std::vector<Point> polyline;
  std::size_t restart = 0;
};

struct BfsResult {
  std::size_t length = 0;  // moves
  std::vector<Cell> path;
  std::size_t expanded = 0;
};

// Exact 4-connected shortest path; throws NoPathError when none exists.
BfsResult bfs_shortest_path(const GridWorld& grid);

/// Cells crossed by each segment (grid traversal), joined into a
/// 4-connected sequence with repeats and loops removed. The first and last
/// points must fall in the start and goal cells.
std::vector<Cell> snap_to_cells(const std::vector<Point>& polyline, const GridWorld& grid);

// Every cell free, in bounds and 4-adjacent to its successor.
bool path_is_valid(const std::vector<Cell>& path, const GridWorld& grid);

// obstacle_weight * <raster, field> + length_weight * sum of squared segment lengths.
Var planning_objective(Var code, const GridWorld& grid, const Tensor& field, const PlannerConfig& config);
Tensor blurred_occupancy(const GridWorld& grid, double sigma);

/// Gradient refinement of waypoint codes from several initializations;
/// the collision-free result with the lowest objective wins.
PlanResult plan_half_cycle(const GridWorld& grid, const PlannerConfig& config = {});

}  // namespace c2hm

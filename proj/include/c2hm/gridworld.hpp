#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "c2hm/tensor.hpp"

namespace c2hm {

struct Cell {
  int row = 0;
  int col = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
};

inline int manhattan(Cell a, Cell b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col); }

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoPathError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Occupancy grid with a start and a goal cell. Cell (r, c) is centred at
/// continuous coordinates x = c, y = r.
class GridWorld {
 public:
  static constexpr int kSize = 32;

  GridWorld(int rows = kSize, int cols = kSize);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool in_bounds(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < rows_ && c.col < cols_; }
  bool occupied(Cell c) const { return occ_[index(c)] != 0; }
  bool free(Cell c) const { return in_bounds(c) && !occupied(c); }
  void set_occupied(Cell c, bool value = true) { occ_[index(c)] = value ? 1 : 0; }
  std::size_t occupied_count() const;
  double density() const;

  // Row-major 0/1 occupancy, rows * cols entries.
  Tensor raster() const;

  Cell start;
  Cell goal;

 private:
  std::size_t index(Cell c) const;

  int rows_;
  int cols_;
  std::vector<std::uint8_t> occ_;
};

// Flood fill over free cells with 4-connectivity.
bool connected(const GridWorld& grid, Cell a, Cell b);

/// Random map: axis-aligned blocks of 1..4 cells per side are dropped until
/// the occupied fraction reaches `density`, then start and goal are drawn
/// among free cells at least `min_separation` apart (Manhattan). Maps whose
/// start and goal are disconnected are redrawn; 100 failures in a row raise
/// GenerationError.
GridWorld make_gridworld(std::uint64_t seed, double density, int min_separation = 20, int rows = GridWorld::kSize,
                         int cols = GridWorld::kSize);

/// Text map: one line per row, `.` free, `#` obstacle, `S` start, `G` goal.
GridWorld parse_scenario(const std::string& text);
std::string scenario_text(const GridWorld& grid);
GridWorld load_scenario(const std::string& path);

}  // namespace c2hm

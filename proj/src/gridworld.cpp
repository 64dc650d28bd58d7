#include "c2hm/gridworld.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include "c2hm/errors.hpp"
#include "c2hm/rng.hpp"

namespace c2hm {

GridWorld::GridWorld(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 1 || cols < 1) throw ContractError("grid dimensions must be positive");
  occ_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0);
}

std::size_t GridWorld::index(Cell c) const {
  if (!in_bounds(c)) {
    throw ContractError("cell (" + std::to_string(c.row) + ", " + std::to_string(c.col) + ") outside the grid");
  }
  return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c.col);
}

std::size_t GridWorld::occupied_count() const {
  std::size_t n = 0;
  for (auto v : occ_) n += v;
  return n;
}

double GridWorld::density() const { return static_cast<double>(occupied_count()) / static_cast<double>(occ_.size()); }

Tensor GridWorld::raster() const {
  Tensor t({occ_.size()});
  for (std::size_t i = 0; i < occ_.size(); ++i) t[i] = occ_[i];
  return t;
}

bool connected(const GridWorld& grid, Cell a, Cell b) {
  if (!grid.free(a) || !grid.free(b)) return false;
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(grid.rows() * grid.cols()), 0);
  auto id = [&](Cell c) { return static_cast<std::size_t>(c.row * grid.cols() + c.col); };
  std::deque<Cell> queue{a};
  seen[id(a)] = 1;
  constexpr int dr[] = {-1, 1, 0, 0};
  constexpr int dc[] = {0, 0, -1, 1};
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    if (c == b) return true;
    for (int k = 0; k < 4; ++k) {
      const Cell n{c.row + dr[k], c.col + dc[k]};
      if (grid.free(n) && !seen[id(n)]) {
        seen[id(n)] = 1;
        queue.push_back(n);
      }
    }
  }
  return false;
}

GridWorld make_gridworld(std::uint64_t seed, double density, int min_separation, int rows, int cols) {
  if (!(density >= 0.0 && density <= 0.4)) throw ContractError("obstacle density must lie in [0, 0.4]");
  SeededRng rng(seed);
  const auto total = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  const auto target = static_cast<std::size_t>(std::ceil(density * static_cast<double>(total)));
  auto pick = [&rng](int n) { return static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n))); };
  for (int attempt = 0; attempt < 100; ++attempt) {
    GridWorld g(rows, cols);
    while (g.occupied_count() < target) {
      const int h = 1 + pick(4), w = 1 + pick(4);
      const int r0 = pick(rows - h + 1), c0 = pick(cols - w + 1);
      for (int r = r0; r < r0 + h; ++r)
        for (int c = c0; c < c0 + w; ++c) g.set_occupied({r, c});
    }
    for (int tries = 0; tries < 50; ++tries) {
      const Cell s{pick(rows), pick(cols)};
      const Cell t{pick(rows), pick(cols)};
      if (!g.free(s) || !g.free(t) || manhattan(s, t) < min_separation) continue;
      if (connected(g, s, t)) {
        g.start = s;
        g.goal = t;
        return g;
      }
      break;
    }
  }
  throw GenerationError("no feasible map after 100 attempts (density " + std::to_string(density) + ")");
}

GridWorld parse_scenario(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    lines.push_back(line);
  }
  if (lines.empty()) throw FormatError("scenario: empty map");
  const auto cols = lines.front().size();
  GridWorld g(static_cast<int>(lines.size()), static_cast<int>(cols));
  bool has_start = false, has_goal = false;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    if (lines[r].size() != cols) {
      throw FormatError("scenario: line " + std::to_string(r + 1) + " has " + std::to_string(lines[r].size()) +
                        " characters, expected " + std::to_string(cols));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const Cell cell{static_cast<int>(r), static_cast<int>(c)};
      switch (lines[r][c]) {
        case '.': break;
        case '#': g.set_occupied(cell); break;
        case 'S':
          if (has_start) throw FormatError("scenario: more than one start");
          g.start = cell;
          has_start = true;
          break;
        case 'G':
          if (has_goal) throw FormatError("scenario: more than one goal");
          g.goal = cell;
          has_goal = true;
          break;
        default:
          throw FormatError("scenario: unexpected character '" + std::string(1, lines[r][c]) + "' on line " +
                            std::to_string(r + 1));
      }
    }
  }
  if (!has_start || !has_goal) throw FormatError("scenario: missing start or goal");
  return g;
}

std::string scenario_text(const GridWorld& grid) {
  std::string out;
  for (int r = 0; r < grid.rows(); ++r) {
    for (int c = 0; c < grid.cols(); ++c) {
      const Cell cell{r, c};
      out += cell == grid.start ? 'S' : cell == grid.goal ? 'G' : grid.occupied(cell) ? '#' : '.';
    }
    out += '\n';
  }
  return out;
}

GridWorld load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace c2hm

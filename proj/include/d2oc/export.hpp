#pragma once

// CSV and SVG writers for run results. Output depends only on the result, so
// identical runs give byte-identical files.
//
// Heatmap colormap: 256 levels over [0, 1], linear from blue (0,0,255) at 0 to
// red (255,0,0) at 1. Level l = round(255 * clamp(v, 0, 1)) maps to
// rgb(l, 0, 255 - l).

#include "d2oc/common.hpp"
#include "d2oc/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace d2oc {

namespace detail {

inline std::string format_g(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path);
}

}  // namespace detail

inline constexpr const char* kStateNames[kStateDim] = {"phi", "theta", "psi", "p", "q", "r",
                                                       "u",   "v",     "w",   "x", "y", "z"};

inline std::string trajectory_csv(const RunResult& result) {
  std::ostringstream os;
  os << "step,agent,time";
  for (const char* n : kStateNames) os << ',' << n;
  os << ",tank_height\n";
  const int M = result.steps();
  for (int k = 0; k <= M; ++k) {
    for (std::size_t r = 0; r < result.agents.size(); ++r) {
      const auto& tr = result.agents[r];
      os << k << ',' << r << ',' << detail::format_g(k * result.config.dt, 17);
      const auto& x = tr.states[static_cast<std::size_t>(k)];
      for (int i = 0; i < kStateDim; ++i) os << ',' << detail::format_g(x(i), 17);
      os << ',' << detail::format_g(tr.tank_height[static_cast<std::size_t>(k)], 17) << '\n';
    }
  }
  return os.str();
}

struct TrajectoryRow {
  int step = 0;
  int agent = 0;
  double time = 0.0;
  DroneState state = DroneState::Zero();
  double tank_height = 0.0;
};

inline std::vector<TrajectoryRow> read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("trajectory csv: missing header");
  std::vector<TrajectoryRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 3 + kStateDim + 1)
      throw Error("trajectory csv line " + std::to_string(lineno) + ": wrong field count");
    TrajectoryRow row;
    row.step = std::stoi(fields[0]);
    row.agent = std::stoi(fields[1]);
    row.time = std::stod(fields[2]);
    for (int i = 0; i < kStateDim; ++i) row.state(i) = std::stod(fields[static_cast<std::size_t>(3 + i)]);
    row.tank_height = std::stod(fields.back());
    rows.push_back(row);
  }
  return rows;
}

inline std::string grid_csv(const DoseGrid& grid) {
  std::ostringstream os;
  os << "ix,iy,x,y,rho0,dose,rho_final\n";
  const GridSpec& g = grid.spec;
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      const std::size_t c = g.index(ix, iy);
      const Vec2 p = g.cell_center(ix, iy);
      os << ix << ',' << iy << ',' << detail::format_g(p.x(), 10) << ',' << detail::format_g(p.y(), 10) << ','
         << detail::format_g(grid.rho0[c], 10) << ',' << detail::format_g(grid.dose[c], 10) << ','
         << detail::format_g(grid.rhoF[c], 10) << '\n';
    }
  }
  return os.str();
}

inline int colormap_level(double v) {
  return static_cast<int>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

// Heatmap of a per-cell field in [0, 1]. Runs of equal colour along a row are
// merged into one rect; y grows upward in world coordinates.
inline std::string heatmap_svg(const GridSpec& g, const std::vector<double>& values) {
  if (values.size() != g.cell_count()) throw Error("heatmap: value count does not match grid");
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" viewBox=\"0 0 " << g.nx << ' '
     << g.ny << "\" preserveAspectRatio=\"none\" shape-rendering=\"crispEdges\">\n";
  for (int iy = 0; iy < g.ny; ++iy) {
    const int row = g.ny - 1 - iy;
    int ix = 0;
    while (ix < g.nx) {
      const int level = colormap_level(values[g.index(ix, iy)]);
      int end = ix + 1;
      while (end < g.nx && colormap_level(values[g.index(end, iy)]) == level) ++end;
      os << "<rect x=\"" << ix << "\" y=\"" << row << "\" width=\"" << end - ix
         << "\" height=\"1\" fill=\"rgb(" << level << ",0," << 255 - level << ")\"/>\n";
      ix = end;
    }
  }
  os << "</svg>\n";
  return os.str();
}

// Writes trajectory.csv, grid.csv, initial.svg and final.svg into dir.
inline void export_run(const RunResult& result, const std::string& dir) {
  detail::write_file(dir + "/trajectory.csv", trajectory_csv(result));
  detail::write_file(dir + "/grid.csv", grid_csv(result.grid));
  detail::write_file(dir + "/initial.svg", heatmap_svg(result.grid.spec, result.grid.rho0));
  detail::write_file(dir + "/final.svg", heatmap_svg(result.grid.spec, result.grid.rhoF));
}

}  // namespace d2oc

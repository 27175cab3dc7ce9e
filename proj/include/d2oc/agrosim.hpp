#pragma once

// Herbicide deposition on the evaluation grid and the dose-survival response.

#include "d2oc/common.hpp"
#include "d2oc/density.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace d2oc {

enum class SurvivalConvention {
  kAsWritten,       // rho0 / (1 + exp(log x + log LD50)) = rho0 / (1 + x * LD50)
  kLd50Normalized,  // rho0 / (1 + x / LD50)
};

struct HerbicideParams {
  double ld50 = 134.2;
  double concentration = 495.3;  // grams active ingredient per m^3 of solution
  SurvivalConvention convention = SurvivalConvention::kAsWritten;
};

struct DoseGrid {
  GridSpec spec;
  std::vector<double> rho0;  // initial density, max-normalized
  std::vector<double> dose;  // accumulated herbicide per cell [g]
  std::vector<double> rhoF;  // survived density
  double deposited = 0.0;    // grams landed on the grid
  double discarded = 0.0;    // grams released outside the grid

  static DoseGrid from_density(const GridSpec& spec, std::vector<double> rho0) {
    DoseGrid g;
    g.spec = spec;
    g.dose.assign(spec.cell_count(), 0.0);
    g.rhoF = rho0;
    g.rho0 = std::move(rho0);
    return g;
  }
};

inline constexpr double kMinSprayAltitude = 1.5;
inline constexpr double kMaxSprayAltitude = 3.0;

inline bool spray_altitude_in_range(double altitude) {
  return altitude >= kMinSprayAltitude && altitude <= kMaxSprayAltitude;
}

// Side of the square spray footprint: 3 m at 1.5 m altitude growing linearly
// to 5.5 m at 3 m. Altitudes outside that band are clamped.
inline double spray_footprint(double altitude) {
  const double a = std::clamp(altitude, kMinSprayAltitude, kMaxSprayAltitude);
  return 3.0 + (a - kMinSprayAltitude) * (5.5 - 3.0) / (kMaxSprayAltitude - kMinSprayAltitude);
}

// Spreads spray_rate * dt * conc grams uniformly over the square of side
// `side` centered at `position`; each cell receives its overlap-area share.
inline void deposit(DoseGrid& grid, const Vec2& position, double side, double spray_rate, double conc,
                    double dt) {
  if (!(dt > 0.0)) throw Error("deposit: dt must be positive");
  if (spray_rate < 0.0) throw Error("deposit: negative spray rate");
  const double released = spray_rate * dt * conc;
  if (released == 0.0) return;
  if (!(side > 0.0)) {
    grid.discarded += released;
    return;
  }

  const GridSpec& g = grid.spec;
  const double h = 0.5 * side;
  const double x0 = position.x() - h;
  const double x1 = position.x() + h;
  const double y0 = position.y() - h;
  const double y1 = position.y() + h;
  const double density = released / (side * side);

  const int ix0 = std::max(0, static_cast<int>(std::floor((x0 - g.origin.x()) / g.cell_size)));
  const int ix1 = std::min(g.nx - 1, static_cast<int>(std::floor((x1 - g.origin.x()) / g.cell_size)));
  const int iy0 = std::max(0, static_cast<int>(std::floor((y0 - g.origin.y()) / g.cell_size)));
  const int iy1 = std::min(g.ny - 1, static_cast<int>(std::floor((y1 - g.origin.y()) / g.cell_size)));

  double landed = 0.0;
  if (ix0 <= ix1 && iy0 <= iy1) {
    std::vector<double> wx(static_cast<std::size_t>(ix1 - ix0 + 1));
    for (int ix = ix0; ix <= ix1; ++ix) {
      const double cx0 = g.origin.x() + ix * g.cell_size;
      wx[static_cast<std::size_t>(ix - ix0)] = std::max(0.0, std::min(x1, cx0 + g.cell_size) - std::max(x0, cx0));
    }
    for (int iy = iy0; iy <= iy1; ++iy) {
      const double cy0 = g.origin.y() + iy * g.cell_size;
      const double wy = std::max(0.0, std::min(y1, cy0 + g.cell_size) - std::max(y0, cy0));
      if (wy == 0.0) continue;
      for (int ix = ix0; ix <= ix1; ++ix) {
        const double m = density * wx[static_cast<std::size_t>(ix - ix0)] * wy;
        grid.dose[g.index(ix, iy)] += m;
        landed += m;
      }
    }
  }
  grid.deposited += landed;
  grid.discarded += released - landed;
}

inline double survival(double rho0, double dose, const HerbicideParams& params) {
  if (dose < 0.0) throw Error("survival: negative dose");
  if (dose == 0.0) return rho0;
  switch (params.convention) {
    case SurvivalConvention::kAsWritten:
      return rho0 / (1.0 + std::exp(std::log(dose) + std::log(params.ld50)));
    case SurvivalConvention::kLd50Normalized:
      return rho0 / (1.0 + dose / params.ld50);
  }
  return rho0;
}

// Recomputes rhoF from the accumulated dose. The response is driven by the
// areal dose (g/m^2), i.e. cell grams divided by cell area.
inline void apply_survival(DoseGrid& grid, const HerbicideParams& params) {
  const double area = grid.spec.cell_area();
  for (std::size_t c = 0; c < grid.rho0.size(); ++c) grid.rhoF[c] = survival(grid.rho0[c], grid.dose[c] / area, params);
}

inline double reduction_rate(const DoseGrid& grid) {
  double initial = 0.0;
  double removed = 0.0;
  for (std::size_t c = 0; c < grid.rho0.size(); ++c) {
    initial += grid.rho0[c];
    removed += grid.rho0[c] - grid.rhoF[c];
  }
  return initial > 0.0 ? 100.0 * removed / initial : 0.0;
}

inline double max_survival_density(const DoseGrid& grid) {
  double m = 0.0;
  for (double v : grid.rhoF) m = std::max(m, v);
  return m;
}

// Percent of cells per 10 % band of survived density; 1.0 falls in the last band.
inline std::array<double, 10> survival_histogram(const DoseGrid& grid) {
  std::array<double, 10> bins{};
  if (grid.rhoF.empty()) return bins;
  for (double v : grid.rhoF) {
    const int b = std::clamp(static_cast<int>(std::floor(v * 10.0)), 0, 9);
    bins[static_cast<std::size_t>(b)] += 1.0;
  }
  for (double& b : bins) b *= 100.0 / static_cast<double>(grid.rhoF.size());
  return bins;
}

}  // namespace d2oc

#pragma once

// Comparison planners: a lawn-mower sweep over equal strips and spectral
// multi-scale coverage (ergodic control on a cosine basis). Both produce
// planar references that an LTV MPC tracks.

#include "d2oc/agrosim.hpp"
#include "d2oc/common.hpp"
#include "d2oc/controller.hpp"
#include "d2oc/density.hpp"
#include "d2oc/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace d2oc {

struct Waypoint {
  int time_index = 0;
  Vec2 point = Vec2::Zero();
  double arc_length = 0.0;  // distance along the sweep from the first waypoint
};

struct WaypointPath {
  std::vector<Waypoint> waypoints;

  // Reference for step k; holds the last waypoint once the path runs out.
  Vec2 at(int k) const {
    if (waypoints.empty()) return Vec2::Zero();
    const int idx = std::clamp(k, 0, static_cast<int>(waypoints.size()) - 1);
    return waypoints[static_cast<std::size_t>(idx)].point;
  }
};

namespace detail {

// Boustrophedon polyline over one strip: vertical lanes, serpentine in y.
// Lane ends sit half a pitch from the strip edge, pulled outward by `reach`.
inline std::vector<Vec2> strip_sweep(const Rect& strip, double pitch, double reach) {
  const double width = strip.width();
  if (width + 1e-9 < pitch) throw ConfigError("lawnmower: strip narrower than one spray lane");
  const int lanes = std::max(1, static_cast<int>(std::ceil(width / pitch - 1e-9)));
  const double inset = std::max(0.0, 0.5 * pitch - reach);
  const double ylo = strip.height() > 2.0 * inset ? strip.y_min + inset : 0.5 * (strip.y_min + strip.y_max);
  const double yhi = strip.height() > 2.0 * inset ? strip.y_max - inset : ylo;

  std::vector<Vec2> corners;
  for (int l = 0; l < lanes; ++l) {
    const double x = std::min(strip.x_min + (l + 0.5) * pitch, strip.x_max - 0.5 * pitch);
    const bool up = l % 2 == 0;
    corners.emplace_back(x, up ? ylo : yhi);
    corners.emplace_back(x, up ? yhi : ylo);
  }
  return corners;
}

inline double polyline_length(const std::vector<Vec2>& p) {
  double s = 0.0;
  for (std::size_t c = 1; c < p.size(); ++c) s += (p[c] - p[c - 1]).norm();
  return s;
}

}  // namespace detail

// One sweep per agent over n equal vertical strips. Each path has
// op_time/dt waypoints spaced evenly by arc length. Lane ends reach one
// waypoint spacing past the footprint inset, so that the sampled path still
// sprays the strip corners where it turns.
inline std::vector<WaypointPath> lawnmower_plan(const Rect& domain, int n_agents, double op_time, double dt,
                                                double altitude) {
  if (n_agents < 1) throw ConfigError("lawnmower: need at least one agent");
  if (!(dt > 0.0)) throw ConfigError("lawnmower: dt must be positive");
  const int count = static_cast<int>(std::lround(op_time / dt));
  const double pitch = spray_footprint(altitude);
  const double strip_w = domain.width() / n_agents;

  std::vector<WaypointPath> paths(static_cast<std::size_t>(n_agents));
  for (int r = 0; r < n_agents; ++r) {
    const Rect strip{domain.x_min + r * strip_w, domain.y_min, domain.x_min + (r + 1) * strip_w, domain.y_max};
    // The spacing depends on the length, which depends on the reach; a few
    // fixed-point passes settle it.
    double reach = 0.0;
    std::vector<Vec2> corners;
    for (int pass = 0; pass < 3; ++pass) {
      corners = detail::strip_sweep(strip, pitch, reach);
      reach = count > 1 ? 1.01 * detail::polyline_length(corners) / (count - 1) : 0.0;
    }

    std::vector<double> cum(corners.size(), 0.0);
    for (std::size_t c = 1; c < corners.size(); ++c) cum[c] = cum[c - 1] + (corners[c] - corners[c - 1]).norm();
    const double total = cum.back();

    auto& path = paths[static_cast<std::size_t>(r)];
    path.waypoints.reserve(static_cast<std::size_t>(std::max(count, 0)));
    std::size_t seg = 0;
    for (int k = 0; k < count; ++k) {
      const double s = count > 1 ? total * k / (count - 1) : 0.0;
      while (seg + 2 < corners.size() && cum[seg + 1] < s) ++seg;
      Vec2 p = corners[seg];
      if (seg + 1 < corners.size()) {
        const double len = cum[seg + 1] - cum[seg];
        const double t = len > 0.0 ? std::clamp((s - cum[seg]) / len, 0.0, 1.0) : 0.0;
        p = corners[seg] + t * (corners[seg + 1] - corners[seg]);
      }
      path.waypoints.push_back({k, p, s});
    }
  }
  return paths;
}

// Position weight per reference point. With the default Q and R, heavier
// weights drive the attitude into the rate clamp and the loop oscillates;
// this value minimizes closed-loop tracking error on smooth references.
inline constexpr double kDefaultTrackingWeight = 4e-4;

// Finite-horizon LQ tracking of planar references. Each horizon step becomes a
// singleton subset carrying `tracking_weight` at its reference point, so the
// D2OC closed form solves the tracking problem unchanged.
inline ControlSolution mpc_track(std::span<const Vec2> reference, const DroneState& state,
                                 std::span<const LtvMatrices> mats_seq, const ControlWeights& w,
                                 double tracking_weight = kDefaultTrackingWeight) {
  const int horizon = static_cast<int>(reference.size());
  if (horizon < 1) throw Error("mpc_track: horizon must be at least 1");
  PredictionPlan plan;
  plan.horizon = horizon;
  plan.subsets.resize(reference.size());
  plan.targets.assign(reference.begin(), reference.end());
  plan.masses.assign(reference.size(), tracking_weight);
  for (std::size_t i = 0; i < reference.size(); ++i) plan.subsets[i].push_back({i, tracking_weight});
  return optimal_control(build_kkt(plan, state, mats_seq, w));
}

// Spectral multi-scale coverage on a K x K cosine basis over the domain.
// Coefficient matrices are indexed (k_x, k_y).
struct SmcState {
  int K = 40;
  Rect domain;
  int n_agents = 1;
  double time = 0.0;
  Eigen::MatrixXd reference;    // c_k
  Eigen::MatrixXd accumulated;  // sum over agents of the time integral of f_k
  Eigen::MatrixXd lambda;       // (1 + |k|^2)^(-3/2)
  Eigen::MatrixXd inv_norm;     // 1 / h_k

  // sum_k Lambda_k (s_k / (N t) - c_k)^2
  double ergodicity() const {
    if (time <= 0.0) return (lambda.array() * reference.array().square()).sum();
    const double scale = 1.0 / (n_agents * time);
    return (lambda.array() * (accumulated.array() * scale - reference.array()).square()).sum();
  }
};

namespace detail {

inline Eigen::VectorXd cos_series(int K, double omega, double x) {
  Eigen::VectorXd v(K);
  for (int k = 0; k < K; ++k) v(k) = std::cos(k * omega * x);
  return v;
}

inline Eigen::VectorXd sin_series(int K, double omega, double x) {
  Eigen::VectorXd v(K);
  for (int k = 0; k < K; ++k) v(k) = std::sin(k * omega * x);
  return v;
}

}  // namespace detail

// Builds the reference coefficients of a gridded density (any nonnegative
// scale; it is normalized to unit mass here).
inline SmcState make_smc_state(std::span<const double> density, const GridSpec& grid, const Rect& domain,
                               int n_agents, int K) {
  if (K < 1) throw ConfigError("smc: basis count must be positive");
  if (density.size() != grid.cell_count()) throw Error("smc: density does not match grid");
  SmcState s;
  s.K = K;
  s.domain = domain;
  s.n_agents = n_agents;
  const double Lx = domain.width();
  const double Ly = domain.height();
  const double wx = std::numbers::pi / Lx;
  const double wy = std::numbers::pi / Ly;

  s.lambda.resize(K, K);
  s.inv_norm.resize(K, K);
  for (int a = 0; a < K; ++a) {
    for (int b = 0; b < K; ++b) {
      s.lambda(a, b) = std::pow(1.0 + static_cast<double>(a * a + b * b), -1.5);
      const double ha = a == 0 ? 1.0 : std::sqrt(0.5);
      const double hb = b == 0 ? 1.0 : std::sqrt(0.5);
      s.inv_norm(a, b) = 1.0 / (std::sqrt(Lx * Ly) * ha * hb);
    }
  }

  Eigen::MatrixXd cx(K, grid.nx);
  for (int ix = 0; ix < grid.nx; ++ix) cx.col(ix) = detail::cos_series(K, wx, grid.cell_center(ix, 0).x() - domain.x_min);
  Eigen::MatrixXd cy(K, grid.ny);
  for (int iy = 0; iy < grid.ny; ++iy) cy.col(iy) = detail::cos_series(K, wy, grid.cell_center(0, iy).y() - domain.y_min);

  // rho is (nx x ny) so that cx * rho * cy^T is indexed (k_x, k_y).
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>> rho(
      density.data(), grid.nx, grid.ny);
  const double mass = rho.sum();
  if (!(mass > 0.0)) throw InvalidFieldError("smc: density has no mass");
  s.reference = (cx * rho * cy.transpose()).cwiseProduct(s.inv_norm) / mass;
  s.accumulated = Eigen::MatrixXd::Zero(K, K);
  return s;
}

// Adds dt * f_k(p) for every agent position and advances the clock.
inline void smc_accumulate(SmcState& s, std::span<const Vec2> positions, double dt) {
  const double wx = std::numbers::pi / s.domain.width();
  const double wy = std::numbers::pi / s.domain.height();
  for (const auto& p : positions) {
    const Eigen::VectorXd cx = detail::cos_series(s.K, wx, p.x() - s.domain.x_min);
    const Eigen::VectorXd cy = detail::cos_series(s.K, wy, p.y() - s.domain.y_min);
    s.accumulated.noalias() += dt * (cx * cy.transpose()).cwiseProduct(s.inv_norm);
  }
  s.time += dt;
}

// Unit direction that descends the ergodicity metric fastest at p. Falls back
// to the ascent direction of the smoothed density when the gradient vanishes
// (nothing accumulated yet).
inline Vec2 smc_direction(const SmcState& s, const Vec2& p) {
  const double wx = std::numbers::pi / s.domain.width();
  const double wy = std::numbers::pi / s.domain.height();
  const double xr = p.x() - s.domain.x_min;
  const double yr = p.y() - s.domain.y_min;
  const Eigen::VectorXd cx = detail::cos_series(s.K, wx, xr);
  const Eigen::VectorXd cy = detail::cos_series(s.K, wy, yr);
  Eigen::VectorXd dx = detail::sin_series(s.K, wx, xr);
  Eigen::VectorXd dy = detail::sin_series(s.K, wy, yr);
  for (int k = 0; k < s.K; ++k) {
    dx(k) *= -k * wx;
    dy(k) *= -k * wy;
  }

  auto gradient_of = [&](const Eigen::MatrixXd& coeff) {
    const Eigen::MatrixXd g = s.lambda.cwiseProduct(coeff).cwiseProduct(s.inv_norm);
    return Vec2(dx.dot(g * cy), cx.dot(g * dy));
  };

  const Eigen::MatrixXd S = s.accumulated - (s.n_agents * s.time) * s.reference;
  Vec2 b = gradient_of(S);
  if (b.norm() > 1e-14) return -b.normalized();
  b = gradient_of(s.reference);
  if (b.norm() > 1e-14) return b.normalized();
  return Vec2::Zero();
}

inline Vec2 clamp_to(const Rect& r, const Vec2& p) {
  return {std::clamp(p.x(), r.x_min, r.x_max), std::clamp(p.y(), r.y_min, r.y_max)};
}

// One first-order SMC step: record the current positions, then command every
// agent at full speed along its descent direction.
inline std::vector<Vec2> smc_step(SmcState& s, std::span<const Vec2> positions, double dt, double v_max) {
  smc_accumulate(s, positions, dt);
  std::vector<Vec2> v;
  v.reserve(positions.size());
  for (const auto& p : positions) v.push_back(v_max * smc_direction(s, p));
  return v;
}

// Rolls the first-order SMC law forward `horizon` steps from the given
// positions on a copy of the state. Result is [agent][step].
inline std::vector<std::vector<Vec2>> smc_reference(const SmcState& s, std::span<const Vec2> positions, double dt,
                                                    double v_max, int horizon) {
  SmcState sim = s;
  std::vector<Vec2> pos(positions.begin(), positions.end());
  std::vector<std::vector<Vec2>> ref(pos.size());
  for (int h = 0; h < horizon; ++h) {
    for (std::size_t r = 0; r < pos.size(); ++r) {
      pos[r] = clamp_to(s.domain, pos[r] + dt * v_max * smc_direction(sim, pos[r]));
      ref[r].push_back(pos[r]);
    }
    smc_accumulate(sim, pos, dt);
  }
  return ref;
}

}  // namespace d2oc

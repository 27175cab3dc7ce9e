#pragma once

// Episode execution. One loop drives time; every step each agent plans,
// saturates, advances its plant and tank, and sprays. D2OC then updates and
// shares weight ledgers.

#include "d2oc/agrosim.hpp"
#include "d2oc/baselines.hpp"
#include "d2oc/common.hpp"
#include "d2oc/controller.hpp"
#include "d2oc/density.hpp"
#include "d2oc/dynamics.hpp"
#include "d2oc/scenario.hpp"
#include "d2oc/transport.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace d2oc {

struct AgentTrajectory {
  std::vector<DroneState> states;  // steps 0..M
  std::vector<double> tank_height; // steps 0..M
  std::vector<double> released;    // solution volume sprayed in step k -> k+1 [m^3]

  Vec2 position(std::size_t k) const { return planar_position(states[k]); }
};

struct RunMetrics {
  double total_dosage = 0.0;  // grams released, deposited + discarded
  double reduction_rate = 0.0;
  double max_survival = 0.0;
  std::array<double, 10> histogram{};
};

struct RunDiagnostics {
  int input_saturations = 0;
  int state_clamps = 0;
  double max_ledger_error = 0.0;          // max |sum beta + consumed - 1| over agents and steps
  double max_component_disagreement = 0.0; // max weight gap between agents sharing a component
};

struct RunResult {
  ScenarioConfig config;
  std::vector<AgentTrajectory> agents;
  std::vector<double> step_weights;  // alpha^k used for every agent
  SampleCloud reference_cloud;       // initial sample points
  DoseGrid grid;
  RunMetrics metrics;
  RunDiagnostics diagnostics;

  int steps() const { return agents.empty() ? 0 : static_cast<int>(agents.front().states.size()) - 1; }
};

// Called after the Stage C barrier of every D2OC step.
using LedgerObserver =
    std::function<void(int step, std::span<const AgentLedger> ledgers, std::span<const Vec2> positions)>;

namespace detail {

// Range-connected components of the agent graph; returns a label per agent.
inline std::vector<int> comm_components(std::span<const Vec2> positions, double range) {
  const std::size_t n = positions.size();
  std::vector<int> label(n, -1);
  int next = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    std::vector<std::size_t> stack{s};
    label[s] = next;
    while (!stack.empty()) {
      const std::size_t a = stack.back();
      stack.pop_back();
      for (std::size_t b = 0; b < n; ++b) {
        if (label[b] < 0 && (positions[a] - positions[b]).norm() <= range) {
          label[b] = next;
          stack.push_back(b);
        }
      }
    }
    ++next;
  }
  return label;
}

template <typename Fn>
auto with_context(int step, int agent, Fn&& fn) {
  const std::string ctx = "step " + std::to_string(step) + ", agent " + std::to_string(agent) + ": ";
  try {
    return fn();
  } catch (const NumericalError& e) {
    throw NumericalError(ctx + e.what());
  } catch (const InfeasibleError& e) {
    throw InfeasibleError(ctx + e.what());
  } catch (const InvalidFieldError& e) {
    throw InvalidFieldError(ctx + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw Error(ctx + e.what());
  }
}

struct Agent {
  DroneState x = DroneState::Zero();
  TankState tank;
};

}  // namespace detail

inline RunResult run_scenario(const ScenarioConfig& cfg, const LedgerObserver& observer = {}) {
  const int M = cfg.steps();
  const int na = cfg.n_agents;
  const double dt = cfg.dt;

  RunResult res;
  res.config = cfg;
  const DensityField field = cfg.density_field();
  const GridSpec grid = cfg.grid();
  res.grid = DoseGrid::from_density(grid, rasterize_density(field, grid));
  res.reference_cloud = sample_points(field, cfg.sample_points, cfg.seed);
  res.step_weights = uniform_step_weights(na, M);

  const double side = spray_footprint(cfg.altitude);
  const double grams_per_m3 = cfg.herbicide.concentration * cfg.dose_scale;

  std::vector<WaypointPath> lm_paths;
  if (cfg.method == Method::kLawnmower && M > 0)
    lm_paths = lawnmower_plan(cfg.domain, na, cfg.operation_time, dt, cfg.altitude);

  std::vector<detail::Agent> agents(static_cast<std::size_t>(na));
  res.agents.resize(static_cast<std::size_t>(na));
  for (int r = 0; r < na; ++r) {
    auto& a = agents[static_cast<std::size_t>(r)];
    const Vec2 p0 = lm_paths.empty() ? cfg.initial_positions[static_cast<std::size_t>(r)]
                                     : lm_paths[static_cast<std::size_t>(r)].at(0);
    a.x(kX) = p0.x();
    a.x(kY) = p0.y();
    a.tank = TankState::with_height(cfg.tank.initial_height, cfg.tank);
    auto& tr = res.agents[static_cast<std::size_t>(r)];
    tr.states.reserve(static_cast<std::size_t>(M) + 1);
    tr.states.push_back(a.x);
    tr.tank_height.push_back(a.tank.height);
  }

  std::vector<AgentLedger> ledgers;
  if (cfg.method == Method::kD2oc) {
    for (int r = 0; r < na; ++r) ledgers.push_back({r, res.reference_cloud, res.step_weights, 0});
  }
  SmcState smc;
  if (cfg.method == Method::kSmc) smc = make_smc_state(res.grid.rho0, grid, cfg.domain, na, cfg.smc_bases);

  auto positions = [&] {
    std::vector<Vec2> p;
    for (const auto& a : agents) p.push_back(planar_position(a.x));
    return p;
  };

  std::vector<std::vector<Vec2>> smc_refs;
  for (int k = 0; k < M; ++k) {
    if (cfg.method == Method::kSmc) {
      const auto p = positions();
      smc_accumulate(smc, p, dt);
      smc_refs = smc_reference(smc, p, dt, cfg.drone.max_speed, cfg.mpc_horizon);
    }

    for (int r = 0; r < na; ++r) {
      auto& a = agents[static_cast<std::size_t>(r)];
      const Vec2 here = planar_position(a.x);

      ControlInput u = detail::with_context(k, r, [&] {
        if (cfg.method == Method::kD2oc) {
          const auto& ledger = ledgers[static_cast<std::size_t>(r)];
          const PredictionPlan plan = select_local_samples(ledger, here, cfg.horizon);
          const auto mats = predict_ltv_sequence(a.tank, cfg.drone, cfg.tank, dt, cfg.horizon);
          return optimal_control(build_kkt(plan, a.x, mats, cfg.control)).u;
        }
        std::vector<Vec2> ref;
        if (cfg.method == Method::kLawnmower) {
          for (int i = 1; i <= cfg.mpc_horizon; ++i) ref.push_back(lm_paths[static_cast<std::size_t>(r)].at(k + i));
        } else {
          ref = smc_refs[static_cast<std::size_t>(r)];
        }
        const auto mats = predict_ltv_sequence(a.tank, cfg.drone, cfg.tank, dt, cfg.mpc_horizon);
        return mpc_track(ref, a.x, mats, cfg.control, cfg.tracking_weight).u;
      });

      const double mass = system_mass(a.tank, cfg.drone);
      const SaturatedInput sat = saturate(u, mass, cfg.drone);
      if (sat.clamped) ++res.diagnostics.input_saturations;
      const LtvMatrices mats = ltv_matrices(a.tank, cfg.drone, cfg.tank, dt);
      a.x = step(a.x, sat.input, mats);
      res.diagnostics.state_clamps += clamp_state(a.x, cfg.drone);

      const TankState before = a.tank;
      a.tank = tank_step(a.tank, cfg.tank, dt);
      const double volume = (before.height - a.tank.height) * cfg.tank.cross_section();
      const Vec2 there = planar_position(a.x);
      deposit(res.grid, there, side, volume / dt, grams_per_m3, dt);

      auto& tr = res.agents[static_cast<std::size_t>(r)];
      tr.states.push_back(a.x);
      tr.tank_height.push_back(a.tank.height);
      tr.released.push_back(volume);
      res.metrics.total_dosage += volume * grams_per_m3;

      if (cfg.method == Method::kD2oc) {
        auto& ledger = ledgers[static_cast<std::size_t>(r)];
        ledger = detail::with_context(k, r, [&] { return update_weights(ledger, there, ledger.alpha(ledger.step + 1)); });
      }
    }

    if (cfg.method == Method::kD2oc) {
      const auto p = positions();
      ledgers = share_weights(std::move(ledgers), p, cfg.comm_range);
      for (const auto& l : ledgers)
        res.diagnostics.max_ledger_error = std::max(res.diagnostics.max_ledger_error, std::abs(l.cloud.ledger_error()));
      const auto label = detail::comm_components(p, cfg.comm_range);
      for (int r = 0; r < na; ++r) {
        for (int s = r + 1; s < na; ++s) {
          if (label[static_cast<std::size_t>(r)] != label[static_cast<std::size_t>(s)]) continue;
          const auto& wr = ledgers[static_cast<std::size_t>(r)].cloud.weights;
          const auto& ws = ledgers[static_cast<std::size_t>(s)].cloud.weights;
          for (std::size_t j = 0; j < wr.size(); ++j)
            res.diagnostics.max_component_disagreement =
                std::max(res.diagnostics.max_component_disagreement, std::abs(wr[j] - ws[j]));
        }
      }
      if (observer) observer(k, ledgers, p);
    }
  }

  apply_survival(res.grid, cfg.herbicide);
  res.metrics.reduction_rate = reduction_rate(res.grid);
  res.metrics.max_survival = max_survival_density(res.grid);
  res.metrics.histogram = survival_histogram(res.grid);
  return res;
}

// Empirical measure of all agent points, each carrying alpha^k. Consecutive
// points are pooled in blocks of `stride` steps (the block's mass sits on its
// last point); stride 1 is exact.
inline DiscreteMeasure trajectory_measure(const RunResult& result, int stride = 1) {
  if (stride < 1) throw Error("trajectory_measure: stride must be positive");
  DiscreteMeasure mu;
  const int M = result.steps();
  for (const auto& tr : result.agents) {
    double mass = 0.0;
    for (int k = 1; k <= M; ++k) {
      mass += result.step_weights[static_cast<std::size_t>(k - 1)];
      if (k % stride == 0 || k == M) {
        mu.points.push_back(tr.position(static_cast<std::size_t>(k)));
        mu.weights.push_back(mass);
        mass = 0.0;
      }
    }
  }
  return mu;
}

// Squared 2-Wasserstein distance between the agents' trajectory measure and
// the reference sample cloud.
inline double trajectory_wasserstein(const RunResult& result, const SampleCloud& cloud, int stride = 1) {
  const DiscreteMeasure mu = trajectory_measure(result, stride);
  if (mu.points.empty()) return 0.0;
  DiscreteMeasure ref{cloud.positions, cloud.weights};
  const double total = ref.total();
  for (double& w : ref.weights) w /= total;
  return wasserstein_lp(mu, ref).total_cost;
}

// Smallest stride keeping the trajectory measure at or below max_atoms points.
inline int trajectory_stride_for(const RunResult& result, int max_atoms) {
  const long atoms = static_cast<long>(result.agents.size()) * result.steps();
  if (atoms <= max_atoms) return 1;
  return static_cast<int>((atoms + max_atoms - 1) / max_atoms);
}

}  // namespace d2oc

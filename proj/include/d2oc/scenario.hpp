#pragma once

// Scenario configuration: a YAML key tree whose omitted keys fall back to the
// reference field-trial parameters. See scenarios/default.yaml for the schema.

#include "d2oc/agrosim.hpp"
#include "d2oc/baselines.hpp"
#include "d2oc/common.hpp"
#include "d2oc/controller.hpp"
#include "d2oc/density.hpp"
#include "d2oc/dynamics.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace d2oc {

enum class Method { kD2oc, kLawnmower, kSmc };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::kD2oc: return "d2oc";
    case Method::kLawnmower: return "lm";
    case Method::kSmc: return "smc";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "d2oc") return Method::kD2oc;
  if (s == "lm") return Method::kLawnmower;
  if (s == "smc") return Method::kSmc;
  throw ConfigError("method: expected one of d2oc, lm, smc (got '" + s + "')");
}

// Three-mode reconstruction of the reference weed map: the global peak at
// (12, 82), a second patch around (20, 40) and a broad third patch. Only the
// two mode locations are known; spreads and weights are chosen here.
inline std::vector<GaussianComponent> default_weed_mixture(const Rect& domain) {
  const double sx = domain.width() / 100.0;
  const double sy = domain.height() / 100.0;
  auto at = [&](double x, double y) { return Vec2(domain.x_min + x * sx, domain.y_min + y * sy); };
  auto cov = [&](double a, double b) {
    Eigen::Matrix2d c;
    c << a * a * sx * sx, 0.0, 0.0, b * b * sy * sy;
    return c;
  };
  return {
      {at(12.0, 82.0), cov(7.0, 7.0), 0.35},
      {at(20.0, 40.0), cov(9.0, 9.0), 0.35},
      {at(70.0, 60.0), cov(12.0, 10.0), 0.30},
  };
}

// Three corners first, then the fourth corner and edge midpoints, inset by 1 %
// of the domain so no agent starts on the boundary.
inline std::vector<Vec2> default_initial_positions(const Rect& d, int n) {
  const double ix = 0.01 * d.width();
  const double iy = 0.01 * d.height();
  const double x0 = d.x_min + ix, x1 = d.x_max - ix, y0 = d.y_min + iy, y1 = d.y_max - iy;
  const double xm = 0.5 * (d.x_min + d.x_max), ym = 0.5 * (d.y_min + d.y_max);
  const std::vector<Vec2> slots = {{x0, y0}, {x1, y0}, {x0, y1}, {x1, y1}, {xm, y0}, {x1, ym}, {xm, y1}, {x0, ym}};
  std::vector<Vec2> out;
  for (int r = 0; r < n; ++r) {
    const Vec2& base = slots[static_cast<std::size_t>(r) % slots.size()];
    const int lap = r / static_cast<int>(slots.size());
    out.push_back(base + Vec2(lap * ix, lap * iy));
  }
  return out;
}

struct ScenarioConfig {
  std::uint64_t seed = 1;
  Method method = Method::kD2oc;
  double operation_time = 180.0;
  double dt = 0.1;
  int horizon = 60;
  int sample_points = 2000;
  double comm_range = kUnlimitedRange;
  double dose_scale = 10.0;

  Rect domain{0.0, 0.0, 100.0, 100.0};
  double grid_cell = 0.1;
  std::vector<GaussianComponent> density = default_weed_mixture(domain);

  int n_agents = 3;
  std::vector<Vec2> initial_positions = default_initial_positions(domain, 3);
  double altitude = 1.5;

  DroneParams drone;
  TankParams tank;
  HerbicideParams herbicide;
  ControlWeights control = ControlWeights::defaults();

  int mpc_horizon = 20;
  int smc_bases = 40;
  double tracking_weight = kDefaultTrackingWeight;

  std::vector<std::string> warnings;

  int steps() const { return static_cast<int>(std::lround(operation_time / dt)); }
  DensityField density_field() const { return DensityField(density, domain); }
  GridSpec grid() const { return GridSpec::covering(domain, grid_cell); }
};

namespace detail {

class YamlReader {
 public:
  explicit YamlReader(const YAML::Node& root) : root_(root) {}

  template <typename T>
  void get(const YAML::Node& parent, const std::string& key, const std::string& path, T& out) {
    seen_.insert(path);
    const YAML::Node n = parent[key];
    if (!n) return;
    try {
      out = n.as<T>();
    } catch (const YAML::Exception& e) {
      throw ConfigError(where(n) + path + ": expected a " + type_name<T>());
    }
  }

  std::vector<double> get_list(const YAML::Node& parent, const std::string& key, const std::string& path,
                               std::size_t expected) {
    seen_.insert(path);
    const YAML::Node n = parent[key];
    if (!n) return {};
    if (!n.IsSequence() || (expected > 0 && n.size() != expected))
      throw ConfigError(where(n) + path + ": expected a list of " + std::to_string(expected) + " numbers");
    std::vector<double> v;
    for (const auto& e : n) {
      try {
        v.push_back(e.as<double>());
      } catch (const YAML::Exception&) {
        throw ConfigError(where(e) + path + ": expected numbers");
      }
    }
    return v;
  }

  void mark(const std::string& path) { seen_.insert(path); }

  // Rejects keys the schema does not know, which catches typos.
  void check_unknown(const YAML::Node& node, const std::string& prefix) const {
    if (!node.IsMap()) return;
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      const std::string path = prefix.empty() ? key : prefix + "." + key;
      if (!seen_.count(path)) throw ConfigError(where(kv.first) + path + ": unknown key");
      if (kv.second.IsMap()) check_unknown(kv.second, path);
    }
  }

  static std::string where(const YAML::Node& n) {
    const auto m = n.Mark();
    if (m.line < 0) return "";
    return "line " + std::to_string(m.line + 1) + ": ";
  }

 private:
  template <typename T>
  static std::string type_name() {
    if constexpr (std::is_same_v<T, std::string>) return "string";
    else if constexpr (std::is_integral_v<T>) return "integer";
    else return "number";
  }

  YAML::Node root_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

}  // namespace detail

// Checks cross-field consistency and module preconditions.
inline void validate_scenario(ScenarioConfig& c) {
  using detail::require;
  require(c.dt > 0.0, "dt", "must be positive");
  require(c.operation_time >= 0.0, "operation_time", "must be nonnegative");
  const double ratio = c.operation_time / c.dt;
  require(std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, ratio), "operation_time",
          "must be an integer multiple of dt");
  require(c.horizon >= 1, "horizon", "must be at least 1");
  require(c.sample_points >= 1, "sample_points", "must be at least 1");
  require(c.comm_range > 0.0, "comm_range", "must be positive or 'unlimited'");
  require(c.dose_scale > 0.0, "dose_scale", "must be positive");
  require(c.domain.width() > 0.0 && c.domain.height() > 0.0, "domain", "must have positive area");
  require(c.grid_cell > 0.0, "grid_cell", "must be positive");
  require(c.n_agents >= 1, "agents.count", "must be at least 1");
  require(static_cast<int>(c.initial_positions.size()) == c.n_agents, "agents.positions",
          "needs one position per agent");
  for (const auto& p : c.initial_positions) require(c.domain.contains(p), "agents.positions", "must lie in the domain");
  require(c.altitude > 0.0, "agents.altitude", "must be positive");
  if (!spray_altitude_in_range(c.altitude))
    c.warnings.push_back("agents.altitude outside [1.5, 3] m; spray footprint clamped");

  const auto& d = c.drone;
  require(d.mass > 0.0, "drone.mass", "must be positive");
  require(d.inertia_x > 0.0 && d.inertia_y > 0.0 && d.inertia_z > 0.0, "drone.inertia", "must be positive");
  require(d.max_thrust > 0.0, "drone.max_thrust", "must be positive");
  require(d.max_torque_rp > 0.0, "drone.max_torque_roll_pitch", "must be positive");
  require(d.max_torque_yaw > 0.0, "drone.max_torque_yaw", "must be positive");
  require(d.max_speed > 0.0, "drone.max_speed", "must be positive");
  require(d.max_angle > 0.0, "drone.max_angle_deg", "must be positive");
  require(d.max_rate > 0.0, "drone.max_rate_deg", "must be positive");
  require(d.gravity > 0.0, "drone.gravity", "must be positive");

  const auto& t = c.tank;
  require(t.side > 0.0, "tank.side", "must be positive");
  require(t.mount_offset > 0.0, "tank.mount_offset", "must be positive");
  require(t.solution_density > 0.0, "tank.solution_density", "must be positive");
  require(t.spray_rate > 0.0, "tank.spray_rate", "must be positive");
  require(t.initial_height > 0.0, "tank.initial_volume", "must be positive");
  require(t.initial_height <= t.tank_height * (1.0 + 1e-12), "tank.initial_volume", "exceeds tank.capacity");

  require(c.herbicide.ld50 > 0.0, "herbicide.ld50", "must be positive");
  require(c.herbicide.concentration > 0.0, "herbicide.concentration", "must be positive");

  for (int i = 0; i < kStateDim; ++i) require(c.control.q_diag(i) >= 0.0, "control.q", "entries must be nonnegative");
  for (int i = 0; i < kInputDim; ++i) require(c.control.r_diag(i) > 0.0, "control.r", "entries must be positive");

  require(c.mpc_horizon >= 1, "baselines.mpc_horizon", "must be at least 1");
  require(c.smc_bases >= 1, "baselines.smc_bases", "must be at least 1");
  require(c.tracking_weight > 0.0, "baselines.tracking_weight", "must be positive");

  try {
    (void)c.density_field();
  } catch (const InvalidFieldError& e) {
    throw ConfigError(std::string("density: ") + e.what());
  }
}

inline ScenarioConfig parse_scenario(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("line " + std::to_string(e.mark.line + 1) + ": parse error: " + e.msg);
  }
  ScenarioConfig c;
  if (root.IsNull()) {
    validate_scenario(c);
    return c;
  }
  if (!root.IsMap()) throw ConfigError("top level must be a key/value map");

  detail::YamlReader rd(root);
  std::string method = to_string(c.method);
  rd.get(root, "seed", "seed", c.seed);
  rd.get(root, "method", "method", method);
  c.method = parse_method(method);
  rd.get(root, "operation_time", "operation_time", c.operation_time);
  rd.get(root, "dt", "dt", c.dt);
  rd.get(root, "horizon", "horizon", c.horizon);
  rd.get(root, "sample_points", "sample_points", c.sample_points);
  rd.get(root, "dose_scale", "dose_scale", c.dose_scale);
  rd.get(root, "grid_cell", "grid_cell", c.grid_cell);

  rd.mark("comm_range");
  if (const auto n = root["comm_range"]) {
    const std::string s = n.as<std::string>();
    if (s == "unlimited" || s == "inf") {
      c.comm_range = kUnlimitedRange;
    } else {
      try {
        c.comm_range = n.as<double>();
      } catch (const YAML::Exception&) {
        throw ConfigError(detail::YamlReader::where(n) + "comm_range: expected metres or 'unlimited'");
      }
    }
  }

  std::string convention = "as_written";
  rd.get(root, "survival_convention", "survival_convention", convention);
  if (convention == "as_written") c.herbicide.convention = SurvivalConvention::kAsWritten;
  else if (convention == "ld50_normalized") c.herbicide.convention = SurvivalConvention::kLd50Normalized;
  else throw ConfigError("survival_convention: expected as_written or ld50_normalized");

  rd.mark("domain");
  if (const auto n = root["domain"]) {
    rd.get(n, "x_min", "domain.x_min", c.domain.x_min);
    rd.get(n, "y_min", "domain.y_min", c.domain.y_min);
    rd.get(n, "x_max", "domain.x_max", c.domain.x_max);
    rd.get(n, "y_max", "domain.y_max", c.domain.y_max);
  }
  c.density = default_weed_mixture(c.domain);

  rd.mark("density");
  if (const auto n = root["density"]) {
    if (!n.IsSequence() || n.size() == 0) throw ConfigError(detail::YamlReader::where(n) + "density: expected a list of components");
    c.density.clear();
    for (const auto& comp : n) {
      GaussianComponent g;
      const std::string p = "density[]";
      rd.mark(p);
      const auto mean = rd.get_list(comp, "mean", p + ".mean", 2);
      if (mean.empty()) throw ConfigError(detail::YamlReader::where(comp) + "density.mean: required");
      g.mean = {mean[0], mean[1]};
      const auto sigma = rd.get_list(comp, "sigma", p + ".sigma", 2);
      const auto cov = rd.get_list(comp, "covariance", p + ".covariance", 4);
      if (!sigma.empty()) {
        g.covariance << sigma[0] * sigma[0], 0.0, 0.0, sigma[1] * sigma[1];
      } else if (!cov.empty()) {
        g.covariance << cov[0], cov[1], cov[2], cov[3];
      } else {
        throw ConfigError(detail::YamlReader::where(comp) + "density: each component needs sigma or covariance");
      }
      rd.get(comp, "weight", p + ".weight", g.mixture_weight);
      c.density.push_back(g);
      for (const auto& kv : comp) {
        const auto k = kv.first.as<std::string>();
        if (k != "mean" && k != "sigma" && k != "covariance" && k != "weight")
          throw ConfigError(detail::YamlReader::where(kv.first) + "density." + k + ": unknown key");
      }
    }
  }

  rd.mark("agents");
  bool positions_given = false;
  if (const auto n = root["agents"]) {
    rd.get(n, "count", "agents.count", c.n_agents);
    rd.get(n, "altitude", "agents.altitude", c.altitude);
    rd.mark("agents.positions");
    if (const auto ps = n["positions"]) {
      positions_given = true;
      if (!ps.IsSequence()) throw ConfigError(detail::YamlReader::where(ps) + "agents.positions: expected a list");
      c.initial_positions.clear();
      for (const auto& p : ps) {
        if (!p.IsSequence() || p.size() != 2)
          throw ConfigError(detail::YamlReader::where(p) + "agents.positions: each entry must be [x, y]");
        c.initial_positions.emplace_back(p[0].as<double>(), p[1].as<double>());
      }
    }
  }
  if (!positions_given) c.initial_positions = default_initial_positions(c.domain, c.n_agents);

  rd.mark("drone");
  if (const auto n = root["drone"]) {
    auto& d = c.drone;
    rd.get(n, "mass", "drone.mass", d.mass);
    const auto in = rd.get_list(n, "inertia", "drone.inertia", 3);
    if (!in.empty()) {
      d.inertia_x = in[0];
      d.inertia_y = in[1];
      d.inertia_z = in[2];
    }
    rd.get(n, "max_thrust", "drone.max_thrust", d.max_thrust);
    rd.get(n, "max_torque_roll_pitch", "drone.max_torque_roll_pitch", d.max_torque_rp);
    rd.get(n, "max_torque_yaw", "drone.max_torque_yaw", d.max_torque_yaw);
    rd.get(n, "max_speed", "drone.max_speed", d.max_speed);
    double angle = d.max_angle * 180.0 / std::numbers::pi;
    double rate = d.max_rate * 180.0 / std::numbers::pi;
    rd.get(n, "max_angle_deg", "drone.max_angle_deg", angle);
    rd.get(n, "max_rate_deg", "drone.max_rate_deg", rate);
    d.max_angle = deg2rad(angle);
    d.max_rate = deg2rad(rate);
    rd.get(n, "gravity", "drone.gravity", d.gravity);
  }

  rd.mark("tank");
  if (const auto n = root["tank"]) {
    auto& t = c.tank;
    rd.get(n, "side", "tank.side", t.side);
    rd.get(n, "mount_offset", "tank.mount_offset", t.mount_offset);
    rd.get(n, "solution_density", "tank.solution_density", t.solution_density);
    rd.get(n, "spray_rate", "tank.spray_rate", t.spray_rate);
    double volume = 8e-3;
    double capacity = -1.0;
    rd.get(n, "initial_volume", "tank.initial_volume", volume);
    rd.get(n, "capacity", "tank.capacity", capacity);
    if (t.side > 0.0) {
      t.initial_height = volume / t.cross_section();
      t.tank_height = capacity > 0.0 ? capacity / t.cross_section() : t.initial_height;
    }
  }

  rd.mark("herbicide");
  if (const auto n = root["herbicide"]) {
    rd.get(n, "ld50", "herbicide.ld50", c.herbicide.ld50);
    rd.get(n, "concentration", "herbicide.concentration", c.herbicide.concentration);
  }

  rd.mark("control");
  if (const auto n = root["control"]) {
    const auto q = rd.get_list(n, "q", "control.q", kStateDim);
    const auto r = rd.get_list(n, "r", "control.r", kInputDim);
    for (std::size_t i = 0; i < q.size(); ++i) c.control.q_diag(static_cast<Eigen::Index>(i)) = q[i];
    for (std::size_t i = 0; i < r.size(); ++i) c.control.r_diag(static_cast<Eigen::Index>(i)) = r[i];
  }

  rd.mark("baselines");
  if (const auto n = root["baselines"]) {
    rd.get(n, "mpc_horizon", "baselines.mpc_horizon", c.mpc_horizon);
    rd.get(n, "smc_bases", "baselines.smc_bases", c.smc_bases);
    rd.get(n, "tracking_weight", "baselines.tracking_weight", c.tracking_weight);
  }

  rd.check_unknown(root, "");
  validate_scenario(c);
  return c;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace d2oc

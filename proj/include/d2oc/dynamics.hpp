#pragma once

// Linear time-varying model of a spraying quadrotor. The solution tank drains
// at a constant volumetric rate, so mass and moments of inertia shrink over
// the mission and the discrete-time (A_k, B_k) pair changes every step.

#include "d2oc/common.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace d2oc {

inline constexpr int kStateDim = 12;
inline constexpr int kInputDim = 4;

using DroneState = Eigen::Matrix<double, kStateDim, 1>;
using ControlInput = Eigen::Matrix<double, kInputDim, 1>;

// Slots of DroneState: Euler angles, body rates, body velocities, position.
enum StateIndex : int { kPhi = 0, kTheta, kPsi, kP, kQ, kR, kU, kV, kW, kX, kY, kZ };
// Slots of ControlInput: thrust deviation from hover, then body torques.
enum InputIndex : int { kThrust = 0, kTauX, kTauY, kTauZ };

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

struct DroneParams {
  double mass = 0.3;              // m_d [kg]
  double inertia_x = 0.2;         // [kg m^2]
  double inertia_y = 0.2;
  double inertia_z = 0.4;
  double max_thrust = 440.0;      // [N]
  double max_torque_rp = 81.4;    // roll/pitch [N m]
  double max_torque_yaw = 5.5;    // [N m]
  double max_speed = 7.0;         // [m/s]
  double max_angle = deg2rad(15.0);
  double max_rate = deg2rad(15.0);
  double gravity = 9.81;
};

struct TankParams {
  double side = 0.15;               // l_L [m]
  double mount_offset = 0.2;        // l_D, system mass center to tank bottom [m]
  double solution_density = 1000.0; // rho_s [kg/m^3]
  double spray_rate = 1.4e-5;       // Q_s [m^3/s]
  double initial_height = 8e-3 / (0.15 * 0.15);  // 8 L of solution [m]
  double tank_height = 8e-3 / (0.15 * 0.15);

  double cross_section() const { return side * side; }
};

struct TankState {
  double height = 0.0;  // h_s [m]
  double mass = 0.0;    // m_s [kg]

  static TankState with_height(double h, const TankParams& p) {
    const double hh = std::max(0.0, h);
    return {hh, p.solution_density * p.cross_section() * hh};
  }
  double volume(const TankParams& p) const { return height * p.cross_section(); }
};

struct Inertia {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct LtvMatrices {
  Eigen::Matrix<double, kStateDim, kStateDim> A = Eigen::Matrix<double, kStateDim, kStateDim>::Identity();
  Eigen::Matrix<double, kStateDim, kInputDim> B = Eigen::Matrix<double, kStateDim, kInputDim>::Zero();
};

// Drains the tank for dt seconds. An empty tank stays empty.
inline TankState tank_step(const TankState& tank, const TankParams& params, double dt) {
  if (dt < 0.0) throw Error("tank_step: dt must be nonnegative");
  if (dt == 0.0) return tank;
  return TankState::with_height(tank.height - dt * params.spray_rate / params.cross_section(), params);
}

inline double system_mass(const TankState& tank, const DroneParams& drone) { return drone.mass + tank.mass; }

// Drone inertia plus the solution prism, shifted from its own mass center to
// the system mass center (parallel axis) along the body z axis.
inline Inertia moments_of_inertia(const TankState& tank, const DroneParams& drone, const TankParams& params) {
  const double ms = tank.mass;
  const double h = tank.height;
  const double l = params.side;
  const double arm = params.mount_offset - 0.5 * h;
  const double tilt_axis = ms * arm * arm + ms / 12.0 * (l * l + h * h);
  return {drone.inertia_x + tilt_axis, drone.inertia_y + tilt_axis, drone.inertia_z + ms / 6.0 * l * l};
}

inline LtvMatrices ltv_matrices(double mass, const Inertia& inertia, double dt, double gravity) {
  if (!(mass > 0.0)) throw Error("ltv_matrices: mass must be positive");
  if (!(inertia.x > 0.0) || !(inertia.y > 0.0) || !(inertia.z > 0.0))
    throw Error("ltv_matrices: moments of inertia must be positive");
  if (dt < 0.0) throw Error("ltv_matrices: dt must be nonnegative");

  LtvMatrices m;
  auto& A = m.A;
  auto& B = m.B;
  // Attitude integrates body rates.
  A.block<3, 3>(kPhi, kP) = dt * Eigen::Matrix3d::Identity();
  // Small tilt couples gravity into horizontal body velocity.
  A(kU, kTheta) = -dt * gravity;
  A(kV, kPhi) = dt * gravity;
  // Position integrates velocity.
  A.block<3, 3>(kX, kU) = dt * Eigen::Matrix3d::Identity();

  B(kP, kTauX) = dt / inertia.x;
  B(kQ, kTauY) = dt / inertia.y;
  B(kR, kTauZ) = dt / inertia.z;
  B(kW, kThrust) = -dt / mass;
  return m;
}

inline LtvMatrices ltv_matrices(const TankState& tank, const DroneParams& drone, const TankParams& params,
                                double dt) {
  return ltv_matrices(system_mass(tank, drone), moments_of_inertia(tank, drone, params), dt, drone.gravity);
}

// Plant matrices for steps k, k+1, ..., k+count-1, with the tank drained
// continuously from its state at step k.
inline std::vector<LtvMatrices> predict_ltv_sequence(const TankState& tank, const DroneParams& drone,
                                                     const TankParams& params, double dt, int count) {
  std::vector<LtvMatrices> seq;
  seq.reserve(static_cast<std::size_t>(std::max(count, 0)));
  TankState t = tank;
  for (int i = 0; i < count; ++i) {
    seq.push_back(ltv_matrices(t, drone, params, dt));
    t = tank_step(t, params, dt);
  }
  return seq;
}

inline DroneState step(const DroneState& x, const ControlInput& u, const LtvMatrices& mats) {
  return mats.A * x + mats.B * u;
}

inline double hover_thrust(double mass, double gravity) {
  if (!(mass > 0.0)) throw Error("hover_thrust: mass must be positive");
  return mass * gravity;
}

struct SaturatedInput {
  ControlInput input = ControlInput::Zero();
  bool clamped = false;
};

// Clamps total thrust (hover + deviation) to [0, max_thrust] and the torques
// to their limits.
inline SaturatedInput saturate(const ControlInput& u, double mass, const DroneParams& params) {
  SaturatedInput out{u, false};
  const double hover = hover_thrust(mass, params.gravity);
  const double total = std::clamp(hover + u(kThrust), 0.0, params.max_thrust);
  out.input(kThrust) = total - hover;
  out.input(kTauX) = std::clamp(u(kTauX), -params.max_torque_rp, params.max_torque_rp);
  out.input(kTauY) = std::clamp(u(kTauY), -params.max_torque_rp, params.max_torque_rp);
  out.input(kTauZ) = std::clamp(u(kTauZ), -params.max_torque_yaw, params.max_torque_yaw);
  out.clamped = out.input != u;
  return out;
}

// Enforces roll/pitch, body-rate and speed limits on a propagated state.
// Returns the number of limits that were active.
inline int clamp_state(DroneState& x, const DroneParams& params) {
  int active = 0;
  auto clip = [&active](double& v, double lim) {
    if (v > lim) {
      v = lim;
      ++active;
    } else if (v < -lim) {
      v = -lim;
      ++active;
    }
  };
  clip(x(kPhi), params.max_angle);
  clip(x(kTheta), params.max_angle);
  clip(x(kP), params.max_rate);
  clip(x(kQ), params.max_rate);
  clip(x(kR), params.max_rate);
  const double speed = x.segment<3>(kU).norm();
  // Rescaling can land a few ulp above the limit; the slack keeps the clamp idempotent.
  if (speed > params.max_speed * (1.0 + 1e-12)) {
    x.segment<3>(kU) *= params.max_speed / speed;
    ++active;
  }
  return active;
}

inline Vec2 planar_position(const DroneState& x) { return {x(kX), x(kY)}; }

}  // namespace d2oc

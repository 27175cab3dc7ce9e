#pragma once

// Density-driven optimal control. Each step runs three stages per agent:
//   A. pick local sample-point subsets along the prediction horizon and solve
//      the finite-horizon LTV problem in closed form,
//   B. move weight from the nearest sample points onto the new agent point,
//   C. synchronize weight ledgers with agents in communication range.

#include "d2oc/common.hpp"
#include "d2oc/density.hpp"
#include "d2oc/dynamics.hpp"
#include "d2oc/transport.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace d2oc {

using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;
using InputMatrix = Eigen::Matrix<double, kStateDim, kInputDim>;
using OutputMatrix = Eigen::Matrix<double, 2, kStateDim>;

// Per-agent view of the sample-point weights plus the agent-point weight schedule.
struct AgentLedger {
  int agent_id = 0;
  SampleCloud cloud;
  std::vector<double> step_weights;  // alpha^1 .. alpha^M
  int step = 0;                      // Stage B updates applied so far

  int steps_total() const { return static_cast<int>(step_weights.size()); }

  // alpha^k for 1 <= k <= M, zero outside the mission.
  double alpha(int k) const {
    if (k < 1 || k > steps_total()) return 0.0;
    return step_weights[static_cast<std::size_t>(k - 1)];
  }
};

// Equal energy per step: alpha^k = 1 / (n_agents * M).
inline std::vector<double> uniform_step_weights(int n_agents, int steps) {
  if (n_agents < 1 || steps < 1) return {};
  return std::vector<double>(static_cast<std::size_t>(steps), 1.0 / (static_cast<double>(n_agents) * steps));
}

struct SubsetEntry {
  std::size_t index = 0;
  double weight = 0.0;
};

struct PredictionPlan {
  int horizon = 0;
  std::vector<std::vector<SubsetEntry>> subsets;
  std::vector<Vec2> targets;
  std::vector<double> masses;  // alpha^{k+i}, i = 1..T

  double subset_mass(std::size_t i) const {
    double s = 0.0;
    for (const auto& e : subsets[i]) s += e.weight;
    return s;
  }
};

struct ControlWeights {
  Eigen::Matrix<double, kStateDim, 1> q_diag;
  Eigen::Matrix<double, kInputDim, 1> r_diag;

  // Penalties used in the field trials: x and y are left free.
  static ControlWeights defaults() {
    ControlWeights w;
    w.q_diag << 1, 1, 1, 1, 1, 1, 1e3, 1e3, 1e3, 0, 0, 1e3;
    w.q_diag *= 1e-7;
    w.r_diag = Eigen::Matrix<double, kInputDim, 1>::Constant(1e-3);
    return w;
  }

  StateMatrix Q() const { return q_diag.asDiagonal(); }
  Eigen::Matrix<double, kInputDim, kInputDim> R() const { return r_diag.asDiagonal(); }

  // Planar position selector.
  static OutputMatrix C() {
    OutputMatrix c = OutputMatrix::Zero();
    c(0, kX) = 1.0;
    c(1, kY) = 1.0;
    return c;
  }
};

// Blocks of the horizon KKT system. E12, E23 and F2 are kept through the
// plant matrices they are made of; dense_* materialize them.
struct KKTSystem {
  int horizon = 0;
  std::vector<StateMatrix> e11_blocks;  // Q + gamma_i C^T C, i = 1..T
  std::vector<StateMatrix> a;           // A_k .. A_{k+T-1}
  std::vector<InputMatrix> b;           // B_k .. B_{k+T-1}
  Eigen::Matrix<double, kInputDim, kInputDim> r;
  Eigen::VectorXd f1;                   // gamma_i C^T qbar_i, stacked
  Eigen::VectorXd f2;                   // [-A_k x^k; 0; ...]

  Eigen::Index state_rows() const { return static_cast<Eigen::Index>(horizon) * kStateDim; }
  Eigen::Index input_rows() const { return static_cast<Eigen::Index>(horizon) * kInputDim; }

  Eigen::MatrixXd dense_e11() const {
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(state_rows(), state_rows());
    for (int i = 0; i < horizon; ++i) e.block<kStateDim, kStateDim>(i * kStateDim, i * kStateDim) = e11_blocks[i];
    return e;
  }
  // Block upper-bidiagonal: -I on the diagonal, A_{k+i}^T above it.
  Eigen::MatrixXd dense_e12() const {
    Eigen::MatrixXd e = -Eigen::MatrixXd::Identity(state_rows(), state_rows());
    for (int i = 0; i + 1 < horizon; ++i)
      e.block<kStateDim, kStateDim>(i * kStateDim, (i + 1) * kStateDim) = a[i + 1].transpose();
    return e;
  }
  Eigen::MatrixXd dense_e23() const {
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(state_rows(), input_rows());
    for (int i = 0; i < horizon; ++i) e.block<kStateDim, kInputDim>(i * kStateDim, i * kInputDim) = b[i];
    return e;
  }
  Eigen::MatrixXd dense_e33() const {
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(input_rows(), input_rows());
    for (int i = 0; i < horizon; ++i) e.block<kInputDim, kInputDim>(i * kInputDim, i * kInputDim) = r;
    return e;
  }
};

struct ControlSolution {
  ControlInput u = ControlInput::Zero();  // first block, applied now
  Eigen::VectorXd u_bar;                  // whole horizon
  double rcond = 0.0;
};

struct KKTSolution {
  Eigen::VectorXd x_bar;
  Eigen::VectorXd lambda_bar;
  Eigen::VectorXd u_bar;
};

inline constexpr double kDepletedWeight = 1e-15;
inline constexpr double kConditionLimit = 1e12;

// Distance to a sample point divided by its undrawn weight; depleted points
// are pushed to infinity so they are never selected.
inline double weight_normalized_distance(const Vec2& q, double remaining_weight, const Vec2& y) {
  if (remaining_weight <= kDepletedWeight) return kInf;
  return (q - y).norm() / remaining_weight;
}

// Fills subsets S^{k+1|k} .. S^{k+T|k}. Subset i is anchored at the mass
// center of subset i-1 (the agent position for i = 1) and grows by the point
// of smallest weight-normalized distance until it holds alpha^{k+i}.
inline PredictionPlan select_local_samples(const AgentLedger& ledger, const Vec2& y_k, int horizon) {
  if (horizon < 1) throw InfeasibleError("select_local_samples: horizon must be positive");
  const auto& q = ledger.cloud.positions;
  const auto& beta = ledger.cloud.weights;
  const std::size_t n = q.size();

  PredictionPlan plan;
  plan.horizon = horizon;
  plan.subsets.resize(static_cast<std::size_t>(horizon));
  plan.targets.resize(static_cast<std::size_t>(horizon));
  plan.masses.resize(static_cast<std::size_t>(horizon));
  double demand = 0.0;
  for (int i = 0; i < horizon; ++i) {
    plan.masses[static_cast<std::size_t>(i)] = ledger.alpha(ledger.step + i + 1);
    demand += plan.masses[static_cast<std::size_t>(i)];
  }
  const double available = ledger.cloud.remaining();
  if (demand > available + kMassTolerance)
    throw InfeasibleError("select_local_samples: horizon needs " + std::to_string(demand) +
                          " but only " + std::to_string(available) + " remains");

  std::vector<double> drawn(n, 0.0);
  Vec2 anchor = y_k;
  for (int i = 0; i < horizon; ++i) {
    auto& subset = plan.subsets[static_cast<std::size_t>(i)];
    double rem = plan.masses[static_cast<std::size_t>(i)];
    while (rem > 0.0) {
      std::size_t best = n;
      double best_d = kInf;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = weight_normalized_distance(q[j], beta[j] - drawn[j], anchor);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (best == n) {
        if (rem <= kMassTolerance) break;
        throw InfeasibleError("select_local_samples: sample points exhausted");
      }
      const double avail = beta[best] - drawn[best];
      const double take = avail > rem ? rem : avail;
      subset.push_back({best, take});
      drawn[best] += take;
      rem -= take;
    }

    double mass = 0.0;
    Vec2 center = Vec2::Zero();
    for (const auto& e : subset) {
      mass += e.weight;
      center += e.weight * q[e.index];
    }
    if (mass > 0.0) anchor = center / mass;
    plan.targets[static_cast<std::size_t>(i)] = anchor;
  }
  return plan;
}

// mats_seq[i] holds (A_{k+i}, B_{k+i}), i = 0..T-1.
inline KKTSystem build_kkt(const PredictionPlan& plan, const DroneState& state,
                           std::span<const LtvMatrices> mats_seq, const ControlWeights& w) {
  const int T = plan.horizon;
  if (static_cast<int>(mats_seq.size()) < T) throw Error("build_kkt: need one LTV pair per horizon step");
  const OutputMatrix C = ControlWeights::C();
  const StateMatrix CtC = C.transpose() * C;
  const StateMatrix Q = w.Q();

  KKTSystem sys;
  sys.horizon = T;
  sys.r = w.R();
  sys.f1 = Eigen::VectorXd::Zero(sys.state_rows());
  sys.f2 = Eigen::VectorXd::Zero(sys.state_rows());
  sys.e11_blocks.reserve(static_cast<std::size_t>(T));
  sys.a.reserve(static_cast<std::size_t>(T));
  sys.b.reserve(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i) {
    const double gamma = plan.subset_mass(static_cast<std::size_t>(i));
    sys.e11_blocks.push_back(Q + gamma * CtC);
    sys.f1.segment<kStateDim>(i * kStateDim) = gamma * C.transpose() * plan.targets[static_cast<std::size_t>(i)];
    sys.a.push_back(mats_seq[static_cast<std::size_t>(i)].A);
    sys.b.push_back(mats_seq[static_cast<std::size_t>(i)].B);
  }
  sys.f2.segment<kStateDim>(0) = -sys.a[0] * state;
  return sys;
}

namespace detail {

// Z = E12^{-T} Y by forward block substitution: E12^T is block
// lower-bidiagonal with -I on the diagonal and A_{k+i} below it.
template <typename Derived>
Eigen::MatrixXd apply_e12_inv_transpose(const KKTSystem& sys, const Eigen::MatrixBase<Derived>& y) {
  Eigen::MatrixXd z(y.rows(), y.cols());
  const int T = sys.horizon;
  z.middleRows<kStateDim>(0) = -y.middleRows(0, kStateDim);
  for (int i = 0; i + 1 < T; ++i)
    z.middleRows<kStateDim>((i + 1) * kStateDim) =
        sys.a[static_cast<std::size_t>(i + 1)] * z.middleRows<kStateDim>(i * kStateDim) -
        y.middleRows((i + 1) * kStateDim, kStateDim);
  return z;
}

}  // namespace detail

// Closed-form horizon optimum
//   u_bar = Ebar E23^T E12^{-1} (E11 E12^{-T} F2 - F1),
//   Ebar  = (E33 + E23^T E12^{-1} E11 E12^{-T} E23)^{-1},
// with P = E12^{-T} E23 formed by block substitution. P is block lower
// triangular: column block j is -Phi(i, j+1) B_{k+j} for i >= j.
inline ControlSolution optimal_control(const KKTSystem& sys) {
  const int T = sys.horizon;
  const Eigen::Index nT = sys.state_rows();
  const Eigen::Index mT = sys.input_rows();

  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(nT, mT);
  for (int j = 0; j < T; ++j) {
    Eigen::Matrix<double, kStateDim, kInputDim> blk = -sys.b[static_cast<std::size_t>(j)];
    P.block<kStateDim, kInputDim>(j * kStateDim, j * kInputDim) = blk;
    for (int i = j; i + 1 < T; ++i) {
      blk = sys.a[static_cast<std::size_t>(i + 1)] * blk;
      P.block<kStateDim, kInputDim>((i + 1) * kStateDim, j * kInputDim) = blk;
    }
  }
  const Eigen::VectorXd x_free = detail::apply_e12_inv_transpose(sys, sys.f2);

  // H = E33 + P^T E11 P, accumulated one block row at a time; block row i of
  // P is zero beyond column block i.
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(mT, mT);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(mT);
  for (int i = 0; i < T; ++i) {
    const Eigen::Index cols = static_cast<Eigen::Index>(i + 1) * kInputDim;
    const auto Pi = P.block(i * kStateDim, 0, kStateDim, cols);
    const Eigen::MatrixXd EPi = sys.e11_blocks[static_cast<std::size_t>(i)] * Pi;
    H.topLeftCorner(cols, cols).noalias() += Pi.transpose() * EPi;
    const Eigen::Matrix<double, kStateDim, 1> resid =
        sys.e11_blocks[static_cast<std::size_t>(i)] * x_free.segment<kStateDim>(i * kStateDim) -
        sys.f1.segment<kStateDim>(i * kStateDim);
    rhs.head(cols).noalias() += Pi.transpose() * resid;
  }
  for (int i = 0; i < T; ++i) H.block<kInputDim, kInputDim>(i * kInputDim, i * kInputDim) += sys.r;

  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) throw NumericalError("optimal_control: reduced Hessian is not positive definite");
  ControlSolution sol;
  sol.rcond = llt.rcond();
  if (!(sol.rcond * kConditionLimit >= 1.0))
    throw NumericalError("optimal_control: reduced Hessian condition estimate exceeds 1e12");
  sol.u_bar = llt.solve(rhs);
  sol.u = sol.u_bar.head<kInputDim>();
  return sol;
}

// Direct dense solve of the full KKT system E [x; lambda; u] = [F1; F2; 0].
inline KKTSolution kkt_oracle_solve(const KKTSystem& sys) {
  const Eigen::Index nT = sys.state_rows();
  const Eigen::Index mT = sys.input_rows();
  const Eigen::Index dim = 2 * nT + mT;
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(dim, dim);
  const Eigen::MatrixXd e12 = sys.dense_e12();
  const Eigen::MatrixXd e23 = sys.dense_e23();
  E.block(0, 0, nT, nT) = sys.dense_e11();
  E.block(0, nT, nT, nT) = e12;
  E.block(nT, 0, nT, nT) = e12.transpose();
  E.block(nT, 2 * nT, nT, mT) = e23;
  E.block(2 * nT, nT, mT, nT) = e23.transpose();
  E.block(2 * nT, 2 * nT, mT, mT) = sys.dense_e33();

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  rhs.head(nT) = sys.f1;
  rhs.segment(nT, nT) = sys.f2;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(E);
  if (!lu.isInvertible()) throw NumericalError("kkt_oracle_solve: KKT matrix is singular");
  const Eigen::VectorXd sol = lu.solve(rhs);
  return {sol.head(nT), sol.segment(nT, nT), sol.tail(mT)};
}

// Stage B: drain alpha from the sample points nearest to the new agent point.
inline AgentLedger update_weights(AgentLedger ledger, const Vec2& y_next, double alpha) {
  const TransportPlan plan = single_sink_plan(y_next, ledger.cloud, alpha);
  double removed = 0.0;
  for (const auto& e : plan.entries) {
    double& w = ledger.cloud.weights[e.sink];
    const double before = w;
    w = std::max(0.0, w - e.mass);
    removed += before - w;
  }
  ledger.cloud.consumed += removed;
  ++ledger.step;
  return ledger;
}

inline constexpr double kUnlimitedRange = kInf;

// Stage C: agents within d_comm of each other adopt the elementwise minimum
// of their weights. Sweeps over pairs (r < s) repeat until nothing changes,
// so each range-connected component ends with one common ledger.
inline std::vector<AgentLedger> share_weights(std::vector<AgentLedger> ledgers, std::span<const Vec2> positions,
                                              double d_comm) {
  const std::size_t na = ledgers.size();
  if (positions.size() != na) throw Error("share_weights: one position per ledger required");
  for (const auto& l : ledgers)
    if (l.cloud.size() != ledgers.front().cloud.size()) throw Error("share_weights: cloud sizes differ");

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t r = 0; r < na; ++r) {
      for (std::size_t s = r + 1; s < na; ++s) {
        if (!((positions[r] - positions[s]).norm() <= d_comm)) continue;
        auto& wr = ledgers[r].cloud.weights;
        auto& ws = ledgers[s].cloud.weights;
        double dr = 0.0;
        double ds = 0.0;
        for (std::size_t j = 0; j < wr.size(); ++j) {
          if (wr[j] > ws[j]) {
            dr += wr[j] - ws[j];
            wr[j] = ws[j];
            changed = true;
          } else if (ws[j] > wr[j]) {
            ds += ws[j] - wr[j];
            ws[j] = wr[j];
            changed = true;
          }
        }
        ledgers[r].cloud.consumed += dr;
        ledgers[s].cloud.consumed += ds;
      }
    }
  }
  return ledgers;
}

}  // namespace d2oc

#pragma once

// Independent reference computations used only by the tests.

#include "d2oc/common.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

// Minimum-cost vertex of the transportation polytope by enumerating every
// (m+n-1)-subset of cells as a candidate basis. Only for tiny instances.
inline double brute_force_transport(const std::vector<double>& a, const std::vector<double>& b,
                                    const Eigen::MatrixXd& cost) {
  const int m = static_cast<int>(a.size()), n = static_cast<int>(b.size());
  const int cells = m * n, k = m + n - 1;
  Eigen::MatrixXd Aeq = Eigen::MatrixXd::Zero(m + n, cells);
  Eigen::VectorXd rhs(m + n);
  for (int i = 0; i < m; ++i) rhs(i) = a[static_cast<std::size_t>(i)];
  for (int j = 0; j < n; ++j) rhs(m + j) = b[static_cast<std::size_t>(j)];
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      Aeq(i, i * n + j) = 1.0;
      Aeq(m + j, i * n + j) = 1.0;
    }

  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) pick[static_cast<std::size_t>(i)] = i;
  while (true) {
    Eigen::MatrixXd sub(m + n, k);
    for (int c = 0; c < k; ++c) sub.col(c) = Aeq.col(pick[static_cast<std::size_t>(c)]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    if (qr.rank() == k) {
      const Eigen::VectorXd x = qr.solve(rhs);
      if ((sub * x - rhs).norm() < 1e-10 && x.minCoeff() > -1e-12) {
        double c = 0.0;
        for (int t = 0; t < k; ++t) {
          const int cell = pick[static_cast<std::size_t>(t)];
          c += x(t) * cost(cell / n, cell % n);
        }
        best = std::min(best, c);
      }
    }
    int i = k - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == cells - k + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
  return best;
}

inline std::vector<double> random_simplex(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> w(static_cast<std::size_t>(n));
  double s = 0.0;
  for (double& x : w) s += (x = u(rng));
  for (double& x : w) x /= s;
  return w;
}

inline std::vector<d2oc::Vec2> random_points(std::mt19937_64& rng, int n, double scale) {
  std::uniform_real_distribution<double> u(0.0, scale);
  std::vector<d2oc::Vec2> p;
  for (int i = 0; i < n; ++i) {
    const double x = u(rng);
    p.emplace_back(x, u(rng));
  }
  return p;
}

}  // namespace oracle

#include "d2oc/controller.hpp"

namespace oracle {

// A horizon problem described by raw data: plant pairs, weighted sample
// points per step, and the cost matrices.
struct HorizonInstance {
  d2oc::DroneState x0;
  std::vector<d2oc::LtvMatrices> mats;
  std::vector<std::vector<std::pair<d2oc::Vec2, double>>> points;  // (q_j, gamma_j) per step 1..T
  d2oc::ControlWeights w;
};

inline HorizonInstance random_horizon(std::mt19937_64& rng, int T) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  HorizonInstance h;
  for (int i = 0; i < 12; ++i) h.x0(i) = n(rng);
  for (int t = 0; t < T; ++t) {
    d2oc::LtvMatrices m;
    for (int r = 0; r < 12; ++r) {
      for (int c = 0; c < 12; ++c) m.A(r, c) = (r == c ? 1.0 : 0.0) + 0.1 * n(rng);
      for (int c = 0; c < 4; ++c) m.B(r, c) = 0.3 * n(rng);
    }
    h.mats.push_back(m);
    std::vector<std::pair<d2oc::Vec2, double>> pts;
    const int k = 1 + static_cast<int>(u(rng) * 4);
    for (int j = 0; j < k; ++j) pts.push_back({d2oc::Vec2(5 * n(rng), 5 * n(rng)), u(rng)});
    h.points.push_back(pts);
  }
  for (int i = 0; i < 12; ++i) h.w.q_diag(i) = u(rng) < 0.2 ? 0.0 : u(rng);
  for (int i = 0; i < 4; ++i) h.w.r_diag(i) = 0.1 + u(rng);
  return h;
}

// The horizon objective evaluated by forward simulation:
//   sum_{i=1..T} 1/2 [x_i' Q x_i + sum_j gamma_j |C x_i - q_j|^2] + sum_{i=0..T-1} 1/2 u_i' R u_i.
inline double horizon_objective(const HorizonInstance& h, const Eigen::VectorXd& u_bar) {
  const int T = static_cast<int>(h.mats.size());
  d2oc::DroneState x = h.x0;
  double J = 0.0;
  for (int i = 0; i < T; ++i) {
    const d2oc::ControlInput ui = u_bar.segment<4>(4 * i);
    J += 0.5 * ui.dot(h.w.r_diag.cwiseProduct(ui));
    x = h.mats[static_cast<std::size_t>(i)].A * x + h.mats[static_cast<std::size_t>(i)].B * ui;
    J += 0.5 * x.dot(h.w.q_diag.cwiseProduct(x));
    for (const auto& [q, g] : h.points[static_cast<std::size_t>(i)]) {
      const d2oc::Vec2 y(x(d2oc::kX), x(d2oc::kY));
      J += 0.5 * g * (y - q).squaredNorm();
    }
  }
  return J;
}

inline Eigen::VectorXd fd_gradient(const HorizonInstance& h, const Eigen::VectorXd& u_bar, double step) {
  Eigen::VectorXd g(u_bar.size());
  for (Eigen::Index i = 0; i < u_bar.size(); ++i) {
    Eigen::VectorXd p = u_bar, m = u_bar;
    p(i) += step;
    m(i) -= step;
    g(i) = (horizon_objective(h, p) - horizon_objective(h, m)) / (2 * step);
  }
  return g;
}

// Plan whose subsets carry the instance's points; targets are weighted means.
inline d2oc::PredictionPlan plan_of(const HorizonInstance& h) {
  d2oc::PredictionPlan plan;
  plan.horizon = static_cast<int>(h.points.size());
  std::size_t idx = 0;
  for (const auto& pts : h.points) {
    std::vector<d2oc::SubsetEntry> s;
    d2oc::Vec2 c = d2oc::Vec2::Zero();
    double m = 0.0;
    for (const auto& [q, g] : pts) {
      s.push_back({idx++, g});
      c += g * q;
      m += g;
    }
    plan.subsets.push_back(s);
    plan.targets.push_back(c / m);
    plan.masses.push_back(m);
  }
  return plan;
}

// Gauss-Legendre 3-point rule: exact for the quadratic integrands below.
inline constexpr double kGaussNode = 0.7745966692414834;
inline constexpr double kGaussNodes[3] = {-kGaussNode, 0.0, kGaussNode};
inline constexpr double kGaussWeights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

template <typename F>
inline double integrate_box(double ax, double bx, double ay, double by, double az, double bz, F f, int panels) {
  double total = 0.0;
  const double hx = (bx - ax) / panels, hy = (by - ay) / panels, hz = (bz - az) / panels;
  for (int i = 0; i < panels; ++i)
    for (int j = 0; j < panels; ++j)
      for (int k = 0; k < panels; ++k)
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c) {
              const double x = ax + (i + 0.5 + 0.5 * kGaussNodes[a]) * hx;
              const double y = ay + (j + 0.5 + 0.5 * kGaussNodes[b]) * hy;
              const double z = az + (k + 0.5 + 0.5 * kGaussNodes[c]) * hz;
              total += kGaussWeights[a] * kGaussWeights[b] * kGaussWeights[c] * f(x, y, z);
            }
  return total * hx * hy * hz / 8.0;
}

// Solution prism in its own frame, rotated 45 degrees about z into the
// body axes, with z measured from the system mass center.
inline d2oc::Inertia quadrature_inertia(double h, const d2oc::DroneParams& d, const d2oc::TankParams& t) {
  const double l = t.side;
  const double c = std::cos(std::numbers::pi / 4), s = std::sin(std::numbers::pi / 4);
  const double rho = t.solution_density;
  const double offset = t.mount_offset - h / 2;
  auto body = [&](double x, double y, double z) {
    return Eigen::Vector3d(c * x - s * y, s * x + c * y, z + offset);
  };
  const double ix = integrate_box(-l / 2, l / 2, -l / 2, l / 2, -h / 2, h / 2, [&](double x, double y, double z) {
    const auto p = body(x, y, z);
    return rho * (p.y() * p.y() + p.z() * p.z());
  }, 2);
  const double iy = integrate_box(-l / 2, l / 2, -l / 2, l / 2, -h / 2, h / 2, [&](double x, double y, double z) {
    const auto p = body(x, y, z);
    return rho * (p.x() * p.x() + p.z() * p.z());
  }, 2);
  const double iz = integrate_box(-l / 2, l / 2, -l / 2, l / 2, -h / 2, h / 2, [&](double x, double y, double) {
    return rho * (x * x + y * y);
  }, 2);
  return {d.inertia_x + ix, d.inertia_y + iy, d.inertia_z + iz};
}

// Dense KKT system assembled straight from the instance data and solved with
// full-pivot LU. Unknowns are ordered [x_1..x_T, u_0..u_{T-1}, lambda_1..lambda_T];
// lambda_i multiplies x_i - A_{i-1} x_{i-1} - B_{i-1} u_{i-1} = 0.
inline Eigen::VectorXd dense_kkt_controls(const HorizonInstance& h) {
  const int T = static_cast<int>(h.mats.size());
  const int nx = 12 * T, nu = 4 * T, n = 2 * nx + nu;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  const int U = nx, L = nx + nu;
  for (int i = 0; i < T; ++i) {
    const auto& pts = h.points[static_cast<std::size_t>(i)];
    double gsum = 0.0;
    d2oc::Vec2 gq = d2oc::Vec2::Zero();
    for (const auto& [q, g] : pts) {
      gsum += g;
      gq += g * q;
    }
    // State stationarity: (Q + gsum C'C) x_i + lambda_i - A_i' lambda_{i+1} = C' gq.
    for (int r = 0; r < 12; ++r) K(12 * i + r, 12 * i + r) = h.w.q_diag(r);
    K(12 * i + d2oc::kX, 12 * i + d2oc::kX) += gsum;
    K(12 * i + d2oc::kY, 12 * i + d2oc::kY) += gsum;
    rhs(12 * i + d2oc::kX) = gq.x();
    rhs(12 * i + d2oc::kY) = gq.y();
    K.block(12 * i, L + 12 * i, 12, 12) += Eigen::MatrixXd::Identity(12, 12);
    if (i + 1 < T) K.block(12 * i, L + 12 * (i + 1), 12, 12) -= h.mats[static_cast<std::size_t>(i + 1)].A.transpose();
    // Control stationarity: R u_i - B_i' lambda_{i+1} = 0.
    for (int r = 0; r < 4; ++r) K(U + 4 * i + r, U + 4 * i + r) = h.w.r_diag(r);
    K.block(U + 4 * i, L + 12 * i, 4, 12) -= h.mats[static_cast<std::size_t>(i)].B.transpose();
    // Dynamics: x_i - A_i x_{i-1} - B_i u_i = 0 (x_0 moves to the right side).
    K.block(L + 12 * i, 12 * i, 12, 12) += Eigen::MatrixXd::Identity(12, 12);
    if (i > 0) K.block(L + 12 * i, 12 * (i - 1), 12, 12) -= h.mats[static_cast<std::size_t>(i)].A;
    else rhs.segment(L, 12) = h.mats[0].A * h.x0;
    K.block(L + 12 * i, U + 4 * i, 12, 4) -= h.mats[static_cast<std::size_t>(i)].B;
  }
  const Eigen::VectorXd z = K.fullPivLu().solve(rhs);
  return z.segment(U, nu);
}

}  // namespace oracle

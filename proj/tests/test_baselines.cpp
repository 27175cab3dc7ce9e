#include "d2oc/baselines.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace d2oc;

namespace {

const Rect kField{0, 0, 100, 100};

struct Plant {
  DroneParams drone;
  TankParams tank;
  TankState level = TankState::with_height(TankParams{}.initial_height, TankParams{});
  std::vector<LtvMatrices> horizon(int T) const { return predict_ltv_sequence(level, drone, tank, 0.1, T); }
};

std::vector<double> gaussian_grid(const GridSpec& g, const Vec2& c, double sigma) {
  std::vector<double> rho(g.cell_count());
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix)
      rho[g.index(ix, iy)] = std::exp(-0.5 * (g.cell_center(ix, iy) - c).squaredNorm() / (sigma * sigma));
  return rho;
}

}  // namespace

TEST(Lawnmower, EqualStripsAndEvenSpacing) {
  const auto paths = lawnmower_plan(kField, 3, 180.0, 0.1, 1.5);
  ASSERT_EQ(paths.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto& w = paths[r].waypoints;
    ASSERT_EQ(w.size(), 1800u);
    const double lo = 100.0 / 3 * static_cast<double>(r), hi = 100.0 / 3 * static_cast<double>(r + 1);
    const double spacing = w.back().arc_length / 1799.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      EXPECT_EQ(w[k].time_index, static_cast<int>(k));
      EXPECT_GE(w[k].point.x(), lo - 1e-9);
      EXPECT_LE(w[k].point.x(), hi + 1e-9);
      EXPECT_TRUE(kField.contains(w[k].point));
      if (k > 0) {
        EXPECT_NEAR(w[k].arc_length - w[k - 1].arc_length, spacing, 1e-9);
      }
    }
  }
}

TEST(Lawnmower, LanePitchFollowsAltitude) {
  const auto paths = lawnmower_plan(Rect{0, 0, 30, 50}, 1, 100.0, 0.1, 1.5);
  // First lane sits half a footprint in from the strip edge.
  EXPECT_NEAR(paths[0].waypoints.front().point.x(), 1.5, 1e-12);
  double second_lane = -1.0;
  for (const auto& w : paths[0].waypoints)
    if (w.point.x() > 1.5 + 1e-9) {
      second_lane = w.point.x();
      break;
    }
  EXPECT_GT(second_lane, 1.5);
  EXPECT_LE(second_lane, 4.5 + 1e-9);
  EXPECT_THROW(lawnmower_plan(Rect{0, 0, 2, 50}, 1, 10.0, 0.1, 1.5), ConfigError);
}

TEST(Lawnmower, FootprintsCoverEveryCell) {
  const auto paths = lawnmower_plan(kField, 3, 180.0, 0.1, 1.5);
  const GridSpec g = GridSpec::covering(kField, 0.1);
  std::vector<char> hit(g.cell_count(), 0);
  const double half = 0.5 * spray_footprint(1.5);
  for (const auto& p : paths) {
    for (const auto& w : p.waypoints) {
      const int ix0 = std::max(0, static_cast<int>(std::ceil((w.point.x() - half) / 0.1 - 0.5)));
      const int ix1 = std::min(g.nx - 1, static_cast<int>(std::floor((w.point.x() + half) / 0.1 - 0.5)));
      const int iy0 = std::max(0, static_cast<int>(std::ceil((w.point.y() - half) / 0.1 - 0.5)));
      const int iy1 = std::min(g.ny - 1, static_cast<int>(std::floor((w.point.y() + half) / 0.1 - 0.5)));
      for (int iy = iy0; iy <= iy1; ++iy)
        for (int ix = ix0; ix <= ix1; ++ix) hit[g.index(ix, iy)] = 1;
    }
  }
  std::size_t missed = 0;
  for (char h : hit) missed += h ? 0 : 1;
  EXPECT_EQ(missed, 0u);
}

TEST(MpcTrack, DriftReferenceNeedsNoInput) {
  Plant p;
  DroneState x = DroneState::Zero();
  x(kX) = 10;
  x(kY) = 20;
  x(kU) = 1.0;
  x(kV) = -0.5;
  const auto mats = p.horizon(20);
  std::vector<Vec2> ref;
  DroneState drift = x;
  for (const auto& m : mats) {
    drift = m.A * drift;
    ref.push_back(planar_position(drift));
  }
  ControlWeights w = ControlWeights::defaults();
  w.q_diag.setZero();
  EXPECT_LT(mpc_track(ref, x, mats, w).u_bar.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(MpcTrack, HoldsPositionAtRest) {
  Plant p;
  DroneState x = DroneState::Zero();
  x(kX) = 5;
  x(kY) = 5;
  const std::vector<Vec2> ref(20, Vec2(5, 5));
  EXPECT_LT(mpc_track(ref, x, p.horizon(20), ControlWeights::defaults()).u.norm(), 1e-8);
}

TEST(MpcTrack, FirstOrderOptimal) {
  std::mt19937_64 rng(17);
  auto h = oracle::random_horizon(rng, 6);
  std::vector<Vec2> ref;
  for (auto& pts : h.points) {
    pts.resize(1);
    pts[0].second = 2.5;
    ref.push_back(pts[0].first);
  }
  const auto sol = mpc_track(ref, h.x0, h.mats, h.w, 2.5);
  EXPECT_LE(oracle::fd_gradient(h, sol.u_bar, 1e-4).norm(), 1e-6 * (1.0 + sol.u_bar.norm()));
}

TEST(MpcTrack, ClosedLoopFollowsSlowCircle) {
  Plant p;
  const double dt = 0.1, radius = 15.0, speed = 3.0;
  auto ref_at = [&](int k) {
    const double a = speed * k * dt / radius;
    return Vec2(50 + radius * std::cos(a), 50 + radius * std::sin(a));
  };
  DroneState x = DroneState::Zero();
  x(kX) = ref_at(0).x();
  x(kY) = ref_at(0).y();
  double sq = 0.0;
  const int steps = 600;
  for (int k = 0; k < steps; ++k) {
    std::vector<Vec2> ref;
    for (int i = 1; i <= 20; ++i) ref.push_back(ref_at(k + i));
    const auto mats = p.horizon(20);
    const auto u = saturate(mpc_track(ref, x, mats, ControlWeights::defaults()).u, system_mass(p.level, p.drone),
                            p.drone);
    x = step(x, u.input, mats[0]);
    clamp_state(x, p.drone);
    p.level = tank_step(p.level, p.tank, dt);
    sq += (planar_position(x) - ref_at(k + 1)).squaredNorm();
  }
  EXPECT_LE(std::sqrt(sq / steps), 1.0);
}

TEST(Smc, UniformDensityHasOnlyConstantCoefficient) {
  const Rect d{0, 0, 10, 8};
  const GridSpec g = GridSpec::covering(d, 0.1);
  const auto s = make_smc_state(std::vector<double>(g.cell_count(), 1.0), g, d, 1, 10);
  EXPECT_NEAR(s.reference(0, 0), 1.0 / std::sqrt(80.0), 1e-12);
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b < 10; ++b)
      if (a + b > 0) {
        EXPECT_NEAR(s.reference(a, b), 0.0, 1e-12);
      }
  EXPECT_GT(s.lambda.minCoeff(), 0.0);
}

TEST(Smc, AgentOnMassIsMoreErgodic) {
  const Rect d{0, 0, 10, 10};
  const GridSpec g = GridSpec::covering(d, 0.1);
  const auto base = make_smc_state(gaussian_grid(g, Vec2(2, 2), 0.3), g, d, 1, 20);
  auto near = base, far = base;
  for (int k = 0; k < 50; ++k) {
    smc_accumulate(near, std::vector<Vec2>{Vec2(2, 2)}, 0.1);
    smc_accumulate(far, std::vector<Vec2>{Vec2(9.9, 9.9)}, 0.1);
  }
  EXPECT_LT(near.ergodicity(), far.ergodicity());
}

TEST(Smc, DirectionDescendsMetric) {
  const Rect d{0, 0, 20, 20};
  const GridSpec g = GridSpec::covering(d, 0.1);
  auto s = make_smc_state(gaussian_grid(g, Vec2(14, 6), 2.0), g, d, 2, 20);
  // Warm start: nothing accumulated, so the direction climbs the density.
  const Vec2 dir0 = smc_direction(s, Vec2(10, 10));
  EXPECT_NEAR(dir0.norm(), 1.0, 1e-12);
  EXPECT_GT(dir0.dot(Vec2(4, -4).normalized()), 0.5);

  std::vector<Vec2> pos{Vec2(2, 2), Vec2(18, 18)};
  const double start = [&] {
    auto t = s;
    smc_accumulate(t, pos, 0.1);
    return t.ergodicity();
  }();
  for (int k = 0; k < 400; ++k) {
    const auto v = smc_step(s, pos, 0.1, 2.0);
    for (std::size_t r = 0; r < pos.size(); ++r) pos[r] = clamp_to(d, pos[r] + 0.1 * v[r]);
  }
  EXPECT_LT(s.ergodicity(), start);
}

TEST(Smc, ReferenceRolloutLeavesStateUntouched) {
  const Rect d{0, 0, 20, 20};
  const GridSpec g = GridSpec::covering(d, 0.1);
  const auto s = make_smc_state(gaussian_grid(g, Vec2(5, 5), 2.0), g, d, 1, 10);
  const auto ref = smc_reference(s, std::vector<Vec2>{Vec2(10, 10)}, 0.1, 7.0, 20);
  ASSERT_EQ(ref.size(), 1u);
  ASSERT_EQ(ref[0].size(), 20u);
  EXPECT_EQ(s.time, 0.0);
  EXPECT_TRUE(s.accumulated.isZero());
  EXPECT_NEAR((ref[0][0] - Vec2(10, 10)).norm(), 0.7, 1e-12);
  for (std::size_t i = 1; i < ref[0].size(); ++i) EXPECT_LE((ref[0][i] - ref[0][i - 1]).norm(), 0.7 + 1e-12);
}

#pragma once

// Exact discrete optimal transport.
//
// solve_transport() is a primal transportation simplex: it keeps a spanning
// tree of basic cells over the bipartite source/sink graph, prices non-basic
// cells against node potentials, and pivots around the unique tree cycle.
// Degenerate stalls switch pricing to Bland's rule (lowest-index entering and
// leaving cells), which cannot cycle.
//
// single_sink_plan() is the closed-form optimum when all mass flows into one
// point: nearest sample points are drained first.

#include "d2oc/common.hpp"
#include "d2oc/density.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace d2oc {

struct DiscreteMeasure {
  std::vector<Vec2> points;
  std::vector<double> weights;

  double total() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }
};

struct TransportEntry {
  std::size_t source = 0;  // index into the first measure (agent points y_i)
  std::size_t sink = 0;    // index into the second measure (sample points q_j)
  double mass = 0.0;
};

struct TransportPlan {
  std::vector<TransportEntry> entries;
  double total_cost = 0.0;
  std::size_t iterations = 0;
};

inline constexpr double kMassTolerance = 1e-9;

namespace detail {

class TransportationSimplex {
 public:
  TransportationSimplex(std::span<const double> supply, std::span<const double> demand,
                        const Eigen::MatrixXd& cost)
      : m_(supply.size()), n_(demand.size()), cost_(cost) {
    nodes_ = m_ + n_;
    max_cost_ = cost.size() > 0 ? cost.cwiseAbs().maxCoeff() : 0.0;
    tolerance_ = 1e-11 * std::max(1.0, max_cost_);
    initial_basis(supply, demand);
  }

  TransportPlan solve() {
    const std::size_t cells = m_ * n_;
    const std::size_t block = std::max<std::size_t>(
        32, static_cast<std::size_t>(std::sqrt(static_cast<double>(cells))));
    const std::size_t stall_limit = 20 * nodes_ + 100;
    const std::size_t iteration_cap = 200 * cells + 10000;

    std::size_t next_cell = 0;
    std::size_t degenerate_run = 0;
    bool bland = false;
    std::size_t iter = 0;
    for (; iter < iteration_cap; ++iter) {
      compute_potentials();
      std::size_t entering = kNone;
      if (bland) {
        for (std::size_t c = 0; c < cells; ++c) {
          if (reduced_cost(c) < -tolerance_) {
            entering = c;
            break;
          }
        }
      } else {
        entering = block_search(next_cell, block);
      }
      if (entering == kNone) break;

      const double theta = pivot(entering, bland);
      if (theta <= 1e-15) {
        if (++degenerate_run > stall_limit) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }
    }
    if (iter >= iteration_cap) throw NumericalError("transport simplex did not converge");

    TransportPlan plan;
    plan.iterations = iter;
    for (std::size_t k = 0; k < basic_src_.size(); ++k) {
      if (flow_[k] <= 0.0) continue;
      const std::size_t i = basic_src_[k];
      const std::size_t j = basic_snk_[k];
      plan.entries.push_back({i, j, flow_[k]});
      plan.total_cost += flow_[k] * cost_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    std::sort(plan.entries.begin(), plan.entries.end(), [](const auto& a, const auto& b) {
      return a.source != b.source ? a.source < b.source : a.sink < b.sink;
    });
    return plan;
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  double c(std::size_t i, std::size_t j) const {
    return cost_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  double reduced_cost(std::size_t cell) const {
    const std::size_t i = cell / n_;
    const std::size_t j = cell % n_;
    return c(i, j) - pot_[i] - pot_[m_ + j];
  }

  void add_basic(std::size_t i, std::size_t j, double f) {
    const std::size_t k = basic_src_.size();
    basic_src_.push_back(i);
    basic_snk_.push_back(j);
    flow_.push_back(f);
    adj_[i].push_back(k);
    adj_[m_ + j].push_back(k);
  }

  // North-west corner rule: a staircase of m + n - 1 cells, always a spanning tree.
  void initial_basis(std::span<const double> supply, std::span<const double> demand) {
    adj_.assign(nodes_, {});
    std::vector<double> a(supply.begin(), supply.end());
    std::vector<double> b(demand.begin(), demand.end());
    std::size_t i = 0;
    std::size_t j = 0;
    while (true) {
      const double f = std::max(0.0, std::min(a[i], b[j]));
      add_basic(i, j, f);
      a[i] -= f;
      b[j] -= f;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (i == m_ - 1) {
        ++j;
      } else if (j == n_ - 1) {
        ++i;
      } else if (a[i] < b[j]) {
        ++i;
      } else {
        ++j;
      }
    }
    pot_.assign(nodes_, 0.0);
    parent_arc_.assign(nodes_, kNone);
    parent_.assign(nodes_, kNone);
    depth_.assign(nodes_, 0);
  }

  void compute_potentials() {
    std::fill(parent_.begin(), parent_.end(), kNone);
    order_.clear();
    order_.push_back(0);
    pot_[0] = 0.0;
    depth_[0] = 0;
    parent_[0] = 0;
    parent_arc_[0] = kNone;
    for (std::size_t h = 0; h < order_.size(); ++h) {
      const std::size_t u = order_[h];
      for (std::size_t k : adj_[u]) {
        const std::size_t src = basic_src_[k];
        const std::size_t snk = m_ + basic_snk_[k];
        const std::size_t w = (u == src) ? snk : src;
        if (parent_[w] != kNone) continue;
        parent_[w] = u;
        parent_arc_[w] = k;
        depth_[w] = depth_[u] + 1;
        const double ck = c(basic_src_[k], basic_snk_[k]);
        // u_i + v_j = c_ij on basic cells.
        pot_[w] = ck - pot_[u];
        order_.push_back(w);
      }
    }
  }

  std::size_t block_search(std::size_t& next_cell, std::size_t block) {
    const std::size_t cells = m_ * n_;
    std::size_t best = kNone;
    double best_rc = -tolerance_;
    std::size_t scanned = 0;
    while (scanned < cells) {
      const std::size_t limit = std::min(block, cells - scanned);
      for (std::size_t t = 0; t < limit; ++t) {
        const std::size_t cell = next_cell;
        next_cell = (next_cell + 1 == cells) ? 0 : next_cell + 1;
        const double rc = reduced_cost(cell);
        if (rc < best_rc) {
          best_rc = rc;
          best = cell;
        }
      }
      scanned += limit;
      if (best != kNone) return best;
    }
    return kNone;
  }

  // Pushes flow around the cycle closed by `entering`; returns the step length.
  double pivot(std::size_t entering, bool bland) {
    const std::size_t ei = entering / n_;
    const std::size_t ej = entering % n_;

    // Tree path from the sink node to the source node.
    path_j_.clear();
    path_i_.clear();
    std::size_t a = m_ + ej;
    std::size_t b = ei;
    while (depth_[a] > depth_[b]) {
      path_j_.push_back(parent_arc_[a]);
      a = parent_[a];
    }
    while (depth_[b] > depth_[a]) {
      path_i_.push_back(parent_arc_[b]);
      b = parent_[b];
    }
    while (a != b) {
      path_j_.push_back(parent_arc_[a]);
      a = parent_[a];
      path_i_.push_back(parent_arc_[b]);
      b = parent_[b];
    }
    cycle_.assign(path_j_.begin(), path_j_.end());
    cycle_.insert(cycle_.end(), path_i_.rbegin(), path_i_.rend());

    // Odd positions along the path (0, 2, ...) lose flow.
    double theta = kInf;
    std::size_t leaving_pos = kNone;
    for (std::size_t p = 0; p < cycle_.size(); p += 2) {
      const std::size_t k = cycle_[p];
      const double f = flow_[k];
      if (f < theta) {
        theta = f;
        leaving_pos = p;
      } else if (bland && f == theta) {
        const std::size_t cur = cycle_[leaving_pos];
        if (basic_src_[k] * n_ + basic_snk_[k] < basic_src_[cur] * n_ + basic_snk_[cur]) leaving_pos = p;
      }
    }
    theta = std::max(0.0, theta);
    for (std::size_t p = 0; p < cycle_.size(); ++p) {
      const std::size_t k = cycle_[p];
      flow_[k] = (p % 2 == 0) ? std::max(0.0, flow_[k] - theta) : flow_[k] + theta;
    }

    const std::size_t leaving = cycle_[leaving_pos];
    detach(leaving);
    basic_src_[leaving] = ei;
    basic_snk_[leaving] = ej;
    flow_[leaving] = theta;
    adj_[ei].push_back(leaving);
    adj_[m_ + ej].push_back(leaving);
    return theta;
  }

  void detach(std::size_t k) {
    auto drop = [k](std::vector<std::size_t>& v) { v.erase(std::find(v.begin(), v.end(), k)); };
    drop(adj_[basic_src_[k]]);
    drop(adj_[m_ + basic_snk_[k]]);
  }

  std::size_t m_;
  std::size_t n_;
  std::size_t nodes_ = 0;
  const Eigen::MatrixXd& cost_;
  double max_cost_ = 0.0;
  double tolerance_ = 0.0;

  std::vector<std::size_t> basic_src_;
  std::vector<std::size_t> basic_snk_;
  std::vector<double> flow_;
  std::vector<std::vector<std::size_t>> adj_;

  std::vector<double> pot_;
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> parent_arc_;
  std::vector<std::size_t> depth_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> path_i_;
  std::vector<std::size_t> path_j_;
  std::vector<std::size_t> cycle_;
};

}  // namespace detail

// Balanced transportation problem with an explicit cost matrix
// (supply.size() x demand.size()).
inline TransportPlan solve_transport(std::span<const double> supply, std::span<const double> demand,
                                     const Eigen::MatrixXd& cost) {
  if (supply.empty() || demand.empty()) throw InfeasibleError("transport: empty measure");
  if (cost.rows() != static_cast<Eigen::Index>(supply.size()) ||
      cost.cols() != static_cast<Eigen::Index>(demand.size()))
    throw InfeasibleError("transport: cost matrix shape does not match the measures");
  double sa = 0.0;
  double sb = 0.0;
  for (double w : supply) {
    if (w < 0.0) throw InfeasibleError("transport: negative source weight");
    sa += w;
  }
  for (double w : demand) {
    if (w < 0.0) throw InfeasibleError("transport: negative sink weight");
    sb += w;
  }
  if (std::abs(sa - sb) > kMassTolerance)
    throw InfeasibleError("transport: total masses differ (" + std::to_string(sa) + " vs " +
                          std::to_string(sb) + ")");
  detail::TransportationSimplex simplex(supply, demand, cost);
  return simplex.solve();
}

inline Eigen::MatrixXd squared_distance_matrix(const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(from.size()), static_cast<Eigen::Index>(to.size()));
  for (std::size_t i = 0; i < from.size(); ++i)
    for (std::size_t j = 0; j < to.size(); ++j)
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (from[i] - to[j]).squaredNorm();
  return c;
}

// Squared 2-Wasserstein optimal plan between agent points (mu1) and sample
// points (mu2); total_cost is W^2.
inline TransportPlan wasserstein_lp(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2) {
  if (mu1.points.size() != mu1.weights.size() || mu2.points.size() != mu2.weights.size())
    throw InfeasibleError("transport: points and weights differ in length");
  return solve_transport(mu1.weights, mu2.weights, squared_distance_matrix(mu1.points, mu2.points));
}

// Optimal plan moving `alpha` units from the cloud into the single point y.
// Nearest points are drained first; equidistant points go by lowest index.
inline TransportPlan single_sink_plan(const Vec2& y, const SampleCloud& cloud, double alpha) {
  if (alpha < 0.0) throw InfeasibleError("single_sink_plan: negative alpha");
  const double available = cloud.remaining();
  if (alpha > available + 1e-12)
    throw InfeasibleError("single_sink_plan: alpha " + std::to_string(alpha) + " exceeds remaining mass " +
                          std::to_string(available));
  TransportPlan plan;
  if (alpha == 0.0) return plan;

  const std::size_t n = cloud.size();
  std::vector<double> d2(n);
  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    d2[j] = (cloud.positions[j] - y).squaredNorm();
    if (cloud.weights[j] > 0.0) order.push_back(j);
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return d2[a] != d2[b] ? d2[a] < d2[b] : a < b; });

  double rem = alpha;
  for (std::size_t j : order) {
    if (rem <= 0.0) break;
    const double take = std::min(cloud.weights[j], rem);
    plan.entries.push_back({0, j, take});
    plan.total_cost += take * d2[j];
    rem -= take;
  }
  return plan;
}

}  // namespace d2oc

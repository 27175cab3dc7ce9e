#pragma once

// Reference weed-density fields: Gaussian mixtures over a rectangular farm,
// weighted sample-point clouds drawn from them, and rasterization onto the
// evaluation grid.

#include "d2oc/common.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace d2oc {

struct GaussianComponent {
  Vec2 mean = Vec2::Zero();
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Identity();
  double mixture_weight = 1.0;
};

class DensityField {
 public:
  DensityField() = default;
  DensityField(std::vector<GaussianComponent> components, Rect domain)
      : components_(std::move(components)), domain_(domain) {
    validate();
  }

  const std::vector<GaussianComponent>& components() const { return components_; }
  const Rect& domain() const { return domain_; }

  // Mixture probability density at p (not truncated to the domain).
  double pdf(const Vec2& p) const {
    double value = 0.0;
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const Vec2 d = p - components_[k].mean;
      value += scale_[k] * std::exp(-0.5 * d.dot(precision_[k] * d));
    }
    return value;
  }

 private:
  void validate() {
    if (components_.empty()) throw InvalidFieldError("density field has no components");
    if (!(domain_.width() > 0.0) || !(domain_.height() > 0.0))
      throw InvalidFieldError("density domain must have positive area");
    double total = 0.0;
    for (const auto& c : components_) {
      if (!(c.mixture_weight >= 0.0)) throw InvalidFieldError("mixture weight must be nonnegative");
      const auto& s = c.covariance;
      if (std::abs(s(0, 1) - s(1, 0)) > 1e-12 * (1.0 + std::abs(s(0, 1))))
        throw InvalidFieldError("covariance must be symmetric");
      if (!(s(0, 0) > 0.0) || !(s.determinant() > 0.0))
        throw InvalidFieldError("covariance must be positive definite");
      total += c.mixture_weight;
      precision_.push_back(s.inverse());
      scale_.push_back(c.mixture_weight / (2.0 * std::numbers::pi * std::sqrt(s.determinant())));
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw InvalidFieldError("mixture weights must sum to 1 (got " + std::to_string(total) + ")");
  }

  std::vector<GaussianComponent> components_;
  Rect domain_;
  std::vector<Eigen::Matrix2d> precision_;
  std::vector<double> scale_;
};

// Weighted sample points q_j with their remaining weights beta_j. `consumed`
// tallies all mass removed so far, so remaining() + consumed stays at 1.
struct SampleCloud {
  std::vector<Vec2> positions;
  std::vector<double> weights;
  double consumed = 0.0;

  std::size_t size() const { return positions.size(); }

  double remaining() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }

  // Deviation of the mass ledger from unity.
  double ledger_error() const { return remaining() + consumed - 1.0; }
};

struct GridSpec {
  Vec2 origin = Vec2::Zero();
  double cell_size = 0.1;
  int nx = 1;
  int ny = 1;

  std::size_t cell_count() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(ix);
  }
  Vec2 cell_center(int ix, int iy) const {
    return {origin.x() + (ix + 0.5) * cell_size, origin.y() + (iy + 0.5) * cell_size};
  }
  double cell_area() const { return cell_size * cell_size; }
  Rect bounds() const {
    return {origin.x(), origin.y(), origin.x() + nx * cell_size, origin.y() + ny * cell_size};
  }

  // Grid of square cells tiling `domain`; the cell count is rounded to the nearest integer.
  static GridSpec covering(const Rect& domain, double cell_size) {
    if (!(cell_size > 0.0)) throw InvalidFieldError("grid cell size must be positive");
    GridSpec g;
    g.origin = {domain.x_min, domain.y_min};
    g.cell_size = cell_size;
    g.nx = std::max(1, static_cast<int>(std::lround(domain.width() / cell_size)));
    g.ny = std::max(1, static_cast<int>(std::lround(domain.height() / cell_size)));
    return g;
  }
};

inline constexpr int kMaxRejectionAttempts = 100;

// Draws n points i.i.d. from the mixture, resampling any draw that falls
// outside the domain. Every point starts with weight 1/n.
inline SampleCloud sample_points(const DensityField& field, int n, std::uint64_t seed) {
  if (n < 1) throw InvalidFieldError("sample count must be at least 1");
  const auto& comps = field.components();

  std::vector<double> cdf;
  cdf.reserve(comps.size());
  double acc = 0.0;
  std::vector<Eigen::Matrix2d> chol;
  for (const auto& c : comps) {
    acc += c.mixture_weight;
    cdf.push_back(acc);
    chol.push_back(c.covariance.llt().matrixL());
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SampleCloud cloud;
  cloud.positions.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxRejectionAttempts && !accepted; ++attempt) {
      const double u = uniform(rng) * acc;
      std::size_t k = 0;
      while (k + 1 < cdf.size() && u >= cdf[k]) ++k;
      const double z0 = normal(rng);
      const double z1 = normal(rng);
      const Vec2 p = comps[k].mean + chol[k] * Vec2(z0, z1);
      if (field.domain().contains(p)) {
        cloud.positions.push_back(p);
        accepted = true;
      }
    }
    if (!accepted)
      throw InvalidFieldError("rejection sampling failed: mixture mass lies outside the domain");
  }
  cloud.weights.assign(static_cast<std::size_t>(n), 1.0 / n);
  return cloud;
}

// Mixture density at every cell center, scaled so the largest cell value is 1.
// Layout is row-major in y: index = iy * nx + ix.
inline std::vector<double> rasterize_density(const DensityField& field, const GridSpec& grid) {
  std::vector<double> values(grid.cell_count());
  double peak = 0.0;
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const double v = field.pdf(grid.cell_center(ix, iy));
      values[grid.index(ix, iy)] = v;
      if (v > peak) peak = v;
    }
  }
  if (!(peak > 0.0) || !std::isfinite(peak))
    throw InvalidFieldError("density is zero on every grid cell; cannot normalize");
  for (double& v : values) v /= peak;
  return values;
}

}  // namespace d2oc

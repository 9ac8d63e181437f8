#pragma once

#include <optional>
#include <string>
#include <vector>

namespace tdamp {

struct FTableConfig {
  // variance search bracket (log-scale coarse scan + golden-section refine)
  double v_lo = 1e-6;
  double v_hi = 1e3;
  // standardized-location grid
  double grid_lo = -12.0;
  double grid_hi = 4.0;
  int grid_points = 161;
  // search controls
  int coarse_points = 64;
  int refine_iters = 60;
  // composite Gauss-Legendre quadrature over the unit-scale Gumbel support
  int quad_panels = 48;
  double z_lo = -46.0;
  double z_hi = 7.0;

  bool operator==(const FTableConfig&) const = default;
};

// Table of v*(mu) = argmax_v E[log Q(xi/sqrt(v))] with xi a unit-scale
// min-Gumbel located at mu. Built once, immutable afterwards; lookups
// interpolate linearly and clamp at the grid edges.
class FTable {
 public:
  FTable() = default;

  static FTable build(const FTableConfig& cfg = FTableConfig{});

  double lookup(double mu_std) const;
  bool edge_pinned(int i) const { return edge_[i] != 0; }
  bool any_edge_pinned() const;
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& values() const { return value_; }
  const FTableConfig& config() const { return cfg_; }
  bool empty() const { return grid_.empty(); }

  // quadrature objective the table maximizes, exposed for verification
  static double objective(double mu_std, double v,
                          const FTableConfig& cfg = FTableConfig{});

  void save(const std::string& path) const;
  // empty on missing file, version mismatch, or config mismatch
  static std::optional<FTable> load(const std::string& path);

 private:
  FTableConfig cfg_;
  std::vector<double> grid_;
  std::vector<double> value_;
  std::vector<uint8_t> edge_;
};

}  // namespace tdamp

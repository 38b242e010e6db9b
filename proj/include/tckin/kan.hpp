#pragma once

#include <span>
#include <string>
#include <vector>

#include "tckin/autodiff.hpp"
#include "tckin/param_store.hpp"
#include "tckin/rng.hpp"

namespace tckin {

/// Uniform knot grid over [lo, hi] with `intervals` pieces, extended by
/// `order` knots on each side so that all intervals+order basis functions
/// of degree `order` are complete on [lo, hi).
struct SplineGrid {
  double lo = -3.0;
  double hi = 3.0;
  std::size_t intervals = 8;
  std::size_t order = 3;

  double step() const { return (hi - lo) / static_cast<double>(intervals); }
  std::size_t num_basis() const { return intervals + order; }
  std::size_t num_knots() const { return intervals + 2 * order + 1; }
  /// Knot i for i in [0, num_knots()); extends linearly for other i.
  double knot(std::ptrdiff_t i) const { return lo + static_cast<double>(i - static_cast<std::ptrdiff_t>(order)) * step(); }
};

/// All num_basis() B-spline basis values at x (Cox–de Boor with half-open
/// intervals). Zero outside the extended knot span; sums to 1 on [lo, hi).
std::vector<double> bspline_basis(const SplineGrid& grid, double x);

/// Nonzero basis values and their x-derivatives at x, with out-of-grid
/// inputs handled by linear extrapolation of the boundary piece: for x < lo
/// (x >= hi) the basis is B(b) + (x - b) B'(b) with b = lo (b = hi, limit
/// from the left).
struct SparseBasis {
  std::size_t first = 0;  // index of values[0]
  std::vector<double> values;
  std::vector<double> derivs;
};
void spline_basis_eval(const SplineGrid& grid, double x, SparseBasis& out);

/// One learnable edge function
///   φ(x) = base_weight · silu(x) + spline_weight · Σ_m coeffs[m] · B_m(x).
struct SplineEdge {
  SplineGrid grid;
  std::span<const double> coeffs;  // num_basis()
  double base_weight = 0.0;
  double spline_weight = 1.0;
  bool base_enabled = true;
};

double edge_eval(const SplineEdge& edge, double x);

struct KanLayerConfig {
  std::size_t n_in = 1;
  std::size_t n_out = 1;
  SplineGrid grid;
  bool base_enabled = true;
};

/// Function matrix Φ = {φ_{j,i}}: output j = Σ_i φ_{j,i}(x_i).
///
/// Parameters under `prefix`: ".coeff" [n_out, n_in, G+k], ".base"
/// [n_out, n_in], ".scale" [n_out, n_in] (the spline weight).
class KanLayer {
 public:
  KanLayer() = default;
  KanLayer(std::string prefix, KanLayerConfig config);

  void init_params(ParamStore& store, Rng& rng) const;
  /// x: [B×n_in] -> [B×n_out].
  Var forward(Tape& tape, ParamStore& store, Var x) const;
  SplineEdge edge(const ParamStore& store, std::size_t out, std::size_t in) const;

  const KanLayerConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }
  std::size_t params_per_edge() const { return config_.grid.num_basis() + 2; }
  std::size_t num_params() const { return config_.n_in * config_.n_out * params_per_edge(); }

 private:
  std::string prefix_;
  KanLayerConfig config_;
};

/// Φ_{last} ∘ … ∘ Φ_0 applied to x.
Var kan_encode(Tape& tape, ParamStore& store, std::span<const KanLayer> layers, Var x);

}  // namespace tckin

#include "tckin/kan.hpp"

#include <algorithm>
#include <cmath>

#include "tckin/error.hpp"

namespace tckin {
namespace {

// de Boor's triangular scheme for the p+1 basis functions nonzero on knot
// span s, evaluated at x (any x: the span's polynomial piece is extended).
// Fills n[0..p] = B_{s-p..s} and d[0..p] their derivatives.
void basis_on_span(const SplineGrid& g, std::ptrdiff_t s, double x, double* n, double* d) {
  const std::size_t p = g.order;
  double left[16], right[16], lower[16];
  n[0] = 1.0;
  lower[0] = 1.0;
  for (std::size_t j = 1; j <= p; ++j) {
    left[j] = x - g.knot(s + 1 - static_cast<std::ptrdiff_t>(j));
    right[j] = g.knot(s + static_cast<std::ptrdiff_t>(j)) - x;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      const double tmp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    n[j] = saved;
    if (j + 1 == p) std::copy(n, n + p, lower);
  }
  if (p == 0) {
    d[0] = 0.0;
    return;
  }
  if (p == 1) lower[0] = 1.0;
  // Uniform knots: B'_{m,p} = (B_{m,p-1} - B_{m+1,p-1}) / h.
  const double inv_h = 1.0 / g.step();
  for (std::size_t r = 0; r <= p; ++r) {
    const double a = r >= 1 ? lower[r - 1] : 0.0;
    const double b = r + 1 <= p ? lower[r] : 0.0;
    d[r] = (a - b) * inv_h;
  }
}

std::ptrdiff_t find_span(const SplineGrid& g, double x) {
  const auto last = static_cast<std::ptrdiff_t>(g.num_knots()) - 2;
  auto s = static_cast<std::ptrdiff_t>(std::floor((x - g.knot(0)) / g.step()));
  s = std::clamp<std::ptrdiff_t>(s, 0, last);
  while (s < last && x >= g.knot(s + 1)) ++s;
  while (s > 0 && x < g.knot(s)) --s;
  return s;
}

void check_grid(const SplineGrid& g) {
  if (!(g.hi > g.lo) || g.intervals == 0) throw ConfigError("spline grid needs hi > lo and at least one interval");
  if (g.order > 8) throw ConfigError("spline order above 8 is not supported");
}

double silu_value(double x) {
  const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return x * s;
}

double silu_deriv(double x) {
  const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace

std::vector<double> bspline_basis(const SplineGrid& grid, double x) {
  check_grid(grid);
  const std::size_t nb = grid.num_basis();
  std::vector<double> out(nb, 0.0);
  if (!(x >= grid.knot(0) && x < grid.knot(static_cast<std::ptrdiff_t>(grid.num_knots()) - 1))) return out;
  const std::ptrdiff_t s = find_span(grid, x);
  double n[16], d[16];
  basis_on_span(grid, s, x, n, d);
  const auto p = static_cast<std::ptrdiff_t>(grid.order);
  for (std::ptrdiff_t r = 0; r <= p; ++r) {
    const std::ptrdiff_t m = s - p + r;
    if (m >= 0 && m < static_cast<std::ptrdiff_t>(nb)) out[static_cast<std::size_t>(m)] = n[r];
  }
  return out;
}

void spline_basis_eval(const SplineGrid& grid, double x, SparseBasis& out) {
  const std::size_t p = grid.order;
  out.values.resize(p + 1);
  out.derivs.resize(p + 1);
  double n[16], d[16];
  std::ptrdiff_t s;
  double anchor = x;
  if (x < grid.lo) {
    s = static_cast<std::ptrdiff_t>(p);
    anchor = grid.lo;
  } else if (x >= grid.hi) {
    s = static_cast<std::ptrdiff_t>(p + grid.intervals) - 1;
    anchor = grid.hi;
  } else {
    s = std::clamp<std::ptrdiff_t>(find_span(grid, x), static_cast<std::ptrdiff_t>(p),
                                   static_cast<std::ptrdiff_t>(p + grid.intervals) - 1);
  }
  basis_on_span(grid, s, anchor, n, d);
  out.first = static_cast<std::size_t>(s - static_cast<std::ptrdiff_t>(p));
  const double dx = x - anchor;
  for (std::size_t r = 0; r <= p; ++r) {
    out.values[r] = n[r] + dx * d[r];
    out.derivs[r] = d[r];
  }
}

double edge_eval(const SplineEdge& edge, double x) {
  SparseBasis b;
  spline_basis_eval(edge.grid, x, b);
  double s = 0.0;
  for (std::size_t r = 0; r < b.values.size(); ++r) s += edge.coeffs[b.first + r] * b.values[r];
  const double base = edge.base_enabled ? edge.base_weight * silu_value(x) : 0.0;
  return base + edge.spline_weight * s;
}

KanLayer::KanLayer(std::string prefix, KanLayerConfig config) : prefix_(std::move(prefix)), config_(config) {
  check_grid(config_.grid);
  if (config_.n_in == 0 || config_.n_out == 0) throw ConfigError("KAN layer dimensions must be positive");
}

void KanLayer::init_params(ParamStore& store, Rng& rng) const {
  const std::size_t nin = config_.n_in, nout = config_.n_out, nb = config_.grid.num_basis();
  const double fan = 1.0 / std::sqrt(static_cast<double>(nin));
  Tensor coeff({nout, nin, nb});
  for (double& v : coeff.values()) v = rng.uniform(-0.1, 0.1) * fan;
  store.add(prefix_ + ".coeff", std::move(coeff));
  if (config_.base_enabled) {
    Tensor base({nout, nin});
    for (double& v : base.values()) v = rng.uniform(-fan, fan);
    store.add(prefix_ + ".base", std::move(base));
  }
  store.add(prefix_ + ".scale", Tensor({nout, nin}, 1.0));
}

SplineEdge KanLayer::edge(const ParamStore& store, std::size_t out, std::size_t in) const {
  const std::size_t nb = config_.grid.num_basis();
  const Tensor& coeff = store.value(prefix_ + ".coeff");
  const std::size_t e = out * config_.n_in + in;
  SplineEdge edge;
  edge.grid = config_.grid;
  edge.coeffs = std::span<const double>(coeff.data() + e * nb, nb);
  edge.base_enabled = config_.base_enabled;
  edge.base_weight = config_.base_enabled ? store.value(prefix_ + ".base")[e] : 0.0;
  edge.spline_weight = store.value(prefix_ + ".scale")[e];
  return edge;
}

Var KanLayer::forward(Tape& tape, ParamStore& store, Var x) const {
  const std::size_t nin = config_.n_in, nout = config_.n_out, nb = config_.grid.num_basis();
  const std::size_t kp = config_.grid.order + 1;
  if (x.cols() != nin) {
    throw ShapeError("KAN layer " + prefix_ + ": expected " + std::to_string(nin) + " inputs, got " +
                     std::to_string(x.cols()));
  }
  const bool use_base = config_.base_enabled;
  Var coeff = tape.param(store, prefix_ + ".coeff");
  Var scale = tape.param(store, prefix_ + ".scale");
  Var base = use_base ? tape.param(store, prefix_ + ".base") : Var();

  const Tensor& xv = x.value();
  const std::size_t B = xv.rows();
  // Per (b, i): basis support start, values, derivatives, silu, silu'.
  std::vector<std::size_t> first(B * nin);
  std::vector<double> vals(B * nin * kp), ders(B * nin * kp), act(B * nin), dact(B * nin);
  SparseBasis sb;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < nin; ++i) {
      const std::size_t q = b * nin + i;
      const double xi = xv[q];
      spline_basis_eval(config_.grid, xi, sb);
      first[q] = sb.first;
      std::copy(sb.values.begin(), sb.values.end(), vals.begin() + q * kp);
      std::copy(sb.derivs.begin(), sb.derivs.end(), ders.begin() + q * kp);
      act[q] = silu_value(xi);
      dact[q] = silu_deriv(xi);
    }
  }

  const Tensor& cv = coeff.value();
  const Tensor& sv = scale.value();
  Tensor out({B, nout});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < nout; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < nin; ++i) {
        const std::size_t q = b * nin + i, e = j * nin + i;
        const double* c = cv.data() + e * nb + first[q];
        const double* v = vals.data() + q * kp;
        double s = 0.0;
        for (std::size_t r = 0; r < kp; ++r) s += c[r] * v[r];
        acc += sv[e] * s;
        if (use_base) acc += base.value()[e] * act[q];
      }
      out.at(b, j) = acc;
    }
  }

  std::vector<Var> inputs{x, coeff, scale};
  if (use_base) inputs.push_back(base);
  return tape.record(
      std::move(out), inputs,
      [=, first = std::move(first), vals = std::move(vals), ders = std::move(ders), act = std::move(act),
       dact = std::move(dact)](Tape& tp, const Tensor&, const Tensor& g) {
        Tensor* gx = tp.grad_slot(x);
        Tensor* gc = tp.grad_slot(coeff);
        Tensor* gs = tp.grad_slot(scale);
        Tensor* gb = use_base ? tp.grad_slot(base) : nullptr;
        const Tensor& cv = tp.value(coeff);
        const Tensor& sv = tp.value(scale);
        const Tensor* bv = use_base ? &tp.value(base) : nullptr;
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t j = 0; j < nout; ++j) {
            const double gbj = g.at(b, j);
            if (gbj == 0.0) continue;
            for (std::size_t i = 0; i < nin; ++i) {
              const std::size_t q = b * nin + i, e = j * nin + i;
              const double* c = cv.data() + e * nb + first[q];
              const double* v = vals.data() + q * kp;
              const double* dv = ders.data() + q * kp;
              double s = 0.0, ds = 0.0;
              for (std::size_t r = 0; r < kp; ++r) {
                s += c[r] * v[r];
                ds += c[r] * dv[r];
              }
              if (gs) (*gs)[e] += gbj * s;
              if (gc) {
                double* gcp = gc->data() + e * nb + first[q];
                const double w = gbj * sv[e];
                for (std::size_t r = 0; r < kp; ++r) gcp[r] += w * v[r];
              }
              if (gb) (*gb)[e] += gbj * act[q];
              if (gx) {
                double d = sv[e] * ds;
                if (bv) d += (*bv)[e] * dact[q];
                (*gx)[q] += gbj * d;
              }
            }
          }
        }
      });
}

Var kan_encode(Tape& tape, ParamStore& store, std::span<const KanLayer> layers, Var x) {
  for (const auto& layer : layers) x = layer.forward(tape, store, x);
  return x;
}

}  // namespace tckin

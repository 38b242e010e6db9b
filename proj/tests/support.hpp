#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tckin/autodiff.hpp"
#include "tckin/param_store.hpp"
#include "tckin/rng.hpp"

namespace tckin::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

struct GradCheck {
  bool ok = true;
  double worst_rel = 0.0;
  std::size_t checked = 0;
  std::string first_failure;
};

/// Builds a scalar loss on a fresh tape from the store's current values.
using LossFn = std::function<Var(Tape&, ParamStore&)>;

/// Central differences with step `eps` against the recorded gradient, for
/// every scalar of every parameter (or at most `max_per_param` evenly spread
/// entries of each). An entry passes if |a - n| <= rtol * max(|a|, |n|) or
/// |a - n| <= atol.
inline GradCheck check_gradients(ParamStore& store, const LossFn& loss, double rtol = 1e-4, double atol = 1e-7,
                                 double eps = 1e-5, std::size_t max_per_param = 0) {
  GradCheck r;
  {
    Tape tape;
    Var l = loss(tape, store);
    tape.backward(l, store);
  }
  for (auto& [name, entry] : store) {
    const Tensor analytic = entry.grad;
    const std::size_t n = entry.value.size();
    const std::size_t stride = max_per_param == 0 || n <= max_per_param ? 1 : n / max_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = entry.value[i];
      auto eval = [&](double x) {
        entry.value[i] = x;
        Tape tape;
        return loss(tape, store).value()[0];
      };
      const double numeric = (eval(orig + eps) - eval(orig - eps)) / (2.0 * eps);
      entry.value[i] = orig;
      const double a = analytic[i];
      const double diff = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      ++r.checked;
      if (scale > 0.0 && diff > atol) r.worst_rel = std::max(r.worst_rel, diff / scale);
      if (!(diff <= rtol * scale || diff <= atol)) {
        if (r.ok) {
          r.first_failure = name + "[" + std::to_string(i) + "]: analytic " + std::to_string(a) + " numeric " +
                            std::to_string(numeric);
        }
        r.ok = false;
      }
    }
  }
  return r;
}

}  // namespace tckin::test

#include "tckin/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "tckin/error.hpp"
#include "tckin/simd/kernels.hpp"

namespace tckin {

const Tensor& Var::value() const { return tape_->value(*this); }

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Node node) {
  if (nodes_.size() >= UINT32_MAX) throw Error("tape overflow");
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Tape::check(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw Error("variable does not belong to this tape");
}

Var Tape::constant(Tensor value) {
  Node n;
  n.own = std::move(value);
  return push(std::move(n));
}

Var Tape::param(ParamStore& store, const std::string& name) {
  if (store_ && store_ != &store) throw Error("tape already bound to a different parameter store");
  store_ = &store;
  for (const auto& [existing, id] : param_ids_) {
    if (existing == name) return Var(this, id);
  }
  Node n;
  n.external = &store.value(name);
  n.needs_grad = true;
  n.param_name = name;
  Var v = push(std::move(n));
  param_ids_.emplace_back(name, v.id_);
  return v;
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericalError("non-finite value produced at tape node " + std::to_string(nodes_.size()));
  }
  Node n;
  n.own = std::move(value);
  for (const Var& in : inputs) {
    check(in);
    n.needs_grad = n.needs_grad || nodes_[in.id_].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id_].value();
}

Tensor* Tape::grad_slot(Var v) {
  check(v);
  Node& n = nodes_[v.id_];
  if (!n.needs_grad) return nullptr;
  if (!n.reached) {
    n.grad = Tensor::zeros_like(n.value());
    n.reached = true;
  }
  return &n.grad;
}

Tensor Tape::grad(Var v) const {
  check(v);
  const Node& n = nodes_[v.id_];
  return n.reached ? n.grad : Tensor::zeros_like(n.value());
}

void Tape::backward(Var loss, ParamStore& store) {
  check(loss);
  if (value(loss).size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + shape_str(value(loss).shape()));
  }
  if (store_ && store_ != &store) throw Error("loss was recorded against a different parameter store");
  for (auto& n : nodes_) {
    n.reached = false;
    n.grad = Tensor();
  }
  store.zero_grad();

  Node& root = nodes_[loss.id_];
  if (!root.needs_grad) throw Error("loss is not connected to any parameter of the store");
  root.grad = Tensor(root.value().shape(), 1.0);
  root.reached = true;

  bool any_param = false;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.reached) continue;
    if (n.backward) n.backward(*this, n.value(), n.grad);
    if (!n.param_name.empty()) {
      Tensor& g = store.grad(n.param_name);
      simd::active().add(g.size(), g.data(), n.grad.data(), g.data());
      any_param = true;
    }
  }
  if (!any_param) throw Error("loss is not connected to any parameter of the store");
}

// ---------------------------------------------------------------------------
// Ops

namespace {

const simd::Kernels& K() { return simd::active(); }

enum class Bcast { kSame, kScalarA, kScalarB, kRowB };

Bcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::kSame;
  if (b.size() == 1) return Bcast::kScalarB;
  if (a.size() == 1) return Bcast::kScalarA;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::kRowB;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

// Sums g down to the shape of an operand that was broadcast in `mode`.
void reduce_into(Bcast mode, bool is_b, const Tensor& g, Tensor& slot) {
  const bool broadcast = (is_b && (mode == Bcast::kScalarB || mode == Bcast::kRowB)) ||
                         (!is_b && mode == Bcast::kScalarA);
  if (!broadcast) {
    K().add(g.size(), slot.data(), g.data(), slot.data());
    return;
  }
  if (slot.size() == 1) {
    double s = 0.0;
    for (double v : g.values()) s += v;
    slot[0] += s;
    return;
  }
  for (std::size_t r = 0; r < g.rows(); ++r) K().add(g.cols(), slot.data(), g.row(r).data(), slot.data());
}

template <typename F>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, Bcast mode, F f) {
  const Tensor& big = mode == Bcast::kScalarA ? b : a;
  Tensor out(big.shape());
  const std::size_t n = out.size();
  const std::size_t c = out.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = mode == Bcast::kScalarA ? a[0] : a[i];
    double y;
    switch (mode) {
      case Bcast::kSame: y = b[i]; break;
      case Bcast::kScalarA: y = b[i]; break;
      case Bcast::kScalarB: y = b[0]; break;
      default: y = b[i % c]; break;
    }
    out[i] = f(x, y);
  }
  return out;
}

// Broadcast value of operand at output index i.
inline double at_b(const Tensor& b, Bcast mode, std::size_t i, std::size_t c) {
  switch (mode) {
    case Bcast::kScalarB: return b[0];
    case Bcast::kRowB: return b[i % c];
    default: return b[i];
  }
}

inline double at_a(const Tensor& a, Bcast mode, std::size_t i) { return mode == Bcast::kScalarA ? a[0] : a[i]; }

template <typename Fwd, typename Bwd>
Var unary(Var a, Fwd fwd, Bwd bwd) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return t.record(std::move(out), {a}, [a, bwd](Tape& tp, const Tensor& y, const Tensor& g) {
    Tensor* ga = tp.grad_slot(a);
    if (!ga) return;
    const Tensor& x = tp.value(a);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bwd(x[i], y[i]);
  });
}

void same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw Error("operands recorded on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  if (y.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(x.shape()) + " x " + shape_str(y.shape()));
  }
  Tensor out({m, n});
  K().gemm_nn(m, n, k, x.data(), y.data(), out.data(), false);
  return a.tape()->record(std::move(out), {a, b}, [a, b, m, n, k](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) K().gemm_nt(m, k, n, g.data(), tp.value(b).data(), ga->data(), true);
    if (Tensor* gb = tp.grad_slot(b)) K().gemm_tn(k, n, m, tp.value(a).data(), g.data(), gb->data(), true);
  });
}

Var add(Var a, Var b) {
  same_tape(a, b);
  const Bcast mode = broadcast_mode(a.value(), b.value(), "add");
  Tensor out;
  if (mode == Bcast::kSame) {
    out = Tensor(a.value().shape());
    K().add(out.size(), a.value().data(), b.value().data(), out.data());
  } else {
    out = elementwise_binary(a.value(), b.value(), mode, [](double x, double y) { return x + y; });
  }
  return a.tape()->record(std::move(out), {a, b}, [a, b, mode](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) reduce_into(mode, false, g, *ga);
    if (Tensor* gb = tp.grad_slot(b)) reduce_into(mode, true, g, *gb);
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  const Bcast mode = broadcast_mode(a.value(), b.value(), "sub");
  Tensor out;
  if (mode == Bcast::kSame) {
    out = Tensor(a.value().shape());
    K().sub(out.size(), a.value().data(), b.value().data(), out.data());
  } else {
    out = elementwise_binary(a.value(), b.value(), mode, [](double x, double y) { return x - y; });
  }
  return a.tape()->record(std::move(out), {a, b}, [a, b, mode](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) reduce_into(mode, false, g, *ga);
    if (Tensor* gb = tp.grad_slot(b)) {
      Tensor ng(g.shape());
      K().scale(g.size(), -1.0, g.data(), ng.data());
      reduce_into(mode, true, ng, *gb);
    }
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  const Bcast mode = broadcast_mode(a.value(), b.value(), "mul");
  Tensor out;
  if (mode == Bcast::kSame) {
    out = Tensor(a.value().shape());
    K().mul(out.size(), a.value().data(), b.value().data(), out.data());
  } else {
    out = elementwise_binary(a.value(), b.value(), mode, [](double x, double y) { return x * y; });
  }
  return a.tape()->record(std::move(out), {a, b}, [a, b, mode](Tape& tp, const Tensor&, const Tensor& g) {
    const Tensor& x = tp.value(a);
    const Tensor& y = tp.value(b);
    const std::size_t c = g.cols();
    if (Tensor* ga = tp.grad_slot(a)) {
      if (mode == Bcast::kSame) {
        K().mul_acc(g.size(), g.data(), y.data(), ga->data());
      } else {
        Tensor t(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) t[i] = g[i] * at_b(y, mode, i, c);
        reduce_into(mode, false, t, *ga);
      }
    }
    if (Tensor* gb = tp.grad_slot(b)) {
      if (mode == Bcast::kSame) {
        K().mul_acc(g.size(), g.data(), x.data(), gb->data());
      } else {
        Tensor t(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) t[i] = g[i] * at_a(x, mode, i);
        reduce_into(mode, true, t, *gb);
      }
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out(a.value().shape());
  K().scale(out.size(), factor, a.value().data(), out.data());
  return a.tape()->record(std::move(out), {a}, [a, factor](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) K().axpy(g.size(), factor, g.data(), ga->data());
  });
}

Var shift(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v += c;
  return a.tape()->record(std::move(out), {a}, [a](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) K().add(g.size(), ga->data(), g.data(), ga->data());
  });
}

Var one_minus(Var a) {
  Tensor out(a.value().shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = 1.0 - x[i];
  return a.tape()->record(std::move(out), {a}, [a](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) K().sub(g.size(), ga->data(), g.data(), ga->data());
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var silu(Var a) {
  auto sig = [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  return unary(
      a, [sig](double x) { return x * sig(x); },
      [sig](double x, double) {
        const double s = sig(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape()->record(Tensor::scalar(s), {a}, [a](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) {
      for (double& v : ga->values()) v += g[0];
    }
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var mean_rows(Var a) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (x.empty() || r == 0) throw ShapeError("mean_rows of an empty tensor");
  Tensor out({1, c});
  for (std::size_t i = 0; i < r; ++i) K().add(c, out.data(), x.row(i).data(), out.data());
  const double inv = 1.0 / static_cast<double>(r);
  K().scale(c, inv, out.data(), out.data());
  return a.tape()->record(std::move(out), {a}, [a, r, c, inv](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) {
      for (std::size_t i = 0; i < r; ++i) K().axpy(c, inv, g.data(), ga->row(i).data());
    }
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = x.at(i, j);
  return a.tape()->record(std::move(out), {a}, [a, r, c](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga->at(i, j) += g.at(j, i);
    }
  });
}

Var softmax_rows(Var a) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    auto in = x.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  return a.tape()->record(std::move(out), {a}, [a, r, c](Tape& tp, const Tensor& y, const Tensor& g) {
    Tensor* ga = tp.grad_slot(a);
    if (!ga) return;
    for (std::size_t i = 0; i < r; ++i) {
      const double d = K().dot(c, g.row(i).data(), y.row(i).data());
      auto yr = y.row(i);
      auto gr = g.row(i);
      auto out = ga->row(i);
      for (std::size_t j = 0; j < c; ++j) out[j] += yr[j] * (gr[j] - d);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.rows() != r) throw ShapeError("concat_cols: row counts differ");
    offsets.push_back(total);
    total += p.cols();
  }
  Tensor out({r, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& x = parts[k].value();
    for (std::size_t i = 0; i < r; ++i) std::copy(x.row(i).begin(), x.row(i).end(), out.row(i).begin() + offsets[k]);
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts, [ps, offsets, r](Tape& tp, const Tensor&, const Tensor& g) {
    for (std::size_t k = 0; k < ps.size(); ++k) {
      Tensor* gp = tp.grad_slot(ps[k]);
      if (!gp) continue;
      const std::size_t c = gp->cols();
      for (std::size_t i = 0; i < r; ++i) K().add(c, gp->row(i).data(), g.row(i).data() + offsets[k], gp->row(i).data());
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const std::size_t c = parts[0].cols();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.cols() != c) throw ShapeError("concat_rows: column counts differ");
    offsets.push_back(total);
    total += p.rows();
  }
  Tensor out({total, c});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& x = parts[k].value();
    std::copy(x.values().begin(), x.values().end(), out.data() + offsets[k] * c);
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts, [ps, offsets, c](Tape& tp, const Tensor&, const Tensor& g) {
    for (std::size_t k = 0; k < ps.size(); ++k) {
      Tensor* gp = tp.grad_slot(ps[k]);
      if (!gp) continue;
      K().add(gp->size(), gp->data(), g.data() + offsets[k] * c, gp->data());
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  if (begin + count > x.cols()) throw ShapeError("slice_cols out of range");
  const std::size_t r = x.rows();
  Tensor out({r, count});
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(x.row(i).begin() + begin, count, out.row(i).begin());
  return a.tape()->record(std::move(out), {a}, [a, begin, count, r](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) {
      for (std::size_t i = 0; i < r; ++i) K().add(count, ga->row(i).data() + begin, g.row(i).data(), ga->row(i).data() + begin);
    }
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& x = a.value();
  const std::size_t c = x.cols();
  Tensor out({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows()) throw ShapeError("gather_rows index out of range");
    std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.tape()->record(std::move(out), {a}, [a, idx, c](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) {
      for (std::size_t i = 0; i < idx.size(); ++i) K().add(c, ga->row(idx[i]).data(), g.row(i).data(), ga->row(idx[i]).data());
    }
  });
}

Var bce_with_logits(Var logits, std::span<const double> labels, double eps) {
  const Tensor& z = logits.value();
  if (z.size() != labels.size() || labels.empty()) {
    throw ShapeError("bce: " + std::to_string(z.size()) + " logits vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = z.size();
  std::vector<double> probs(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) throw DataError("label outside {0,1}");
    const double p = z[i] >= 0 ? 1.0 / (1.0 + std::exp(-z[i])) : std::exp(z[i]) / (1.0 + std::exp(z[i]));
    probs[i] = p;
    const double pc = std::clamp(p, eps, 1.0 - eps);
    total -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
  }
  std::vector<double> ys(labels.begin(), labels.end());
  return logits.tape()->record(
      Tensor::scalar(total / static_cast<double>(n)), {logits},
      [logits, probs = std::move(probs), ys = std::move(ys), eps](Tape& tp, const Tensor&, const Tensor& g) {
        Tensor* gz = tp.grad_slot(logits);
        if (!gz) return;
        const double inv = g[0] / static_cast<double>(ys.size());
        for (std::size_t i = 0; i < ys.size(); ++i) {
          const double p = probs[i];
          if (p < eps || p > 1.0 - eps) continue;  // clamped: flat
          (*gz)[i] += inv * (p - ys[i]);
        }
      });
}

}  // namespace tckin

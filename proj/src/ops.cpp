#include "moevox/ops.hpp"

#include <algorithm>
#include <cmath>

namespace moevox {

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const size_t ra = a.size(), rb = b.size();
  const size_t r = std::max(ra, rb);
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    const int da = i < ra ? a[ra - 1 - i] : 1;
    const int db = i < rb ? b[rb - 1 - i] : 1;
    if (da != db && da != 1 && db != 1)
      throw std::invalid_argument("shapes not broadcast-compatible: " +
                                  shape_str(a) + " vs " + shape_str(b));
    out[r - 1 - i] = std::max(da, db);
  }
  return out;
}

namespace {

// Row-major strides aligned to an output rank, 0 on broadcast dims.
std::vector<int64_t> bcast_strides(const Shape& in, const Shape& out) {
  std::vector<int64_t> strides(out.size(), 0);
  int64_t s = 1;
  for (size_t i = 0; i < in.size(); ++i) {
    const size_t di = in.size() - 1 - i;
    const size_t do_ = out.size() - 1 - i;
    strides[do_] = (in[di] == 1 && out[do_] != 1) ? 0 : s;
    s *= in[di];
  }
  return strides;
}

// Calls f(io, ia, ib) for every output element.
template <class F>
void for_each_bcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
  const auto sa = bcast_strides(a, out);
  const auto sb = bcast_strides(b, out);
  const size_t r = out.size();
  std::vector<int> idx(r, 0);
  const int64_t n = shape_numel(out);
  int64_t ia = 0, ib = 0;
  for (int64_t io = 0; io < n; ++io) {
    f(io, ia, ib);
    for (size_t d = r; d-- > 0;) {
      idx[d]++;
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= static_cast<int64_t>(out[d]) * sa[d];
      ib -= static_cast<int64_t>(out[d]) * sb[d];
      idx[d] = 0;
    }
  }
}

Tensor make_output(Shape shape, std::vector<real> vals, bool rec) {
  return Tensor::from_data(std::move(shape), std::move(vals), rec);
}

enum class BinKind { Add, Sub, Mul, Div };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const int64_t n = shape_numel(out_shape);
  std::vector<real> v(static_cast<size_t>(n));
  const auto av = a.values();
  const auto bv = b.values();

  auto apply = [kind](real x, real y) -> real {
    switch (kind) {
      case BinKind::Add: return x + y;
      case BinKind::Sub: return x - y;
      case BinKind::Mul: return x * y;
      case BinKind::Div: return x / y;
    }
    return 0;
  };

  if (same_shape(a.shape(), b.shape())) {
    switch (kind) {
      case BinKind::Add:
        for (int64_t i = 0; i < n; ++i) v[i] = av[i] + bv[i];
        break;
      case BinKind::Sub:
        for (int64_t i = 0; i < n; ++i) v[i] = av[i] - bv[i];
        break;
      case BinKind::Mul:
        for (int64_t i = 0; i < n; ++i) v[i] = av[i] * bv[i];
        break;
      case BinKind::Div:
        for (int64_t i = 0; i < n; ++i) v[i] = av[i] / bv[i];
        break;
    }
  } else {
    for_each_bcast(out_shape, a.shape(), b.shape(),
                   [&](int64_t io, int64_t ia, int64_t ib) {
                     v[io] = apply(av[ia], bv[ib]);
                   });
  }

  const bool rec = recording_for({&a, &b});
  Tensor out = make_output(out_shape, std::move(v), rec);
  if (rec) {
    Tape::current()->record(out, [a, b, out, kind]() mutable {
      const auto& og = out.data_ptr()->grad;
      const Shape& os = out.shape();
      const bool ga = a.requires_grad();
      const bool gb = b.requires_grad();
      auto* agr = ga ? &a.grad_buffer() : nullptr;
      auto* bgr = gb ? &b.grad_buffer() : nullptr;
      const auto av = a.values();
      const auto bv = b.values();
      for_each_bcast(os, a.shape(), b.shape(),
                     [&](int64_t io, int64_t ia, int64_t ib) {
                       const real g = og[static_cast<size_t>(io)];
                       switch (kind) {
                         case BinKind::Add:
                           if (ga) (*agr)[ia] += g;
                           if (gb) (*bgr)[ib] += g;
                           break;
                         case BinKind::Sub:
                           if (ga) (*agr)[ia] += g;
                           if (gb) (*bgr)[ib] -= g;
                           break;
                         case BinKind::Mul:
                           if (ga) (*agr)[ia] += g * bv[ib];
                           if (gb) (*bgr)[ib] += g * av[ia];
                           break;
                         case BinKind::Div:
                           if (ga) (*agr)[ia] += g / bv[ib];
                           if (gb)
                             (*bgr)[ib] -= g * av[ia] / (bv[ib] * bv[ib]);
                           break;
                       }
                     });
    });
  }
  return out;
}

// Unary op with pointwise value and local-derivative functions.
template <class FVal, class FGrad>
Tensor unary_op(const Tensor& a, FVal&& fval, FGrad&& fgrad) {
  const int64_t n = a.numel();
  std::vector<real> v(static_cast<size_t>(n));
  const auto av = a.values();
  for (int64_t i = 0; i < n; ++i) v[i] = fval(av[i]);
  const bool rec = recording_for({&a});
  Tensor out = make_output(a.shape(), std::move(v), rec);
  if (rec) {
    Tape::current()->record(out, [a, out, fgrad]() mutable {
      const auto& og = out.data_ptr()->grad;
      auto& ag = a.grad_buffer();
      const auto av = a.values();
      const auto ov = out.values();
      const int64_t n = a.numel();
      for (int64_t i = 0; i < n; ++i) ag[i] += og[i] * fgrad(av[i], ov[i]);
    });
  }
  return out;
}

constexpr real kInvSqrt2 = real(0.7071067811865475244);
constexpr real kInvSqrt2Pi = real(0.3989422804014326779);

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Div); }

Tensor add_scalar(const Tensor& a, real c) {
  return unary_op(
      a, [c](real x) { return x + c; },
      [](real, real) { return real(1); });
}

Tensor mul_scalar(const Tensor& a, real c) {
  return unary_op(
      a, [c](real x) { return x * c; },
      [c](real, real) { return c; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, real(-1)); }

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](real x) { return x > 0 ? x : real(0); },
      [](real x, real) { return x > 0 ? real(1) : real(0); });
}

Tensor leaky_relu(const Tensor& a, real slope) {
  return unary_op(
      a, [slope](real x) { return x > 0 ? x : slope * x; },
      [slope](real x, real) { return x > 0 ? real(1) : slope; });
}

Tensor gelu(const Tensor& a) {
  return unary_op(
      a,
      [](real x) {
        const real phi = real(0.5) * (real(1) + std::erf(x * kInvSqrt2));
        return x * phi;
      },
      [](real x, real) {
        const real phi = real(0.5) * (real(1) + std::erf(x * kInvSqrt2));
        const real pdf = kInvSqrt2Pi * std::exp(real(-0.5) * x * x);
        return phi + x * pdf;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      [](real x) {
        if (x >= 0) return real(1) / (real(1) + std::exp(-x));
        const real e = std::exp(x);
        return e / (real(1) + e);
      },
      [](real, real y) { return y * (real(1) - y); });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](real x) { return std::exp(x); },
      [](real, real y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      a, [](real x) { return std::log(x); },
      [](real x, real) { return real(1) / x; });
}

Tensor clamp(const Tensor& a, real lo, real hi) {
  return unary_op(
      a, [lo, hi](real x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](real x, real) {
        return (x >= lo && x <= hi) ? real(1) : real(0);
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw std::invalid_argument("matmul expects 2-D tensors, got " +
                                shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw std::invalid_argument("matmul inner dimensions differ: " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  std::vector<real> v(static_cast<size_t>(m) * n, real(0));
  const auto av = a.values();
  const auto bv = b.values();
  for (int i = 0; i < m; ++i) {
    real* vrow = v.data() + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const real x = av[static_cast<size_t>(i) * k + kk];
      const real* brow = bv.data() + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) vrow[j] += x * brow[j];
    }
  }
  const bool rec = recording_for({&a, &b});
  Tensor out = make_output({m, n}, std::move(v), rec);
  if (rec) {
    Tape::current()->record(out, [a, b, out, m, k, n]() mutable {
      const auto& og = out.data_ptr()->grad;
      const auto av = a.values();
      const auto bv = b.values();
      if (a.requires_grad()) {
        auto& ag = a.grad_buffer();  // dA = dC * B^T
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            real s = 0;
            const real* grow = og.data() + static_cast<size_t>(i) * n;
            const real* brow = bv.data() + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
            ag[static_cast<size_t>(i) * k + kk] += s;
          }
      }
      if (b.requires_grad()) {
        auto& bg = b.grad_buffer();  // dB = A^T * dC
        for (int i = 0; i < m; ++i) {
          const real* grow = og.data() + static_cast<size_t>(i) * n;
          for (int kk = 0; kk < k; ++kk) {
            const real x = av[static_cast<size_t>(i) * k + kk];
            real* brow = bg.data() + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) brow[j] += x * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  real s = 0;
  for (real x : a.values()) s += x;
  const bool rec = recording_for({&a});
  Tensor out = make_output({1}, {s}, rec);
  if (rec) {
    Tape::current()->record(out, [a, out]() mutable {
      const real g = out.data_ptr()->grad[0];
      auto& ag = a.grad_buffer();
      for (real& x : ag) x += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  const real inv = real(1) / static_cast<real>(a.numel());
  real s = 0;
  for (real x : a.values()) s += x;
  s *= inv;
  const bool rec = recording_for({&a});
  Tensor out = make_output({1}, {s}, rec);
  if (rec) {
    Tape::current()->record(out, [a, out, inv]() mutable {
      const real g = out.data_ptr()->grad[0] * inv;
      auto& ag = a.grad_buffer();
      for (real& x : ag) x += g;
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw std::invalid_argument("reshape " + shape_str(a.shape()) + " -> " +
                                shape_str(shape) + " changes element count");
  std::vector<real> v(a.values().begin(), a.values().end());
  const bool rec = recording_for({&a});
  Tensor out = make_output(std::move(shape), std::move(v), rec);
  if (rec) {
    Tape::current()->record(out, [a, out]() mutable {
      const auto& og = out.data_ptr()->grad;
      auto& ag = a.grad_buffer();
      for (size_t i = 0; i < ag.size(); ++i) ag[i] += og[i];
    });
  }
  return out;
}

namespace {
// outer size before `axis`, inner size after it
std::pair<int64_t, int64_t> split_at_axis(const Shape& s, int axis) {
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i)
    inner *= s[i];
  return {outer, inner};
}
}  // namespace

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size()))
    throw std::invalid_argument("concat axis out of range");
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() != static_cast<int>(s0.size()))
      throw std::invalid_argument("concat rank mismatch: " + shape_str(s0) +
                                  " vs " + shape_str(p.shape()));
    for (int d = 0; d < p.ndim(); ++d)
      if (d != axis && p.dim(d) != s0[static_cast<size_t>(d)])
        throw std::invalid_argument("concat shape mismatch: " + shape_str(s0) +
                                    " vs " + shape_str(p.shape()));
    total += p.dim(axis);
  }
  Shape os = s0;
  os[static_cast<size_t>(axis)] = total;
  const auto [outer, inner] = split_at_axis(os, axis);
  std::vector<real> v(static_cast<size_t>(shape_numel(os)));
  const int64_t out_row = static_cast<int64_t>(total) * inner;
  int64_t off = 0;
  for (const Tensor& p : parts) {
    const int64_t prow = static_cast<int64_t>(p.dim(axis)) * inner;
    const auto pv = p.values();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(pv.begin() + o * prow, pv.begin() + (o + 1) * prow,
                v.begin() + o * out_row + off);
    off += prow;
  }
  bool any = false;
  for (const Tensor& p : parts)
    if (p.requires_grad()) any = true;
  const bool rec = any && grad_enabled() && Tape::current() != nullptr;
  Tensor out = make_output(os, std::move(v), rec);
  if (rec) {
    Tape::current()->record(out, [parts, out, axis, outer = outer,
                                  inner = inner, out_row]() mutable {
      const auto& og = out.data_ptr()->grad;
      int64_t off = 0;
      for (const Tensor& p : parts) {
        const int64_t prow = static_cast<int64_t>(p.dim(axis)) * inner;
        if (p.requires_grad()) {
          auto& pg = p.grad_buffer();
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < prow; ++i)
              pg[o * prow + i] += og[o * out_row + off + i];
        }
        off += prow;
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  const Shape& s = a.shape();
  if (axis < 0 || axis >= a.ndim())
    throw std::invalid_argument("slice axis out of range");
  if (start < 0 || len <= 0 || start + len > a.dim(axis))
    throw std::invalid_argument("slice [" + std::to_string(start) + ", " +
                                std::to_string(start + len) +
                                ") out of range for " + shape_str(s));
  Shape os = s;
  os[static_cast<size_t>(axis)] = len;
  const auto [outer, inner] = split_at_axis(s, axis);
  const int64_t arow = static_cast<int64_t>(a.dim(axis)) * inner;
  const int64_t orow = static_cast<int64_t>(len) * inner;
  const int64_t off = static_cast<int64_t>(start) * inner;
  std::vector<real> v(static_cast<size_t>(outer * orow));
  const auto av = a.values();
  for (int64_t o = 0; o < outer; ++o)
    std::copy(av.begin() + o * arow + off, av.begin() + o * arow + off + orow,
              v.begin() + o * orow);
  const bool rec = recording_for({&a});
  Tensor out = make_output(os, std::move(v), rec);
  if (rec) {
    Tape::current()->record(
        out, [a, out, outer = outer, arow, orow, off]() mutable {
          const auto& og = out.data_ptr()->grad;
          auto& ag = a.grad_buffer();
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < orow; ++i)
              ag[o * arow + off + i] += og[o * orow + i];
        });
  }
  return out;
}

Tensor softmax_temperature(const Tensor& scores, real tau) {
  if (scores.ndim() != 1)
    throw std::invalid_argument("softmax_temperature expects a 1-D tensor");
  if (!(tau > 0))
    throw std::invalid_argument("softmax temperature must be positive, got " +
                                std::to_string(tau));
  const auto sv = scores.values();
  const int64_t n = scores.numel();
  real mx = sv[0];
  for (real x : sv) {
    if (!std::isfinite(x))
      throw std::invalid_argument("softmax_temperature: non-finite score");
    mx = std::max(mx, x);
  }
  std::vector<real> v(static_cast<size_t>(n));
  real z = 0;
  for (int64_t i = 0; i < n; ++i) {
    v[i] = std::exp((sv[i] - mx) / tau);
    z += v[i];
  }
  for (int64_t i = 0; i < n; ++i) v[i] /= z;
  const bool rec = recording_for({&scores});
  Tensor out = make_output(scores.shape(), std::move(v), rec);
  if (rec) {
    Tape::current()->record(out, [scores, out, tau]() mutable {
      const auto& og = out.data_ptr()->grad;
      const auto p = out.values();
      auto& sg = scores.grad_buffer();
      const int64_t n = scores.numel();
      real dot = 0;
      for (int64_t i = 0; i < n; ++i) dot += og[i] * p[i];
      for (int64_t i = 0; i < n; ++i) sg[i] += p[i] * (og[i] - dot) / tau;
    });
  }
  return out;
}

Tensor spatial_mean(const Tensor& a) {
  if (a.ndim() < 3)
    throw std::invalid_argument("spatial_mean expects [B, C, spatial...]");
  const int B = a.dim(0), C = a.dim(1);
  int64_t spatial = 1;
  for (int d = 2; d < a.ndim(); ++d) spatial *= a.dim(d);
  const real inv = real(1) / static_cast<real>(spatial);
  std::vector<real> v(static_cast<size_t>(B) * C, real(0));
  const auto av = a.values();
  for (int64_t bc = 0; bc < static_cast<int64_t>(B) * C; ++bc) {
    real s = 0;
    const real* base = av.data() + bc * spatial;
    for (int64_t i = 0; i < spatial; ++i) s += base[i];
    v[static_cast<size_t>(bc)] = s * inv;
  }
  const bool rec = recording_for({&a});
  Tensor out = make_output({B, C}, std::move(v), rec);
  if (rec) {
    Tape::current()->record(out, [a, out, spatial, inv, B, C]() mutable {
      const auto& og = out.data_ptr()->grad;
      auto& ag = a.grad_buffer();
      for (int64_t bc = 0; bc < static_cast<int64_t>(B) * C; ++bc) {
        const real g = og[static_cast<size_t>(bc)] * inv;
        real* base = ag.data() + bc * spatial;
        for (int64_t i = 0; i < spatial; ++i) base[i] += g;
      }
    });
  }
  return out;
}

}  // namespace moevox

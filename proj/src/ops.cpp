#include "rpeflow/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace rpeflow {

bool ew_is_binary(EwOp op) {
  switch (op) {
    case EwOp::Add:
    case EwOp::Sub:
    case EwOp::Mul:
    case EwOp::Div:
      return true;
    default:
      return false;
  }
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::size_t eb = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (ea == eb) {
      out[rank - 1 - i] = ea;
    } else if (ea == 1) {
      out[rank - 1 - i] = eb;
    } else if (eb == 1) {
      out[rank - 1 - i] = ea;
    } else {
      throw ShapeError("broadcast: incompatible shapes " + shape_str(a) +
                       " and " + shape_str(b));
    }
  }
  return out;
}

namespace {

// Strides of `in` aligned to the trailing dims of `out`; 0 where broadcast.
std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t run = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t d_in = in.size() - 1 - i;
    const std::size_t d_out = out.size() - 1 - i;
    strides[d_out] = (in[d_in] == 1) ? 0 : run;
    run *= in[d_in];
  }
  return strides;
}

// Calls f(flat_out, off_a, off_b) for every output element.
template <typename F>
void for_each_pair(const Shape& out, const std::vector<std::size_t>& sa,
                   const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t n = shape_numel(out);
  const std::size_t rank = out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    f(flat, oa, ob);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

// outer x extent x inner decomposition of one axis.
struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename T>
using DataPtr = std::shared_ptr<detail::TensorData<T>>;

template <typename T>
bool want_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (!Tape<T>::current()) return false;
  for (const Tensor<T>* t : inputs) {
    if (t && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
Tensor<T> make_output(Shape shape, std::vector<T> values, bool rec) {
  return Tensor<T>::from(std::move(shape), std::move(values), rec);
}

}  // namespace

template <typename T>
Tensor<T> elementwise(EwOp op, const Tensor<T>& a, std::optional<Tensor<T>> b) {
  if (ew_is_binary(op)) {
    if (!b) throw ShapeError("elementwise: binary op needs two operands");
    const Tensor<T>& bt = *b;
    const Shape out_shape = broadcast_shape(a.shape(), bt.shape());
    const auto sa = aligned_strides(a.shape(), out_shape);
    const auto sb = aligned_strides(bt.shape(), out_shape);
    std::vector<T> out(shape_numel(out_shape));
    const auto av = a.values();
    const auto bv = bt.values();
    switch (op) {
      case EwOp::Add:
        for_each_pair(out_shape, sa, sb, [&](std::size_t o, std::size_t ia,
                                             std::size_t ib) {
          out[o] = av[ia] + bv[ib];
        });
        break;
      case EwOp::Sub:
        for_each_pair(out_shape, sa, sb, [&](std::size_t o, std::size_t ia,
                                             std::size_t ib) {
          out[o] = av[ia] - bv[ib];
        });
        break;
      case EwOp::Mul:
        for_each_pair(out_shape, sa, sb, [&](std::size_t o, std::size_t ia,
                                             std::size_t ib) {
          out[o] = av[ia] * bv[ib];
        });
        break;
      case EwOp::Div:
        for_each_pair(out_shape, sa, sb, [&](std::size_t o, std::size_t ia,
                                             std::size_t ib) {
          if (bv[ib] == T(0)) {
            throw DomainError("elementwise: division by exact zero");
          }
          out[o] = av[ia] / bv[ib];
        });
        break;
      default:
        break;
    }
    const bool rec = want_record<T>({&a, &bt});
    Tensor<T> result = make_output(out_shape, std::move(out), rec);
    if (rec) {
      Tape<T>::current()->record([op, ad = a.data(), bd = bt.data(),
                                  od = result.data(), sa, sb,
                                  out_shape = result.shape()]() {
        if (od->grad.empty()) return;
        const bool wa = ad->requires_grad;
        const bool wb = bd->requires_grad;
        if (wa) ad->ensure_grad();
        if (wb) bd->ensure_grad();
        for_each_pair(out_shape, sa, sb, [&](std::size_t o, std::size_t ia,
                                             std::size_t ib) {
          const T g = od->grad[o];
          switch (op) {
            case EwOp::Add:
              if (wa) ad->grad[ia] += g;
              if (wb) bd->grad[ib] += g;
              break;
            case EwOp::Sub:
              if (wa) ad->grad[ia] += g;
              if (wb) bd->grad[ib] -= g;
              break;
            case EwOp::Mul:
              if (wa) ad->grad[ia] += g * bd->values[ib];
              if (wb) bd->grad[ib] += g * ad->values[ia];
              break;
            case EwOp::Div: {
              const T bvv = bd->values[ib];
              if (wa) ad->grad[ia] += g / bvv;
              if (wb) bd->grad[ib] -= g * ad->values[ia] / (bvv * bvv);
              break;
            }
            default:
              break;
          }
        });
      });
    }
    return result;
  }

  // Unary kinds.
  const auto av = a.values();
  std::vector<T> out(av.size());
  switch (op) {
    case EwOp::Exp:
      for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::exp(av[i]);
      break;
    case EwOp::Log:
      for (std::size_t i = 0; i < av.size(); ++i) {
        if (av[i] <= T(0)) {
          throw DomainError("elementwise: log of non-positive value");
        }
        out[i] = std::log(av[i]);
      }
      break;
    case EwOp::Neg:
      for (std::size_t i = 0; i < av.size(); ++i) out[i] = -av[i];
      break;
    case EwOp::Relu:
      for (std::size_t i = 0; i < av.size(); ++i)
        out[i] = av[i] > T(0) ? av[i] : T(0);
      break;
    case EwOp::LeakyRelu:
      for (std::size_t i = 0; i < av.size(); ++i)
        out[i] = av[i] > T(0) ? av[i] : T(0.1) * av[i];
      break;
    case EwOp::Square:
      for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * av[i];
      break;
    case EwOp::Sqrt:
      for (std::size_t i = 0; i < av.size(); ++i) {
        if (av[i] < T(0)) {
          throw DomainError("elementwise: sqrt of negative value");
        }
        out[i] = std::sqrt(av[i]);
      }
      break;
    default:
      throw ShapeError("elementwise: unary op given two operands");
  }
  const bool rec = want_record<T>({&a});
  Tensor<T> result = make_output(a.shape(), std::move(out), rec);
  if (rec) {
    Tape<T>::current()->record([op, ad = a.data(), od = result.data()]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      const std::size_t n = ad->values.size();
      for (std::size_t i = 0; i < n; ++i) {
        const T g = od->grad[i];
        const T x = ad->values[i];
        switch (op) {
          case EwOp::Exp:
            ad->grad[i] += g * od->values[i];
            break;
          case EwOp::Log:
            ad->grad[i] += g / x;
            break;
          case EwOp::Neg:
            ad->grad[i] -= g;
            break;
          case EwOp::Relu:
            ad->grad[i] += x > T(0) ? g : T(0);
            break;
          case EwOp::LeakyRelu:
            ad->grad[i] += x > T(0) ? g : T(0.1) * g;
            break;
          case EwOp::Square:
            ad->grad[i] += g * T(2) * x;
            break;
          case EwOp::Sqrt:
            // subgradient 0 at the origin keeps exact-zero losses finite
            if (od->values[i] > T(0)) {
              ad->grad[i] += g * T(0.5) / od->values[i];
            }
            break;
          default:
            break;
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(EwOp::Add, a, std::optional<Tensor<T>>(b));
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(EwOp::Sub, a, std::optional<Tensor<T>>(b));
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(EwOp::Mul, a, std::optional<Tensor<T>>(b));
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(EwOp::Div, a, std::optional<Tensor<T>>(b));
}
template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return elementwise(EwOp::Exp, a);
}
template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return elementwise(EwOp::Log, a);
}
template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return elementwise(EwOp::Neg, a);
}
template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return elementwise(EwOp::Relu, a);
}
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a) {
  return elementwise(EwOp::LeakyRelu, a);
}
template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return elementwise(EwOp::Square, a);
}
template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  return elementwise(EwOp::Sqrt, a);
}

namespace {

// Plain row-major GEMM helpers used by matmul forward and backward.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) {
        acc += a[i * k + p] * b[p * n + j];
      }
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void gemm_at_b(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
               std::size_t n) {
  // c (k x n) += a^T (k x m) * b (m x n); a stored m x k
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = c[p * n + j];
      for (std::size_t i = 0; i < m; ++i) {
        acc += a[i * k + p] * b[i * n + j];
      }
      c[p * n + j] = acc;
    }
  }
}

template <typename T>
void gemm_a_bt(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
               std::size_t n) {
  // c (m x k) += a (m x n) * b^T (n x k); b stored k x n
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      T acc = c[i * k + p];
      for (std::size_t j = 0; j < n; ++j) {
        acc += a[i * n + j] * b[p * n + j];
      }
      c[i * k + p] = acc;
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || as.size() > 3 || bs.size() < 2 || bs.size() > 3 ||
      bs.size() > as.size()) {
    throw ShapeError("matmul: unsupported ranks " + shape_str(as) + " x " +
                     shape_str(bs));
  }
  const std::size_t batch = as.size() == 3 ? as[0] : 1;
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as[as.size() - 1];
  const bool b_batched = bs.size() == 3;
  if (b_batched && bs[0] != batch) {
    throw ShapeError("matmul: batch extents differ " + shape_str(as) + " x " +
                     shape_str(bs));
  }
  const std::size_t kb = bs[bs.size() - 2];
  const std::size_t n = bs[bs.size() - 1];
  if (k != kb) {
    throw ShapeError("matmul: inner extents differ " + shape_str(as) + " x " +
                     shape_str(bs));
  }
  Shape out_shape = as.size() == 3 ? Shape{batch, m, n} : Shape{m, n};
  std::vector<T> out(shape_numel(out_shape), T(0));
  const T* ap = a.values().data();
  const T* bp = b.values().data();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    gemm(ap + bi * m * k, bp + (b_batched ? bi * k * n : 0),
         out.data() + bi * m * n, m, k, n, false);
  }
  const bool rec = want_record<T>({&a, &b});
  Tensor<T> result = make_output(std::move(out_shape), std::move(out), rec);
  if (rec) {
    Tape<T>::current()->record([ad = a.data(), bd = b.data(),
                                od = result.data(), batch, m, k, n,
                                b_batched]() {
      if (od->grad.empty()) return;
      const bool wa = ad->requires_grad;
      const bool wb = bd->requires_grad;
      if (wa) ad->ensure_grad();
      if (wb) bd->ensure_grad();
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const T* g = od->grad.data() + bi * m * n;
        const T* av = ad->values.data() + bi * m * k;
        const T* bv = bd->values.data() + (b_batched ? bi * k * n : 0);
        if (wa) {
          gemm_a_bt(g, bv, ad->grad.data() + bi * m * k, m, k, n);
        }
        if (wb) {
          gemm_at_b(av, g, bd->grad.data() + (b_batched ? bi * k * n : 0), m,
                    k, n);
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
  const AxisSplit sp = split_axis(a.shape(), axis);
  const auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.extent * sp.inner + in;
      T mx = av[base];
      for (std::size_t e = 1; e < sp.extent; ++e) {
        mx = std::max(mx, av[base + e * sp.inner]);
      }
      T denom = T(0);
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const T v = std::exp(av[base + e * sp.inner] - mx);
        out[base + e * sp.inner] = v;
        denom += v;
      }
      for (std::size_t e = 0; e < sp.extent; ++e) {
        out[base + e * sp.inner] /= denom;
      }
    }
  }
  const bool rec = want_record<T>({&a});
  Tensor<T> result = make_output(a.shape(), std::move(out), rec);
  if (rec) {
    Tape<T>::current()->record([ad = a.data(), od = result.data(), sp]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.extent * sp.inner + in;
          T dot = T(0);
          for (std::size_t e = 0; e < sp.extent; ++e) {
            const std::size_t i = base + e * sp.inner;
            dot += od->grad[i] * od->values[i];
          }
          for (std::size_t e = 0; e < sp.extent; ++e) {
            const std::size_t i = base + e * sp.inner;
            ad->grad[i] += od->values[i] * (od->grad[i] - dot);
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride,
                 std::size_t padding, bool depthwise) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 3) {
    throw ShapeError("conv2d: input must be H x W x C, got " + shape_str(xs));
  }
  const std::size_t h = xs[0], wd = xs[1], cin = xs[2];
  std::size_t k, cout;
  if (depthwise) {
    if (ws.size() != 3 || ws[0] != ws[1] || ws[2] != cin) {
      throw ShapeError("conv2d: depthwise weights must be k x k x C, got " +
                       shape_str(ws));
    }
    k = ws[0];
    cout = cin;
  } else {
    if (ws.size() != 4 || ws[0] != ws[1] || ws[2] != cin) {
      throw ShapeError("conv2d: weights must be k x k x Cin x Cout, got " +
                       shape_str(ws) + " for input " + shape_str(xs));
    }
    k = ws[0];
    cout = ws[3];
  }
  if (k % 2 == 0) throw ShapeError("conv2d: kernel extent must be odd");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (k > h + 2 * padding || k > wd + 2 * padding) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  const std::size_t ho = (h + 2 * padding - k) / stride + 1;
  const std::size_t wo = (wd + 2 * padding - k) / stride + 1;

  const auto xv = x.values();
  const auto wv = w.values();
  std::vector<T> out(ho * wo * cout, T(0));
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy =
            static_cast<std::ptrdiff_t>(oy * stride + ky) -
            static_cast<std::ptrdiff_t>(padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * stride + kx) -
              static_cast<std::ptrdiff_t>(padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
          const T* xrow = xv.data() + (iy * wd + ix) * cin;
          T* orow = out.data() + (oy * wo + ox) * cout;
          if (depthwise) {
            const T* wrow = wv.data() + (ky * k + kx) * cin;
            for (std::size_t c = 0; c < cin; ++c) {
              orow[c] += xrow[c] * wrow[c];
            }
          } else {
            const T* wrow = wv.data() + (ky * k + kx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const T xval = xrow[ci];
              const T* wcol = wrow + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) {
                orow[co] += xval * wcol[co];
              }
            }
          }
        }
      }
    }
  }
  const bool rec = want_record<T>({&x, &w});
  Tensor<T> result =
      make_output(Shape{ho, wo, cout}, std::move(out), rec);
  if (rec) {
    Tape<T>::current()->record([xd = x.data(), wdta = w.data(),
                                od = result.data(), h, wd, cin, cout, k,
                                stride, padding, ho, wo, depthwise]() {
      if (od->grad.empty()) return;
      const bool wx = xd->requires_grad;
      const bool ww = wdta->requires_grad;
      if (wx) xd->ensure_grad();
      if (ww) wdta->ensure_grad();
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const T* grow = od->grad.data() + (oy * wo + ox) * cout;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride + ky) -
                static_cast<std::ptrdiff_t>(padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) -
                  static_cast<std::ptrdiff_t>(padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
              const std::size_t xoff = (iy * wd + ix) * cin;
              if (depthwise) {
                const std::size_t woff = (ky * k + kx) * cin;
                for (std::size_t c = 0; c < cin; ++c) {
                  if (wx) {
                    xd->grad[xoff + c] += grow[c] * wdta->values[woff + c];
                  }
                  if (ww) {
                    wdta->grad[woff + c] += grow[c] * xd->values[xoff + c];
                  }
                }
              } else {
                const std::size_t woff = (ky * k + kx) * cin * cout;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                  const std::size_t wci = woff + ci * cout;
                  T gx = T(0);
                  for (std::size_t co = 0; co < cout; ++co) {
                    gx += grow[co] * wdta->values[wci + co];
                    if (ww) {
                      wdta->grad[wci + co] += grow[co] * xd->values[xoff + ci];
                    }
                  }
                  if (wx) xd->grad[xoff + ci] += gx;
                }
              }
            }
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, std::size_t axis) {
  constexpr T kEps = T(1e-5);
  const AxisSplit sp = split_axis(x.shape(), axis);
  if (sp.extent < 2) {
    throw ShapeError("layernorm: normalized extent must be >= 2");
  }
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  std::vector<T> inv_sigma(sp.outer * sp.inner);
  const T inv_n = T(1) / static_cast<T>(sp.extent);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.extent * sp.inner + in;
      T mu = T(0);
      for (std::size_t e = 0; e < sp.extent; ++e) mu += xv[base + e * sp.inner];
      mu *= inv_n;
      T var = T(0);
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const T d = xv[base + e * sp.inner] - mu;
        var += d * d;
      }
      var *= inv_n;
      const T is = T(1) / std::sqrt(var + kEps);
      inv_sigma[o * sp.inner + in] = is;
      for (std::size_t e = 0; e < sp.extent; ++e) {
        out[base + e * sp.inner] = (xv[base + e * sp.inner] - mu) * is;
      }
    }
  }
  const bool rec = want_record<T>({&x});
  Tensor<T> result = make_output(x.shape(), std::move(out), rec);
  if (rec) {
    Tape<T>::current()->record([xd = x.data(), od = result.data(), sp,
                                inv_sigma = std::move(inv_sigma), inv_n]() {
      if (od->grad.empty()) return;
      xd->ensure_grad();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.extent * sp.inner + in;
          const T is = inv_sigma[o * sp.inner + in];
          T gmean = T(0), gymean = T(0);
          for (std::size_t e = 0; e < sp.extent; ++e) {
            const std::size_t i = base + e * sp.inner;
            gmean += od->grad[i];
            gymean += od->grad[i] * od->values[i];
          }
          gmean *= inv_n;
          gymean *= inv_n;
          for (std::size_t e = 0; e < sp.extent; ++e) {
            const std::size_t i = base + e * sp.inner;
            xd->grad[i] +=
                is * (od->grad[i] - gmean - od->values[i] * gymean);
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  const auto av = a.values();
  T acc = T(0);
  for (T v : av) acc += v;
  const bool rec = want_record<T>({&a});
  Tensor<T> result = Tensor<T>::from(Shape{}, {acc}, rec);
  if (rec) {
    Tape<T>::current()->record([ad = a.data(), od = result.data()]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      const T g = od->grad[0];
      for (T& gi : ad->grad) gi += g;
    });
  }
  return result;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a, std::size_t axis, bool keepdim) {
  const AxisSplit sp = split_axis(a.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < a.shape().size(); ++i) {
    if (i == axis) {
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(a.shape()[i]);
    }
  }
  const auto av = a.values();
  std::vector<T> out(sp.outer * sp.inner, T(0));
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t e = 0; e < sp.extent; ++e) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        out[o * sp.inner + in] += av[(o * sp.extent + e) * sp.inner + in];
      }
    }
  }
  const bool rec = want_record<T>({&a});
  Tensor<T> result = make_output(std::move(out_shape), std::move(out), rec);
  if (rec) {
    Tape<T>::current()->record([ad = a.data(), od = result.data(), sp]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t e = 0; e < sp.extent; ++e) {
          for (std::size_t in = 0; in < sp.inner; ++in) {
            ad->grad[(o * sp.extent + e) * sp.inner + in] +=
                od->grad[o * sp.inner + in];
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return sum(a) * (T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, std::size_t axis, bool keepdim) {
  const T scale = T(1) / static_cast<T>(a.shape().at(axis));
  return sum(a, axis, keepdim) * scale;
}

template <typename T>
Tensor<T> max_axis(const Tensor<T>& a, std::size_t axis) {
  const AxisSplit sp = split_axis(a.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < a.shape().size(); ++i) {
    if (i != axis) out_shape.push_back(a.shape()[i]);
  }
  const auto av = a.values();
  std::vector<T> out(sp.outer * sp.inner);
  std::vector<std::size_t> arg(sp.outer * sp.inner, 0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      T best = av[o * sp.extent * sp.inner + in];
      std::size_t bi = 0;
      for (std::size_t e = 1; e < sp.extent; ++e) {
        const T v = av[(o * sp.extent + e) * sp.inner + in];
        if (v > best) {
          best = v;
          bi = e;
        }
      }
      out[o * sp.inner + in] = best;
      arg[o * sp.inner + in] = bi;
    }
  }
  const bool rec = want_record<T>({&a});
  Tensor<T> result = make_output(std::move(out_shape), std::move(out), rec);
  if (rec) {
    Tape<T>::current()->record([ad = a.data(), od = result.data(), sp,
                                arg = std::move(arg)]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t e = arg[o * sp.inner + in];
          ad->grad[(o * sp.extent + e) * sp.inner + in] +=
              od->grad[o * sp.inner + in];
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis out of range for " + shape_str(first));
  }
  Shape out_shape = first;
  std::size_t total = first[axis];
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const Shape& s = parts[p].shape();
    if (s.size() != first.size()) {
      throw ShapeError("concat: rank mismatch");
    }
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) {
        throw ShapeError("concat: extent mismatch at axis " +
                         std::to_string(d));
      }
    }
    total += s[axis];
  }
  out_shape[axis] = total;
  const AxisSplit osp = split_axis(out_shape, axis);
  std::vector<T> out(shape_numel(out_shape));
  std::size_t cursor = 0;
  std::vector<std::size_t> offsets(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    offsets[p] = cursor;
    const std::size_t ext = parts[p].shape()[axis];
    const auto pv = parts[p].values();
    for (std::size_t o = 0; o < osp.outer; ++o) {
      for (std::size_t e = 0; e < ext; ++e) {
        const T* src = pv.data() + (o * ext + e) * osp.inner;
        T* dst = out.data() + (o * osp.extent + cursor + e) * osp.inner;
        std::copy(src, src + osp.inner, dst);
      }
    }
    cursor += ext;
  }
  bool any_grad = false;
  for (const auto& p : parts) any_grad = any_grad || p.requires_grad();
  const bool rec = Tape<T>::current() && any_grad;
  Tensor<T> result = make_output(std::move(out_shape), std::move(out), rec);
  if (rec) {
    std::vector<DataPtr<T>> datas;
    datas.reserve(parts.size());
    for (const auto& p : parts) datas.push_back(p.data());
    Tape<T>::current()->record([datas = std::move(datas),
                                offsets = std::move(offsets),
                                od = result.data(), osp, axis]() {
      if (od->grad.empty()) return;
      for (std::size_t p = 0; p < datas.size(); ++p) {
        auto& d = datas[p];
        if (!d->requires_grad) continue;
        d->ensure_grad();
        const std::size_t ext = d->shape[axis];
        for (std::size_t o = 0; o < osp.outer; ++o) {
          for (std::size_t e = 0; e < ext; ++e) {
            const T* src =
                od->grad.data() + (o * osp.extent + offsets[p] + e) * osp.inner;
            T* dst = d->grad.data() + (o * ext + e) * osp.inner;
            for (std::size_t i = 0; i < osp.inner; ++i) dst[i] += src[i];
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> concat(std::initializer_list<Tensor<T>> parts, std::size_t axis) {
  std::vector<Tensor<T>> v(parts);
  return concat(std::span<const Tensor<T>>(v), axis);
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start,
                std::size_t len) {
  const AxisSplit sp = split_axis(a.shape(), axis);
  if (start + len > sp.extent) {
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") exceeds extent " +
                     std::to_string(sp.extent));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  const auto av = a.values();
  std::vector<T> out(shape_numel(out_shape));
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t e = 0; e < len; ++e) {
      const T* src = av.data() + (o * sp.extent + start + e) * sp.inner;
      T* dst = out.data() + (o * len + e) * sp.inner;
      std::copy(src, src + sp.inner, dst);
    }
  }
  const bool rec = want_record<T>({&a});
  Tensor<T> result = make_output(std::move(out_shape), std::move(out), rec);
  if (rec) {
    Tape<T>::current()->record(
        [ad = a.data(), od = result.data(), sp, start, len]() {
          if (od->grad.empty()) return;
          ad->ensure_grad();
          for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t e = 0; e < len; ++e) {
              const T* src = od->grad.data() + (o * len + e) * sp.inner;
              T* dst = ad->grad.data() + (o * sp.extent + start + e) * sp.inner;
              for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
            }
          }
        });
  }
  return result;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  }
  const auto av = a.values();
  const bool rec = want_record<T>({&a});
  Tensor<T> result = Tensor<T>::from(std::move(shape),
                                     std::vector<T>(av.begin(), av.end()), rec);
  if (rec) {
    Tape<T>::current()->record([ad = a.data(), od = result.data()]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i) {
        ad->grad[i] += od->grad[i];
      }
    });
  }
  return result;
}

namespace {

std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t d = s.size(); d-- > 1;) {
    st[d - 1] = st[d] * s[d];
  }
  return st;
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& dims) {
  const Shape& as = a.shape();
  if (dims.size() != as.size()) {
    throw ShapeError("permute: dims rank mismatch");
  }
  std::vector<bool> seen(dims.size(), false);
  Shape out_shape(dims.size());
  for (std::size_t d = 0; d < dims.size(); ++d) {
    if (dims[d] >= as.size() || seen[dims[d]]) {
      throw ShapeError("permute: invalid axis permutation");
    }
    seen[dims[d]] = true;
    out_shape[d] = as[dims[d]];
  }
  const auto in_strides = contiguous_strides(as);
  // stride of output dim d in the input layout
  std::vector<std::size_t> gather_stride(dims.size());
  for (std::size_t d = 0; d < dims.size(); ++d) {
    gather_stride[d] = in_strides[dims[d]];
  }
  const auto av = a.values();
  const std::size_t n = a.size();
  std::vector<T> out(n);
  std::vector<std::size_t> src_of(n);
  {
    std::vector<std::size_t> idx(out_shape.size(), 0);
    std::size_t off = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
      out[flat] = av[off];
      src_of[flat] = off;
      for (std::size_t d = out_shape.size(); d-- > 0;) {
        ++idx[d];
        off += gather_stride[d];
        if (idx[d] < out_shape[d]) break;
        off -= gather_stride[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  }
  const bool rec = want_record<T>({&a});
  Tensor<T> result = make_output(std::move(out_shape), std::move(out), rec);
  if (rec) {
    Tape<T>::current()->record(
        [ad = a.data(), od = result.data(), src_of = std::move(src_of)]() {
          if (od->grad.empty()) return;
          ad->ensure_grad();
          for (std::size_t i = 0; i < od->grad.size(); ++i) {
            ad->grad[src_of[i]] += od->grad[i];
          }
        });
  }
  return result;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: rank-2 tensor expected");
  return permute(a, {1, 0});
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  const auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = std::min(std::max(av[i], lo), hi);
  }
  const bool rec = want_record<T>({&a});
  Tensor<T> result = make_output(a.shape(), std::move(out), rec);
  if (rec) {
    Tape<T>::current()->record([ad = a.data(), od = result.data(), lo, hi]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i) {
        const T x = ad->values[i];
        if (x >= lo && x <= hi) ad->grad[i] += od->grad[i];
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a,
                      const std::vector<std::size_t>& idx) {
  if (a.rank() < 1) throw ShapeError("gather_rows: rank >= 1 expected");
  const std::size_t rows = a.shape()[0];
  std::size_t row_len = 1;
  for (std::size_t d = 1; d < a.rank(); ++d) row_len *= a.shape()[d];
  Shape out_shape = a.shape();
  out_shape[0] = idx.size();
  const auto av = a.values();
  std::vector<T> out(idx.size() * row_len);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[r]) +
                       " out of range " + std::to_string(rows));
    }
    std::copy(av.data() + idx[r] * row_len, av.data() + (idx[r] + 1) * row_len,
              out.data() + r * row_len);
  }
  const bool rec = want_record<T>({&a});
  Tensor<T> result = make_output(std::move(out_shape), std::move(out), rec);
  if (rec) {
    Tape<T>::current()->record(
        [ad = a.data(), od = result.data(), idx, row_len]() {
          if (od->grad.empty()) return;
          ad->ensure_grad();
          for (std::size_t r = 0; r < idx.size(); ++r) {
            const T* src = od->grad.data() + r * row_len;
            T* dst = ad->grad.data() + idx[r] * row_len;
            for (std::size_t i = 0; i < row_len; ++i) dst[i] += src[i];
          }
        });
  }
  return result;
}

namespace {

// The four bilinear taps of one clamped (u, v) coordinate.
template <typename T>
struct BilinearTaps {
  std::size_t x0, x1, y0, y1;
  T fx, fy;
  bool u_clamped, v_clamped;
};

template <typename T>
BilinearTaps<T> make_taps(T u, T v, std::size_t h, std::size_t w) {
  BilinearTaps<T> t{};
  const T maxu = static_cast<T>(w - 1);
  const T maxv = static_cast<T>(h - 1);
  T cu = u, cv = v;
  t.u_clamped = false;
  t.v_clamped = false;
  if (cu < T(0)) {
    cu = T(0);
    t.u_clamped = true;
  } else if (cu > maxu) {
    cu = maxu;
    t.u_clamped = true;
  }
  if (cv < T(0)) {
    cv = T(0);
    t.v_clamped = true;
  } else if (cv > maxv) {
    cv = maxv;
    t.v_clamped = true;
  }
  const T fx0 = std::floor(cu);
  const T fy0 = std::floor(cv);
  t.x0 = static_cast<std::size_t>(fx0);
  t.y0 = static_cast<std::size_t>(fy0);
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.fx = cu - fx0;
  t.fy = cv - fy0;
  return t;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& feat, const Tensor<T>& coords) {
  if (feat.rank() != 3) {
    throw ShapeError("bilinear_sample: grid must be H x W x C, got " +
                     shape_str(feat.shape()));
  }
  if (coords.rank() != 2 || coords.shape()[1] != 2) {
    throw ShapeError("bilinear_sample: coords must be N x 2, got " +
                     shape_str(coords.shape()));
  }
  const std::size_t h = feat.shape()[0];
  const std::size_t w = feat.shape()[1];
  const std::size_t c = feat.shape()[2];
  const std::size_t n = coords.shape()[0];
  const auto fv = feat.values();
  const auto cv = coords.values();
  std::vector<T> out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = make_taps(cv[2 * i], cv[2 * i + 1], h, w);
    const T w00 = (T(1) - t.fx) * (T(1) - t.fy);
    const T w10 = t.fx * (T(1) - t.fy);
    const T w01 = (T(1) - t.fx) * t.fy;
    const T w11 = t.fx * t.fy;
    const T* p00 = fv.data() + (t.y0 * w + t.x0) * c;
    const T* p10 = fv.data() + (t.y0 * w + t.x1) * c;
    const T* p01 = fv.data() + (t.y1 * w + t.x0) * c;
    const T* p11 = fv.data() + (t.y1 * w + t.x1) * c;
    T* dst = out.data() + i * c;
    for (std::size_t ch = 0; ch < c; ++ch) {
      dst[ch] = w00 * p00[ch] + w10 * p10[ch] + w01 * p01[ch] + w11 * p11[ch];
    }
  }
  const bool rec = want_record<T>({&feat, &coords});
  Tensor<T> result = make_output(Shape{n, c}, std::move(out), rec);
  if (rec) {
    Tape<T>::current()->record([fd = feat.data(), cd = coords.data(),
                                od = result.data(), h, w, c, n]() {
      if (od->grad.empty()) return;
      const bool wf = fd->requires_grad;
      const bool wc = cd->requires_grad;
      if (wf) fd->ensure_grad();
      if (wc) cd->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const auto t = make_taps(cd->values[2 * i], cd->values[2 * i + 1], h,
                                 w);
        const T w00 = (T(1) - t.fx) * (T(1) - t.fy);
        const T w10 = t.fx * (T(1) - t.fy);
        const T w01 = (T(1) - t.fx) * t.fy;
        const T w11 = t.fx * t.fy;
        const std::size_t o00 = (t.y0 * w + t.x0) * c;
        const std::size_t o10 = (t.y0 * w + t.x1) * c;
        const std::size_t o01 = (t.y1 * w + t.x0) * c;
        const std::size_t o11 = (t.y1 * w + t.x1) * c;
        T du = T(0), dv = T(0);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T g = od->grad[i * c + ch];
          if (g == T(0)) continue;
          if (wf) {
            fd->grad[o00 + ch] += g * w00;
            fd->grad[o10 + ch] += g * w10;
            fd->grad[o01 + ch] += g * w01;
            fd->grad[o11 + ch] += g * w11;
          }
          if (wc) {
            const T v00 = fd->values[o00 + ch];
            const T v10 = fd->values[o10 + ch];
            const T v01 = fd->values[o01 + ch];
            const T v11 = fd->values[o11 + ch];
            du += g * ((T(1) - t.fy) * (v10 - v00) + t.fy * (v11 - v01));
            dv += g * ((T(1) - t.fx) * (v01 - v00) + t.fx * (v11 - v10));
          }
        }
        if (wc) {
          if (!t.u_clamped) cd->grad[2 * i] += du;
          if (!t.v_clamped) cd->grad[2 * i + 1] += dv;
        }
      }
    });
  }
  return result;
}

namespace {

// Unclamped splat taps: contributions landing outside the grid are dropped,
// so out-of-view points deposit nothing.
template <typename T, typename F>
void for_each_splat_tap(T u, T v, std::size_t height, std::size_t width,
                        F&& f) {
  const T fx0 = std::floor(u);
  const T fy0 = std::floor(v);
  const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(fx0);
  const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(fy0);
  const T fx = u - fx0;
  const T fy = v - fy0;
  const std::ptrdiff_t xs[2] = {x0, x0 + 1};
  const std::ptrdiff_t ys[2] = {y0, y0 + 1};
  const T wx[2] = {T(1) - fx, fx};
  const T wy[2] = {T(1) - fy, fy};
  for (int a = 0; a < 2; ++a) {
    if (ys[a] < 0 || ys[a] >= static_cast<std::ptrdiff_t>(height)) continue;
    for (int b = 0; b < 2; ++b) {
      if (xs[b] < 0 || xs[b] >= static_cast<std::ptrdiff_t>(width)) continue;
      const T w = wy[a] * wx[b];
      if (w == T(0)) continue;
      f(static_cast<std::size_t>(ys[a]) * width +
            static_cast<std::size_t>(xs[b]),
        w);
    }
  }
}

}  // namespace

template <typename T>
std::vector<T> splat_weight_map(const Tensor<T>& coords, std::size_t height,
                                std::size_t width) {
  if (coords.rank() != 2 || coords.shape()[1] != 2) {
    throw ShapeError("splat: coords must be N x 2");
  }
  const std::size_t n = coords.shape()[0];
  const auto cv = coords.values();
  std::vector<T> wsum(height * width, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    for_each_splat_tap(cv[2 * i], cv[2 * i + 1], height, width,
                       [&](std::size_t px, T w) { wsum[px] += w; });
  }
  return wsum;
}

template <typename T>
Tensor<T> splat_bilinear(const Tensor<T>& features, const Tensor<T>& coords,
                         std::size_t height, std::size_t width,
                         bool normalize) {
  if (features.rank() != 2) {
    throw ShapeError("splat: features must be N x C");
  }
  if (coords.rank() != 2 || coords.shape()[1] != 2 ||
      coords.shape()[0] != features.shape()[0]) {
    throw ShapeError("splat: coords must be N x 2 matching features");
  }
  const std::size_t n = features.shape()[0];
  const std::size_t c = features.shape()[1];
  const auto fv = features.values();
  const auto cv = coords.values();
  std::vector<T> accum(height * width * c, T(0));
  std::vector<T> wsum(height * width, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    for_each_splat_tap(cv[2 * i], cv[2 * i + 1], height, width,
                       [&](std::size_t px, T w) {
                         wsum[px] += w;
                         T* dst = accum.data() + px * c;
                         const T* src = fv.data() + i * c;
                         for (std::size_t ch = 0; ch < c; ++ch) {
                           dst[ch] += w * src[ch];
                         }
                       });
  }
  if (normalize) {
    for (std::size_t p = 0; p < height * width; ++p) {
      if (wsum[p] > T(0)) {
        T* dst = accum.data() + p * c;
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] /= wsum[p];
      }
    }
  }
  const bool rec = want_record<T>({&features});
  Tensor<T> result =
      make_output(Shape{height, width, c}, std::move(accum), rec);
  if (rec) {
    Tape<T>::current()->record([fd = features.data(), cd = coords.data(),
                                od = result.data(), wsum = std::move(wsum),
                                height, width, c, n, normalize]() {
      if (od->grad.empty()) return;
      fd->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        T* gdst = fd->grad.data() + i * c;
        for_each_splat_tap(cd->values[2 * i], cd->values[2 * i + 1], height,
                           width, [&](std::size_t px, T w) {
                             const T scale = normalize ? w / wsum[px] : w;
                             const T* gsrc = od->grad.data() + px * c;
                             for (std::size_t ch = 0; ch < c; ++ch) {
                               gdst[ch] += scale * gsrc[ch];
                             }
                           });
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> coords_grid(std::size_t height, std::size_t width) {
  std::vector<T> v(height * width * 2);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      v[(y * width + x) * 2] = static_cast<T>(x);
      v[(y * width + x) * 2 + 1] = static_cast<T>(y);
    }
  }
  return Tensor<T>::from(Shape{height * width, 2}, std::move(v));
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) {
    throw DataError(std::string("non-finite values in ") + what);
  }
}

#define RPEFLOW_INSTANTIATE_OPS(T)                                            \
  template Tensor<T> elementwise<T>(EwOp, const Tensor<T>&,                   \
                                    std::optional<Tensor<T>>);                \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> div<T>(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> exp<T>(const Tensor<T>&);                                \
  template Tensor<T> log<T>(const Tensor<T>&);                                \
  template Tensor<T> neg<T>(const Tensor<T>&);                                \
  template Tensor<T> relu<T>(const Tensor<T>&);                               \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&);                         \
  template Tensor<T> square<T>(const Tensor<T>&);                             \
  template Tensor<T> sqrt<T>(const Tensor<T>&);                               \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);               \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&,            \
                               std::size_t, std::size_t, bool);               \
  template Tensor<T> layernorm<T>(const Tensor<T>&, std::size_t);             \
  template Tensor<T> sum<T>(const Tensor<T>&);                                \
  template Tensor<T> sum<T>(const Tensor<T>&, std::size_t, bool);             \
  template Tensor<T> mean<T>(const Tensor<T>&);                               \
  template Tensor<T> mean<T>(const Tensor<T>&, std::size_t, bool);            \
  template Tensor<T> max_axis<T>(const Tensor<T>&, std::size_t);              \
  template Tensor<T> concat<T>(std::span<const Tensor<T>>, std::size_t);      \
  template Tensor<T> concat<T>(std::initializer_list<Tensor<T>>,              \
                               std::size_t);                                  \
  template Tensor<T> slice<T>(const Tensor<T>&, std::size_t, std::size_t,     \
                              std::size_t);                                   \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                     \
  template Tensor<T> permute<T>(const Tensor<T>&,                             \
                                const std::vector<std::size_t>&);             \
  template Tensor<T> transpose<T>(const Tensor<T>&);                          \
  template Tensor<T> clamp<T>(const Tensor<T>&, T, T);                        \
  template Tensor<T> gather_rows<T>(const Tensor<T>&,                         \
                                    const std::vector<std::size_t>&);         \
  template Tensor<T> bilinear_sample<T>(const Tensor<T>&, const Tensor<T>&);  \
  template std::vector<T> splat_weight_map<T>(const Tensor<T>&, std::size_t,  \
                                              std::size_t);                   \
  template Tensor<T> splat_bilinear<T>(const Tensor<T>&, const Tensor<T>&,    \
                                       std::size_t, std::size_t, bool);       \
  template Tensor<T> coords_grid<T>(std::size_t, std::size_t);                \
  template void check_finite<T>(const Tensor<T>&, const char*);

RPEFLOW_INSTANTIATE_OPS(float)
RPEFLOW_INSTANTIATE_OPS(double)

#undef RPEFLOW_INSTANTIATE_OPS

}  // namespace rpeflow

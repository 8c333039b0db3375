#include "vslr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "vslr/error.hpp"
#include "vslr/op_counter.hpp"

namespace vslr {

namespace {

using AccMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using ConstRowMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
AccMatrix load(const T* p, std::size_t rows, std::size_t cols) {
  return ConstRowMap<T>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols))
      .template cast<double>();
}

template <typename T>
void store_add(const AccMatrix& m, T* out) {
  const auto n = static_cast<std::size_t>(m.size());
  const double* src = m.data();
  for (std::size_t i = 0; i < n; ++i) out[i] += static_cast<T>(src[i]);
}

// c[m, n] += op(a) * op(b); products accumulate in double for both precisions.
template <typename T>
void gemm_acc(const T* a, bool trans_a, const T* b, bool trans_b, T* c, std::size_t m,
              std::size_t k, std::size_t n) {
  AccMatrix am = trans_a ? load(a, k, m) : load(a, m, k);
  AccMatrix bm = trans_b ? load(b, n, k) : load(b, k, n);
  AccMatrix r;
  if (trans_a && trans_b) {
    r.noalias() = am.transpose() * bm.transpose();
  } else if (trans_a) {
    r.noalias() = am.transpose() * bm;
  } else if (trans_b) {
    r.noalias() = am * bm.transpose();
  } else {
    r.noalias() = am * bm;
  }
  store_add(r, c);
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    fail(errc::kShape, std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Number of times `b` tiles over `a` when b's shape is a suffix of a's.
std::size_t suffix_repeats(const Shape& a, const Shape& b, const char* op) {
  if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    fail(errc::kShape, std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  return numel(a) / numel(b);
}

}  // namespace

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    fail(errc::kShape, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2]) {
    fail(errc::kShape, "matmul: shape mismatch " + shape_str(sa) + " x " + shape_str(sb));
  }
  const std::size_t m = sa[sa.size() - 2], k = sa.back(), n = sb.back();
  const Shape ba(sa.begin(), sa.end() - 2), bb(sb.begin(), sb.end() - 2);
  const std::size_t rank = std::max(ba.size(), bb.size());
  Shape batch(rank);
  // Offsets (in matrices) of each output batch entry into a and b.
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i + ba.size() >= rank ? ba[i + ba.size() - rank] : 1;
    const std::size_t eb = i + bb.size() >= rank ? bb[i + bb.size() - rank] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      fail(errc::kShape, "matmul: batch extents not broadcastable " + shape_str(sa) + " x " + shape_str(sb));
    }
    batch[i] = std::max(ea, eb);
  }
  const std::size_t nbatch = numel(batch);
  std::vector<std::size_t> off_a(nbatch), off_b(nbatch);
  {
    const auto out_strides = strides_of(batch);
    const auto as = strides_of(ba), bs = strides_of(bb);
    for (std::size_t idx = 0; idx < nbatch; ++idx) {
      std::size_t oa = 0, ob = 0, rem = idx;
      for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t coord = rem / out_strides[i];
        rem %= out_strides[i];
        if (i + ba.size() >= rank) {
          const std::size_t j = i + ba.size() - rank;
          if (ba[j] != 1) oa += coord * as[j];
        }
        if (i + bb.size() >= rank) {
          const std::size_t j = i + bb.size() - rank;
          if (bb[j] != 1) ob += coord * bs[j];
        }
      }
      off_a[idx] = oa * m * k;
      off_b[idx] = ob * k * n;
    }
  }
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(nbatch * m * n, T(0));
  for (std::size_t i = 0; i < nbatch; ++i) {
    gemm_acc(a.data().data() + off_a[i], false, b.data().data() + off_b[i], false,
             out.data() + i * m * n, m, k, n);
  }
  count_macs(static_cast<std::uint64_t>(nbatch * m * n * k));
  return make_result<T>("matmul", out_shape, std::move(out), {a, b},
                        [a, b, off_a, off_b, m, k, n](std::span<const T> g) mutable {
                          const std::size_t nb = off_a.size();
                          if (a.requires_grad()) {
                            auto& ga = a.grad_buffer();
                            for (std::size_t i = 0; i < nb; ++i) {
                              gemm_acc(g.data() + i * m * n, false, b.data().data() + off_b[i], true,
                                       ga.data() + off_a[i], m, n, k);
                            }
                          }
                          if (b.requires_grad()) {
                            auto& gb = b.grad_buffer();
                            for (std::size_t i = 0; i < nb; ++i) {
                              gemm_acc(a.data().data() + off_a[i], true, g.data() + i * m * n, false,
                                       gb.data() + off_b[i], k, m, n);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t reps = suffix_repeats(a.shape(), b.shape(), "add");
  const std::size_t nb = b.numel();
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t i = 0; i < nb; ++i) out[r * nb + i] += b[i];
  return make_result<T>("add", a.shape(), std::move(out), {a, b},
                        [a, b, reps, nb](std::span<const T> g) mutable {
                          accumulate_grad(a, g);
                          if (b.requires_grad()) {
                            auto& gb = b.grad_buffer();
                            for (std::size_t r = 0; r < reps; ++r)
                              for (std::size_t i = 0; i < nb; ++i) gb[i] += g[r * nb + i];
                          }
                        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t reps = suffix_repeats(a.shape(), b.shape(), "sub");
  const std::size_t nb = b.numel();
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t i = 0; i < nb; ++i) out[r * nb + i] -= b[i];
  return make_result<T>("sub", a.shape(), std::move(out), {a, b},
                        [a, b, reps, nb](std::span<const T> g) mutable {
                          accumulate_grad(a, g);
                          if (b.requires_grad()) {
                            auto& gb = b.grad_buffer();
                            for (std::size_t r = 0; r < reps; ++r)
                              for (std::size_t i = 0; i < nb; ++i) gb[i] -= g[r * nb + i];
                          }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result<T>("mul", a.shape(), std::move(out), {a, b},
                        [a, b](std::span<const T> g) mutable {
                          if (a.requires_grad()) {
                            auto& ga = a.grad_buffer();
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * b[i];
                          }
                          if (b.requires_grad()) {
                            auto& gb = b.grad_buffer();
                            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a[i];
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return make_result<T>("scale", x.shape(), std::move(out), {x},
                        [x, factor](std::span<const T> g) mutable {
                          if (!x.requires_grad()) return;
                          auto& gx = x.grad_buffer();
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0;
  for (T v : x.data()) acc += v;
  return make_result<T>("sum", Shape{}, {static_cast<T>(acc)}, {x},
                        [x](std::span<const T> g) mutable {
                          if (!x.requires_grad()) return;
                          for (auto& v : x.grad_buffer()) v += g[0];
                        });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const T inv = T(1) / static_cast<T>(x.numel());
  double acc = 0;
  for (T v : x.data()) acc += v;
  return make_result<T>("mean", Shape{}, {static_cast<T>(acc / static_cast<double>(x.numel()))}, {x},
                        [x, inv](std::span<const T> g) mutable {
                          if (!x.requires_grad()) return;
                          for (auto& v : x.grad_buffer()) v += g[0] * inv;
                        });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  std::vector<T> out(sp.outer * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      double acc = 0;
      for (std::size_t l = 0; l < sp.len; ++l) acc += x[(o * sp.len + l) * sp.inner + i];
      out[o * sp.inner + i] = static_cast<T>(acc / static_cast<double>(sp.len));
    }
  return make_result<T>("mean_axis", out_shape, std::move(out), {x},
                        [x, sp](std::span<const T> g) mutable {
                          if (!x.requires_grad()) return;
                          auto& gx = x.grad_buffer();
                          const T inv = T(1) / static_cast<T>(sp.len);
                          for (std::size_t o = 0; o < sp.outer; ++o)
                            for (std::size_t l = 0; l < sp.len; ++l)
                              for (std::size_t i = 0; i < sp.inner; ++i)
                                gx[(o * sp.len + l) * sp.inner + i] += g[o * sp.inner + i] * inv;
                        });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = split_at(x.shape(), ax);
  std::vector<T> y(x.numel());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.len * sp.inner + i;
      double mx = x[base];
      for (std::size_t l = 1; l < sp.len; ++l) mx = std::max(mx, double(x[base + l * sp.inner]));
      double total = 0;
      for (std::size_t l = 0; l < sp.len; ++l) total += std::exp(double(x[base + l * sp.inner]) - mx);
      for (std::size_t l = 0; l < sp.len; ++l)
        y[base + l * sp.inner] = static_cast<T>(std::exp(double(x[base + l * sp.inner]) - mx) / total);
    }
  std::vector<T> saved = y;
  return make_result<T>("softmax", x.shape(), std::move(y), {x},
                        [x, sp, saved = std::move(saved)](std::span<const T> g) mutable {
                          if (!x.requires_grad()) return;
                          auto& gx = x.grad_buffer();
                          for (std::size_t o = 0; o < sp.outer; ++o)
                            for (std::size_t i = 0; i < sp.inner; ++i) {
                              const std::size_t base = o * sp.len * sp.inner + i;
                              double dot = 0;
                              for (std::size_t l = 0; l < sp.len; ++l) {
                                const std::size_t p = base + l * sp.inner;
                                dot += double(g[p]) * saved[p];
                              }
                              for (std::size_t l = 0; l < sp.len; ++l) {
                                const std::size_t p = base + l * sp.inner;
                                gx[p] += static_cast<T>(saved[p] * (double(g[p]) - dot));
                              }
                            }
                        });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (x.rank() == 0) fail(errc::kShape, "layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    fail(errc::kShape, "layer_norm: feature extent " + std::to_string(d) + " vs gain " +
                           shape_str(gain.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<T> y(x.numel());
  std::vector<double> xhat(x.numel()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.data().data() + r * d;
    double mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= double(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= double(d);
    inv_std[r] = 1.0 / std::sqrt(var + double(eps));
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * inv_std[r];
      xhat[r * d + j] = h;
      y[r * d + j] = static_cast<T>(h * gain[j] + bias[j]);
    }
  }
  return make_result<T>(
      "layer_norm", x.shape(), std::move(y), {x, gain, bias},
      [x, gain, bias, d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          std::span<const T> g) mutable {
        if (gain.requires_grad() || bias.requires_grad()) {
          std::vector<double> gg(d, 0.0), gb(d, 0.0);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) {
              gg[j] += double(g[r * d + j]) * xhat[r * d + j];
              gb[j] += g[r * d + j];
            }
          if (gain.requires_grad()) {
            auto& buf = gain.grad_buffer();
            for (std::size_t j = 0; j < d; ++j) buf[j] += static_cast<T>(gg[j]);
          }
          if (bias.requires_grad()) {
            auto& buf = bias.grad_buffer();
            for (std::size_t j = 0; j < d; ++j) buf[j] += static_cast<T>(gb[j]);
          }
        }
        if (!x.requires_grad()) return;
        auto& gx = x.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          double m1 = 0, m2 = 0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = double(g[r * d + j]) * gain[j];
            m1 += dh;
            m2 += dh * xhat[r * d + j];
          }
          m1 /= double(d);
          m2 /= double(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = double(g[r * d + j]) * gain[j];
            gx[r * d + j] += static_cast<T>(inv_std[r] * (dh - m1 - xhat[r * d + j] * m2));
          }
        }
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<T> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = x[i];
    y[i] = static_cast<T>(0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))));
  }
  return make_result<T>("gelu", x.shape(), std::move(y), {x}, [x](std::span<const T> g) mutable {
    if (!x.requires_grad()) return;
    auto& gx = x.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = x[i];
      const double t = std::tanh(kC * (v + kA * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      gx[i] += static_cast<T>(g[i] * d);
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() == 0 || w.rank() != 2 || x.shape().back() != w.shape()[0] ||
      b.shape() != Shape{w.shape()[1]}) {
    fail(errc::kShape, "linear: shape mismatch x " + shape_str(x.shape()) + ", w " +
                           shape_str(w.shape()) + ", b " + shape_str(b.shape()));
  }
  const std::size_t in = w.shape()[0], out_dim = w.shape()[1];
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<T> out(rows * out_dim);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(b.data().begin(), b.data().end(), out.begin() + static_cast<std::ptrdiff_t>(r * out_dim));
  gemm_acc(x.data().data(), false, w.data().data(), false, out.data(), rows, in, out_dim);
  count_macs(static_cast<std::uint64_t>(rows * in * out_dim));
  return make_result<T>("linear", out_shape, std::move(out), {x, w, b},
                        [x, w, b, rows, in, out_dim](std::span<const T> g) mutable {
                          if (x.requires_grad())
                            gemm_acc(g.data(), false, w.data().data(), true, x.grad_buffer().data(),
                                     rows, out_dim, in);
                          if (w.requires_grad())
                            gemm_acc(x.data().data(), true, g.data(), false, w.grad_buffer().data(),
                                     in, rows, out_dim);
                          if (b.requires_grad()) {
                            auto& gb = b.grad_buffer();
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[r * out_dim + j];
                          }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  if (numel(shape) != x.numel()) {
    fail(errc::kShape, "reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>("reshape", shape, std::move(out), {x},
                        [x](std::span<const T> g) mutable { accumulate_grad(x, g); });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order) {
  const std::size_t r = x.rank();
  std::vector<bool> used(r, false);
  bool ok = order.size() == r;
  for (std::size_t i = 0; ok && i < r; ++i) {
    ok = order[i] < r && !used[order[i]];
    if (ok) used[order[i]] = true;
  }
  if (!ok) fail(errc::kShape, "permute: invalid axis order for " + shape_str(x.shape()));
  const auto in_strides = strides_of(x.shape());
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = x.shape()[order[i]];
    src_stride[i] = in_strides[order[i]];
  }
  // map[i] = flat source index for flat output index i.
  std::vector<std::size_t> map(x.numel());
  std::vector<std::size_t> coord(r, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    map[i] = src;
    for (std::size_t a = r; a-- > 0;) {
      ++coord[a];
      src += src_stride[a];
      if (coord[a] < out_shape[a]) break;
      src -= coord[a] * src_stride[a];
      coord[a] = 0;
    }
  }
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[map[i]];
  return make_result<T>("permute", out_shape, std::move(out), {x},
                        [x, map = std::move(map)](std::span<const T> g) mutable {
                          if (!x.requires_grad()) return;
                          auto& gx = x.grad_buffer();
                          for (std::size_t i = 0; i < map.size(); ++i) gx[map[i]] += g[i];
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis_a, int axis_b) {
  std::vector<std::size_t> order(x.rank());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::swap(order[normalize_axis(axis_a, x.rank())], order[normalize_axis(axis_b, x.rank())]);
  return permute(x, order);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) fail(errc::kShape, "concat: no inputs");
  const std::size_t ax = normalize_axis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) fail(errc::kShape, "concat: rank mismatch " + shape_str(s));
    const std::size_t e = s[ax];
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != ax && s[i] != out_shape[i])
        fail(errc::kShape, "concat: shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                               shape_str(p.shape()));
    out_shape[ax] += e;
  }
  const AxisSplit osp = split_at(out_shape, ax);
  std::vector<T> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.shape()[ax];
    for (std::size_t o = 0; o < osp.outer; ++o)
      std::copy_n(p.data().data() + o * len * osp.inner, len * osp.inner,
                  out.data() + (o * osp.len + offset) * osp.inner);
    offsets.push_back(offset);
    offset += len;
  }
  return make_result<T>("concat", out_shape, std::move(out), parts,
                        [parts, offsets, osp, ax](std::span<const T> g) mutable {
                          for (std::size_t k = 0; k < parts.size(); ++k) {
                            auto& p = parts[k];
                            if (!p.requires_grad()) continue;
                            auto& gp = p.grad_buffer();
                            const std::size_t len = p.shape()[ax];
                            for (std::size_t o = 0; o < osp.outer; ++o)
                              for (std::size_t i = 0; i < len * osp.inner; ++i)
                                gp[o * len * osp.inner + i] +=
                                    g[(o * osp.len + offsets[k]) * osp.inner + i];
                          }
                        });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = split_at(x.shape(), ax);
  if (length == 0 || start + length > sp.len) {
    fail(errc::kShape, "slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                           ") outside axis of extent " + std::to_string(sp.len));
  }
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  std::vector<T> out(sp.outer * length * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(x.data().data() + (o * sp.len + start) * sp.inner, length * sp.inner,
                out.data() + o * length * sp.inner);
  return make_result<T>("slice", out_shape, std::move(out), {x},
                        [x, sp, start, length](std::span<const T> g) mutable {
                          if (!x.requires_grad()) return;
                          auto& gx = x.grad_buffer();
                          for (std::size_t o = 0; o < sp.outer; ++o)
                            for (std::size_t i = 0; i < length * sp.inner; ++i)
                              gx[(o * sp.len + start) * sp.inner + i] += g[o * length * sp.inner + i];
                        });
}

template <typename T>
Tensor<T> index_select(const Tensor<T>& x, int axis, const std::vector<std::size_t>& indices) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = split_at(x.shape(), ax);
  if (indices.empty()) fail(errc::kShape, "index_select: empty index list");
  for (auto i : indices)
    if (i >= sp.len)
      fail(errc::kShape, "index_select: index " + std::to_string(i) + " out of range " +
                             std::to_string(sp.len));
  Shape out_shape = x.shape();
  out_shape[ax] = indices.size();
  const std::size_t k = indices.size();
  std::vector<T> out(sp.outer * k * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t j = 0; j < k; ++j)
      std::copy_n(x.data().data() + (o * sp.len + indices[j]) * sp.inner, sp.inner,
                  out.data() + (o * k + j) * sp.inner);
  return make_result<T>("index_select", out_shape, std::move(out), {x},
                        [x, sp, indices](std::span<const T> g) mutable {
                          if (!x.requires_grad()) return;
                          auto& gx = x.grad_buffer();
                          const std::size_t k = indices.size();
                          for (std::size_t o = 0; o < sp.outer; ++o)
                            for (std::size_t j = 0; j < k; ++j)
                              for (std::size_t i = 0; i < sp.inner; ++i)
                                gx[(o * sp.len + indices[j]) * sp.inner + i] +=
                                    g[(o * k + j) * sp.inner + i];
                        });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<std::size_t>& ids) {
  if (table.rank() != 2) fail(errc::kShape, "embedding_lookup: table must be 2-D, got " + shape_str(table.shape()));
  return index_select(table, 0, ids);
}

template <typename T>
Tensor<T> gather_tokens(const Tensor<T>& x, const std::vector<std::vector<std::size_t>>& indices) {
  if (x.rank() != 3 || indices.size() != x.shape()[0] || indices.empty()) {
    fail(errc::kShape, "gather_tokens: need [B,N,D] with B index lists, got " + shape_str(x.shape()));
  }
  const std::size_t bsz = x.shape()[0], n = x.shape()[1], d = x.shape()[2];
  const std::size_t k = indices[0].size();
  for (const auto& row : indices) {
    if (row.size() != k || k == 0) fail(errc::kShape, "gather_tokens: ragged index lists");
    for (auto i : row)
      if (i >= n) fail(errc::kShape, "gather_tokens: index " + std::to_string(i) + " out of range");
  }
  std::vector<T> out(bsz * k * d);
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t j = 0; j < k; ++j)
      std::copy_n(x.data().data() + (b * n + indices[b][j]) * d, d, out.data() + (b * k + j) * d);
  return make_result<T>("gather_tokens", Shape{bsz, k, d}, std::move(out), {x},
                        [x, indices, n, d](std::span<const T> g) mutable {
                          if (!x.requires_grad()) return;
                          auto& gx = x.grad_buffer();
                          const std::size_t k = indices[0].size();
                          for (std::size_t b = 0; b < indices.size(); ++b)
                            for (std::size_t j = 0; j < k; ++j)
                              for (std::size_t i = 0; i < d; ++i)
                                gx[(b * n + indices[b][j]) * d + i] += g[(b * k + j) * d + i];
                        });
}

template <typename T>
Tensor<T> repeat(const Tensor<T>& x, int axis, std::size_t n) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = split_at(x.shape(), ax);
  if (sp.len != 1 || n == 0) {
    fail(errc::kShape, "repeat: axis " + std::to_string(axis) + " of " + shape_str(x.shape()) +
                           " must have extent 1");
  }
  Shape out_shape = x.shape();
  out_shape[ax] = n;
  std::vector<T> out(sp.outer * n * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(x.data().data() + o * sp.inner, sp.inner, out.data() + (o * n + r) * sp.inner);
  return make_result<T>("repeat", out_shape, std::move(out), {x},
                        [x, sp, n](std::span<const T> g) mutable {
                          if (!x.requires_grad()) return;
                          auto& gx = x.grad_buffer();
                          for (std::size_t o = 0; o < sp.outer; ++o)
                            for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t i = 0; i < sp.inner; ++i)
                                gx[o * sp.inner + i] += g[(o * n + r) * sp.inner + i];
                        });
}

#define VSLR_INSTANTIATE(T)                                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                 \
  template Tensor<T> mean(const Tensor<T>&, int);                                            \
  template Tensor<T> softmax(const Tensor<T>&, int);                                         \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);    \
  template Tensor<T> gelu(const Tensor<T>&);                                                 \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);             \
  template Tensor<T> transpose(const Tensor<T>&, int, int);                                  \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                             \
  template Tensor<T> slice(const Tensor<T>&, int, std::size_t, std::size_t);                 \
  template Tensor<T> index_select(const Tensor<T>&, int, const std::vector<std::size_t>&);   \
  template Tensor<T> embedding_lookup(const Tensor<T>&, const std::vector<std::size_t>&);    \
  template Tensor<T> gather_tokens(const Tensor<T>&,                                         \
                                   const std::vector<std::vector<std::size_t>>&);            \
  template Tensor<T> repeat(const Tensor<T>&, int, std::size_t);

VSLR_INSTANTIATE(float)
VSLR_INSTANTIATE(double)

}  // namespace vslr

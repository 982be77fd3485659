#include "erpgan/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include <Eigen/Core>

#include "erpgan/error.hpp"

namespace erpgan::nn::ops {

namespace {

using detail::TensorImpl;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMajorMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected a rank-" + std::to_string(rank) +
                     " input, got " + to_string(x.shape()));
  }
}

// Gradient buffer of an input, or nullptr when it does not take one.
double* grad_of(const Tensor& t) {
  auto& impl = const_cast<Tensor&>(t).impl();
  if (!impl.requires_grad) return nullptr;
  return impl.ensure_grad().data();
}

struct Dims4 {
  std::size_t n, r, t, f;
};

Dims4 dims4(const Tensor& x) { return {x.extent(0), x.extent(1), x.extent(2), x.extent(3)}; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [a, b](TensorImpl& o) {
    for (const Tensor* in : {&a, &b}) {
      if (double* g = grad_of(*in)) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [a, b](TensorImpl& o) {
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
    if (double* g = grad_of(b)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [a, b](TensorImpl& o) {
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * b[i];
    }
    if (double* g = grad_of(b)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * a[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return make_result(a.shape(), std::move(out), {a}, [a, factor](TensorImpl& o) {
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * factor;
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result(Shape{1}, {total}, {a}, [a](TensorImpl& o) {
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < a.size(); ++i) g[i] += o.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("dense", x, 2);
  require_rank("dense", w, 2);
  const std::size_t n = x.extent(0), in = x.extent(1), units = w.extent(1);
  if (w.extent(0) != in || b.size() != units) {
    throw ShapeError("dense: input " + to_string(x.shape()) + " does not fit weight " +
                     to_string(w.shape()) + " and bias " + to_string(b.shape()));
  }
  std::vector<double> out(n * units);
  for (std::size_t s = 0; s < n; ++s) {
    double* row = out.data() + s * units;
    std::copy(b.data().begin(), b.data().end(), row);
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = x[s * in + i];
      const double* wr = w.data().data() + i * units;
      for (std::size_t u = 0; u < units; ++u) row[u] += xv * wr[u];
    }
  }
  return make_result(Shape{n, units}, std::move(out), {x, w, b}, [x, w, b, n, in, units](TensorImpl& o) {
    const double* go = o.grad.data();
    if (double* gx = grad_of(x)) {
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t i = 0; i < in; ++i) {
          const double* wr = w.data().data() + i * units;
          double acc = 0.0;
          for (std::size_t u = 0; u < units; ++u) acc += go[s * units + u] * wr[u];
          gx[s * in + i] += acc;
        }
      }
    }
    if (double* gw = grad_of(w)) {
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t i = 0; i < in; ++i) {
          const double xv = x[s * in + i];
          double* gr = gw + i * units;
          for (std::size_t u = 0; u < units; ++u) gr[u] += xv * go[s * units + u];
        }
      }
    }
    if (double* gb = grad_of(b)) {
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t u = 0; u < units; ++u) gb[u] += go[s * units + u];
      }
    }
  });
}

namespace {

// "Same" convolution lowered to GEMMs: output positions are processed in
// blocks whose im2col rows (kr * kt * fin taps, zeros outside the input) stay
// cache resident.
struct ConvGeometry {
  std::size_t n, rows, time, fin, kr, kt, fout;
  std::ptrdiff_t pad_r, pad_t;

  std::size_t positions() const { return n * rows * time; }
  std::size_t taps() const { return kr * kt * fin; }

  // Calls f(position, tap offset, input offset, length) for every contiguous
  // run of in-bounds taps.
  template <typename F>
  void for_each_run(std::size_t begin, std::size_t end, F&& f) const {
    const auto R = static_cast<std::ptrdiff_t>(rows), T = static_cast<std::ptrdiff_t>(time);
    for (std::size_t p = begin; p < end; ++p) {
      const auto t = static_cast<std::ptrdiff_t>(p % time);
      const auto r = static_cast<std::ptrdiff_t>((p / time) % rows);
      const std::size_t s = p / (time * rows);
      const std::ptrdiff_t t0 = t - pad_t;
      const std::ptrdiff_t c_lo = std::max<std::ptrdiff_t>(0, -t0);
      const std::ptrdiff_t c_hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(kt), T - t0);
      if (c_lo >= c_hi) continue;
      for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(kr); ++a) {
        const std::ptrdiff_t ir = r + a - pad_r;
        if (ir < 0 || ir >= R) continue;
        f(p - begin, (static_cast<std::size_t>(a) * kt + static_cast<std::size_t>(c_lo)) * fin,
          ((s * rows + static_cast<std::size_t>(ir)) * time + static_cast<std::size_t>(t0 + c_lo)) * fin,
          static_cast<std::size_t>(c_hi - c_lo) * fin);
      }
    }
  }

  void im2col(const double* x, std::size_t begin, std::size_t end, double* cols) const {
    const auto R = static_cast<std::ptrdiff_t>(rows), T = static_cast<std::ptrdiff_t>(time);
    const std::size_t span = kt * fin;
    for (std::size_t p = begin; p < end; ++p) {
      const auto t = static_cast<std::ptrdiff_t>(p % time);
      const auto r = static_cast<std::ptrdiff_t>((p / time) % rows);
      const std::size_t s = p / (time * rows);
      const std::ptrdiff_t t0 = t - pad_t;
      const auto c_lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -t0));
      const auto c_hi = static_cast<std::size_t>(
          std::max<std::ptrdiff_t>(0, std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(kt), T - t0)));
      double* row = cols + (p - begin) * taps();
      for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(kr); ++a, row += span) {
        const std::ptrdiff_t ir = r + a - pad_r;
        if (ir < 0 || ir >= R || c_lo >= c_hi) {
          std::fill(row, row + span, 0.0);
          continue;
        }
        std::fill(row, row + c_lo * fin, 0.0);
        const double* src =
            x + ((s * rows + static_cast<std::size_t>(ir)) * time + static_cast<std::size_t>(t0) + c_lo) * fin;
        std::copy(src, src + (c_hi - c_lo) * fin, row + c_lo * fin);
        std::fill(row + c_hi * fin, row + span, 0.0);
      }
    }
  }

  void col2im(const double* cols, std::size_t begin, std::size_t end, double* gx) const {
    const std::size_t k = taps();
    for_each_run(begin, end, [&](std::size_t row, std::size_t tap, std::size_t in, std::size_t len) {
      const double* src = cols + row * k + tap;
      for (std::size_t i = 0; i < len; ++i) gx[in + i] += src[i];
    });
  }

  std::size_t block() const { return std::max<std::size_t>(16, 32768 / std::max<std::size_t>(1, taps())); }
};

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", w, 4);
  const auto [n, rows, time, fin] = dims4(x);
  const std::size_t kr = w.extent(0), kt = w.extent(1), fout = w.extent(3);
  if (w.extent(2) != fin || b.size() != fout) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " does not fit kernel " +
                     to_string(w.shape()) + " and bias " + to_string(b.shape()));
  }
  const ConvGeometry geo{n,    rows, time, fin, kr, kt, fout, static_cast<std::ptrdiff_t>((kr - 1) / 2),
                         static_cast<std::ptrdiff_t>((kt - 1) / 2)};
  const std::size_t m = geo.positions(), k = geo.taps(), bs = geo.block();
  const auto K = static_cast<Eigen::Index>(k), F = static_cast<Eigen::Index>(fout);

  std::vector<double> out(m * fout);
  {
    std::vector<double> cols(bs * k);
    ConstMatrixMap W(w.data().data(), K, F);
    const Eigen::Map<const Eigen::RowVectorXd> bias(b.data().data(), F);
    for (std::size_t begin = 0; begin < m; begin += bs) {
      const std::size_t end = std::min(m, begin + bs);
      const auto rows_here = static_cast<Eigen::Index>(end - begin);
      geo.im2col(x.data().data(), begin, end, cols.data());
      MatrixMap O(out.data() + begin * fout, rows_here, F);
      O.noalias() = ConstMatrixMap(cols.data(), rows_here, K) * W;
      O.rowwise() += bias;
    }
  }

  return make_result(Shape{n, rows, time, fout}, std::move(out), {x, w, b}, [=](TensorImpl& o) {
    double* gb = grad_of(b);
    double* gw = grad_of(w);
    double* gx = grad_of(x);
    std::vector<double> cols(bs * k);
    ConstMatrixMap W(w.data().data(), K, F);
    for (std::size_t begin = 0; begin < m; begin += bs) {
      const std::size_t end = std::min(m, begin + bs);
      const auto rows_here = static_cast<Eigen::Index>(end - begin);
      ConstMatrixMap G(o.grad.data() + begin * fout, rows_here, F);
      if (gb) Eigen::Map<Eigen::RowVectorXd>(gb, F) += G.colwise().sum();
      if (gw) {
        geo.im2col(x.data().data(), begin, end, cols.data());
        MatrixMap(gw, K, F).noalias() += ConstMatrixMap(cols.data(), rows_here, K).transpose() * G;
      }
      if (gx) {
        MatrixMap(cols.data(), rows_here, K).noalias() = G * W.transpose();
        geo.col2im(cols.data(), begin, end, gx);
      }
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  if (branch_tracking::enabled()) {
    for (std::size_t i = 0; i < out.size(); ++i) branch_tracking::mix(x[i] > 0.0);
  }
  return make_result(x.shape(), std::move(out), {x}, [x](TensorImpl& o) {
    if (double* g = grad_of(x)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        if (x[i] > 0.0) g[i] += o.grad[i];
      }
    }
  });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  if (branch_tracking::enabled()) {
    for (std::size_t i = 0; i < out.size(); ++i) branch_tracking::mix(x[i] > 0.0);
  }
  return make_result(x.shape(), std::move(out), {x}, [x, slope](TensorImpl& o) {
    if (double* g = grad_of(x)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += x[i] > 0.0 ? o.grad[i] : slope * o.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    // Split by sign so exp never overflows.
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  std::vector<double> y = out;
  return make_result(x.shape(), std::move(out), {x}, [x, y = std::move(y)](TensorImpl& o) {
    if (double* g = grad_of(x)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                     to_string(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.extent(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.extent(i);
  const std::size_t len = x.extent(axis);

  std::vector<double> out(x.size());
  for (std::size_t a = 0; a < outer; ++a) {
    for (std::size_t c = 0; c < inner; ++c) {
      const std::size_t base = a * len * inner + c;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) peak = std::max(peak, x[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        out[base + k * inner] = std::exp(x[base + k * inner] - peak);
        total += out[base + k * inner];
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  std::vector<double> y = out;
  return make_result(x.shape(), std::move(out), {x},
                     [x, y = std::move(y), outer, inner, len](TensorImpl& o) {
                       double* g = grad_of(x);
                       if (!g) return;
                       for (std::size_t a = 0; a < outer; ++a) {
                         for (std::size_t c = 0; c < inner; ++c) {
                           const std::size_t base = a * len * inner + c;
                           double dot = 0.0;
                           for (std::size_t k = 0; k < len; ++k) {
                             dot += o.grad[base + k * inner] * y[base + k * inner];
                           }
                           for (std::size_t k = 0; k < len; ++k) {
                             const std::size_t i = base + k * inner;
                             g[i] += y[i] * (o.grad[i] - dot);
                           }
                         }
                       }
                     });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw DomainError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return make_result(x.shape(), std::move(out), {x}, [x, mask = std::move(mask)](TensorImpl& o) {
    if (double* g = grad_of(x)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * mask[i];
    }
  });
}

Tensor maxpool2d(const Tensor& x, std::size_t pool_rows, std::size_t pool_time) {
  require_rank("maxpool2d", x, 4);
  if (pool_rows == 0 || pool_time == 0) throw ShapeError("maxpool2d: pool extents must be >= 1");
  const auto [n, rows, time, feat] = dims4(x);
  const std::size_t orows = rows / pool_rows, otime = time / pool_time;
  if (orows == 0 || otime == 0) {
    throw ShapeError("maxpool2d: pool (" + std::to_string(pool_rows) + ", " +
                     std::to_string(pool_time) + ") larger than input " + to_string(x.shape()));
  }
  std::vector<double> out(n * orows * otime * feat);
  std::vector<std::size_t> argmax(out.size());
  const bool track = branch_tracking::enabled();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t r = 0; r < orows; ++r) {
      for (std::size_t t = 0; t < otime; ++t) {
        for (std::size_t f = 0; f < feat; ++f) {
          const std::size_t oi = ((s * orows + r) * otime + t) * feat + f;
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_i = 0;
          for (std::size_t a = 0; a < pool_rows; ++a) {
            for (std::size_t c = 0; c < pool_time; ++c) {
              const std::size_t ii =
                  ((s * rows + r * pool_rows + a) * time + t * pool_time + c) * feat + f;
              if (x[ii] > best) {
                best = x[ii];
                best_i = ii;
              }
            }
          }
          out[oi] = best;
          argmax[oi] = best_i;
          if (track) branch_tracking::mix(best_i);
        }
      }
    }
  }
  return make_result(Shape{n, orows, otime, feat}, std::move(out), {x},
                     [x, argmax = std::move(argmax)](TensorImpl& o) {
                       if (double* g = grad_of(x)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[argmax[i]] += o.grad[i];
                       }
                     });
}

Tensor upsample2d(const Tensor& x, std::size_t factor_rows, std::size_t factor_time) {
  require_rank("upsample2d", x, 4);
  if (factor_rows == 0 || factor_time == 0) throw ShapeError("upsample2d: factors must be >= 1");
  const auto [n, rows, time, feat] = dims4(x);
  const std::size_t orows = rows * factor_rows, otime = time * factor_time;
  std::vector<double> out(n * orows * otime * feat);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t r = 0; r < orows; ++r) {
      for (std::size_t t = 0; t < otime; ++t) {
        const double* src = x.data().data() + ((s * rows + r / factor_rows) * time + t / factor_time) * feat;
        std::copy(src, src + feat, out.data() + ((s * orows + r) * otime + t) * feat);
      }
    }
  }
  return make_result(Shape{n, orows, otime, feat}, std::move(out), {x},
                     [=](TensorImpl& o) {
                       double* g = grad_of(x);
                       if (!g) return;
                       for (std::size_t s = 0; s < n; ++s) {
                         for (std::size_t r = 0; r < orows; ++r) {
                           for (std::size_t t = 0; t < otime; ++t) {
                             double* dst = g + ((s * rows + r / factor_rows) * time + t / factor_time) * feat;
                             const double* src = o.grad.data() + ((s * orows + r) * otime + t) * feat;
                             for (std::size_t f = 0; f < feat; ++f) dst[f] += src[f];
                           }
                         }
                       }
                     });
}

Tensor zeropad2d(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
                 std::size_t right) {
  require_rank("zeropad2d", x, 4);
  const auto [n, rows, time, feat] = dims4(x);
  const std::size_t orows = rows + top + bottom, otime = time + left + right;
  std::vector<double> out(n * orows * otime * feat, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = x.data().data() + (s * rows + r) * time * feat;
      double* dst = out.data() + ((s * orows + r + top) * otime + left) * feat;
      std::copy(src, src + time * feat, dst);
    }
  }
  return make_result(Shape{n, orows, otime, feat}, std::move(out), {x},
                     [=](TensorImpl& o) {
                       double* g = grad_of(x);
                       if (!g) return;
                       for (std::size_t s = 0; s < n; ++s) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           const double* src = o.grad.data() + ((s * orows + r + top) * otime + left) * feat;
                           double* dst = g + (s * rows + r) * time * feat;
                           for (std::size_t i = 0; i < time * feat; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.rank();
  if (axes.size() != rank) {
    throw ShapeError("permute: " + std::to_string(axes.size()) + " axes given for shape " +
                     to_string(x.shape()));
  }
  std::vector<bool> used(rank, false);
  for (std::size_t a : axes) {
    if (a >= rank || used[a]) throw ShapeError("permute: axes are not a permutation");
    used[a] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.extent(axes[i]);

  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * x.extent(i);
  // Stride in the input for each output axis.
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) src_strides[i] = in_strides[axes[i]];

  std::vector<std::size_t> source(x.size());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t o = 0; o < x.size(); ++o) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < rank; ++i) off += idx[i] * src_strides[i];
    source[o] = off;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = x[source[o]];
  return make_result(std::move(out_shape), std::move(out), {x},
                     [x, source = std::move(source)](TensorImpl& o) {
                       if (double* g = grad_of(x)) {
                         for (std::size_t i = 0; i < o.grad.size(); ++i) g[source[i]] += o.grad[i];
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [x](TensorImpl& o) {
    if (double* g = grad_of(x)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw ShapeError("concat_rows: " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ beyond the batch axis");
  }
  Shape shape = a.shape();
  shape[0] += b.shape()[0];
  std::vector<double> out(a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return make_result(std::move(shape), std::move(out), {a, b}, [a, b](TensorImpl& o) {
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < a.size(); ++i) g[i] += o.grad[i];
    }
    if (double* g = grad_of(b)) {
      for (std::size_t i = 0; i < b.size(); ++i) g[i] += o.grad[a.size() + i];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin >= end || end > x.shape()[0]) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                     to_string(x.shape()));
  }
  const std::size_t width = x.size() / x.shape()[0];
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * width),
                          x.data().begin() + static_cast<std::ptrdiff_t>(end * width));
  return make_result(std::move(shape), std::move(out), {x}, [x, begin, width](TensorImpl& o) {
    if (double* g = grad_of(x)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin * width + i] += o.grad[i];
    }
  });
}

Tensor batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                       std::vector<double>* batch_mean, std::vector<double>* batch_var) {
  const std::size_t feat = x.shape().back();
  if (gamma.size() != feat || beta.size() != feat) {
    throw ShapeError("batchnorm: input " + to_string(x.shape()) + " has " + std::to_string(feat) +
                     " features, parameters have " + std::to_string(gamma.size()));
  }
  const std::size_t count = x.size() / feat;
  std::vector<double> mu(feat, 0.0), var(feat, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t f = 0; f < feat; ++f) mu[f] += x[i * feat + f];
  }
  for (double& m : mu) m /= static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t f = 0; f < feat; ++f) {
      const double d = x[i * feat + f] - mu[f];
      var[f] += d * d;
    }
  }
  for (double& v : var) v /= static_cast<double>(count);
  std::vector<double> inv_std(feat);
  for (std::size_t f = 0; f < feat; ++f) inv_std[f] = 1.0 / std::sqrt(var[f] + eps);

  std::vector<double> xhat(x.size()), out(x.size());
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t f = 0; f < feat; ++f) {
      const std::size_t k = i * feat + f;
      xhat[k] = (x[k] - mu[f]) * inv_std[f];
      out[k] = gamma[f] * xhat[k] + beta[f];
    }
  }
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;

  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, feat, count, inv_std = std::move(inv_std), xhat = std::move(xhat)](TensorImpl& o) {
        std::vector<double> sum_g(feat, 0.0), sum_gx(feat, 0.0);
        for (std::size_t i = 0; i < count; ++i) {
          for (std::size_t f = 0; f < feat; ++f) {
            const std::size_t k = i * feat + f;
            sum_g[f] += o.grad[k];
            sum_gx[f] += o.grad[k] * xhat[k];
          }
        }
        if (double* gg = grad_of(gamma)) {
          for (std::size_t f = 0; f < feat; ++f) gg[f] += sum_gx[f];
        }
        if (double* gb = grad_of(beta)) {
          for (std::size_t f = 0; f < feat; ++f) gb[f] += sum_g[f];
        }
        if (double* gx = grad_of(x)) {
          const double inv_count = 1.0 / static_cast<double>(count);
          for (std::size_t i = 0; i < count; ++i) {
            for (std::size_t f = 0; f < feat; ++f) {
              const std::size_t k = i * feat + f;
              gx[k] += gamma[f] * inv_std[f] *
                       (o.grad[k] - sum_g[f] * inv_count - xhat[k] * sum_gx[f] * inv_count);
            }
          }
        }
      });
}

Tensor batchnorm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const std::vector<double>& running_mean,
                       const std::vector<double>& running_var, double eps) {
  const std::size_t feat = x.shape().back();
  if (gamma.size() != feat || beta.size() != feat || running_mean.size() != feat ||
      running_var.size() != feat) {
    throw ShapeError("batchnorm: input " + to_string(x.shape()) + " does not match " +
                     std::to_string(gamma.size()) + " normalized features");
  }
  const std::size_t count = x.size() / feat;
  std::vector<double> inv_std(feat);
  for (std::size_t f = 0; f < feat; ++f) inv_std[f] = 1.0 / std::sqrt(running_var[f] + eps);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t f = 0; f < feat; ++f) {
      const std::size_t k = i * feat + f;
      out[k] = gamma[f] * (x[k] - running_mean[f]) * inv_std[f] + beta[f];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, feat, count, running_mean, inv_std = std::move(inv_std)](TensorImpl& o) {
        double* gx = grad_of(x);
        double* gg = grad_of(gamma);
        double* gb = grad_of(beta);
        for (std::size_t i = 0; i < count; ++i) {
          for (std::size_t f = 0; f < feat; ++f) {
            const std::size_t k = i * feat + f;
            if (gx) gx[k] += o.grad[k] * gamma[f] * inv_std[f];
            if (gg) gg[f] += o.grad[k] * (x[k] - running_mean[f]) * inv_std[f];
            if (gb) gb[f] += o.grad[k];
          }
        }
      });
}

namespace {

void check_probabilities(const char* op, const Tensor& p) {
  for (double v : p.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError(std::string(op) + ": prediction " + std::to_string(v) +
                        " is not a probability");
    }
  }
}

}  // namespace

Tensor bce(const Tensor& prediction, const Tensor& target) {
  require_same_shape("bce", prediction, target);
  check_probabilities("bce", prediction);
  constexpr double lo = kProbabilityMargin, hi = 1.0 - kProbabilityMargin;
  const std::size_t n = prediction.size();
  double total = 0.0;
  const bool track = branch_tracking::enabled();
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(prediction[i], lo, hi);
    if (track) branch_tracking::mix(prediction[i] < lo ? 1 : prediction[i] > hi ? 2 : 0);
    total -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
  }
  return make_result(Shape{1}, {total / static_cast<double>(n)}, {prediction, target},
                     [prediction, target, n](TensorImpl& o) {
                       constexpr double lo = kProbabilityMargin, hi = 1.0 - kProbabilityMargin;
                       const double g0 = o.grad[0] / static_cast<double>(n);
                       if (double* g = grad_of(prediction)) {
                         for (std::size_t i = 0; i < n; ++i) {
                           const double raw = prediction[i];
                           if (raw < lo || raw > hi) continue;
                           g[i] += g0 * (-(target[i] / raw) + (1.0 - target[i]) / (1.0 - raw));
                         }
                       }
                       if (double* g = grad_of(target)) {
                         for (std::size_t i = 0; i < n; ++i) {
                           const double p = std::clamp(prediction[i], lo, hi);
                           g[i] += g0 * (std::log(1.0 - p) - std::log(p));
                         }
                       }
                     });
}

Tensor categorical_ce(const Tensor& prediction, const Tensor& target) {
  require_same_shape("categorical_ce", prediction, target);
  require_rank("categorical_ce", prediction, 2);
  check_probabilities("categorical_ce", prediction);
  constexpr double lo = kProbabilityMargin;
  const std::size_t rows = prediction.extent(0);
  double total = 0.0;
  const bool track = branch_tracking::enabled();
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    if (target[i] == 0.0) continue;
    if (track) branch_tracking::mix(prediction[i] < lo);
    total -= target[i] * std::log(std::max(prediction[i], lo));
  }
  return make_result(Shape{1}, {total / static_cast<double>(rows)}, {prediction, target},
                     [prediction, target, rows](TensorImpl& o) {
                       constexpr double lo = kProbabilityMargin;
                       const double g0 = o.grad[0] / static_cast<double>(rows);
                       if (double* g = grad_of(prediction)) {
                         for (std::size_t i = 0; i < prediction.size(); ++i) {
                           if (target[i] == 0.0 || prediction[i] < lo) continue;
                           g[i] -= g0 * target[i] / prediction[i];
                         }
                       }
                       if (double* g = grad_of(target)) {
                         for (std::size_t i = 0; i < prediction.size(); ++i) {
                           g[i] -= g0 * std::log(std::max(prediction[i], lo));
                         }
                       }
                     });
}

Tensor mse(const Tensor& prediction, const Tensor& target) {
  require_same_shape("mse", prediction, target);
  const std::size_t n = prediction.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = prediction[i] - target[i];
    total += d * d;
  }
  return make_result(Shape{1}, {total / static_cast<double>(n)}, {prediction, target},
                     [prediction, target, n](TensorImpl& o) {
                       const double g0 = 2.0 * o.grad[0] / static_cast<double>(n);
                       double* gp = grad_of(prediction);
                       double* gt = grad_of(target);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double d = prediction[i] - target[i];
                         if (gp) gp[i] += g0 * d;
                         if (gt) gt[i] -= g0 * d;
                       }
                     });
}

}  // namespace erpgan::nn::ops

#pragma once

#include <cstring>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "repose/param_store.hpp"
#include "repose/tensor.hpp"

namespace repose {

struct EvalMode {
  bool training = true;
  bool update_running_stats = true;
};

inline constexpr EvalMode kTrainMode{true, true};
inline constexpr EvalMode kInferenceMode{false, false};

// Reverse-mode autodiff tape. Ops append nodes in execution order; backward
// walks the nodes in reverse, which is a valid topological order. Gradients
// of parameter leaves are accumulated into their ParamStore entries.
template <typename T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on demand during backward
    std::function<void(Tape&, int)> back;
    Param<T>* bound = nullptr;
    bool needs_grad = false;
  };

  int leaf(Tensor<T> value, bool needs_grad = false) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), nullptr, nullptr, needs_grad});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int param(Param<T>& p) {
    nodes_.push_back(Node{p.value, Tensor<T>(), nullptr, &p, p.trainable});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int emit(Tensor<T> value, std::vector<int> inputs, std::function<void(Tape&, int)> back) {
    bool needs = false;
    for (int i : inputs) needs = needs || nodes_[static_cast<std::size_t>(i)].needs_grad;
    nodes_.push_back(Node{std::move(value), Tensor<T>(), needs ? std::move(back) : nullptr, nullptr, needs});
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Tensor<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  // Gradient buffer for a node, zero-initialized on first touch.
  Tensor<T>& grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad.defined()) n.grad = Tensor<T>::zeros_like(n.value);
    return n.grad;
  }

  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  // Backpropagates from a scalar root and accumulates parameter gradients
  // into their stores.
  void backward(int root) {
    Node& r = nodes_[static_cast<std::size_t>(root)];
    if (r.value.size() != 1) throw std::invalid_argument("backward: root must be a scalar, got " + r.value.shape_string());
    grad(root)[0] = T(1);
    for (int id = root; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.needs_grad || !n.grad.defined()) continue;
      if (n.back) n.back(*this, id);
      if (n.bound && n.bound->trainable) {
        Tensor<T>& pg = n.bound->grad;
        const Tensor<T>& g = n.grad;
        for (std::int64_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      }
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// GEMM kernels. Row-major, accumulate into C. Loop orders keep the innermost
// axis contiguous so the compiler can vectorize.

template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int m = 0; m < M; ++m) {
    T* c = C + static_cast<std::size_t>(m) * N;
    const T* a = A + static_cast<std::size_t>(m) * K;
    for (int k = 0; k < K; ++k) {
      const T av = a[k];
      if (av == T(0)) continue;
      const T* b = B + static_cast<std::size_t>(k) * N;
      for (int n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

// C[M,N] += A^T B where A is stored [K,M].
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int k = 0; k < K; ++k) {
    const T* a = A + static_cast<std::size_t>(k) * M;
    const T* b = B + static_cast<std::size_t>(k) * N;
    for (int m = 0; m < M; ++m) {
      const T av = a[m];
      if (av == T(0)) continue;
      T* c = C + static_cast<std::size_t>(m) * N;
      for (int n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

// C[M,K] += A B^T where A is [M,N], B is [K,N].
template <typename T>
void gemm_nt(int M, int K, int N, const T* A, const T* B, T* C) {
  for (int m = 0; m < M; ++m) {
    const T* a = A + static_cast<std::size_t>(m) * N;
    T* c = C + static_cast<std::size_t>(m) * K;
    for (int k = 0; k < K; ++k) {
      const T* b = B + static_cast<std::size_t>(k) * N;
      T acc = T(0);
      for (int n = 0; n < N; ++n) acc += a[n] * b[n];
      c[k] += acc;
    }
  }
}

// ---------------------------------------------------------------------------
// Convolution with TF-style SAME padding: output spatial dims are
// ceil(in / stride); padding splits with the smaller half first.

struct ConvGeometry {
  int out_h = 0, out_w = 0;
  int pad_top = 0, pad_left = 0;
};

inline ConvGeometry conv_geometry(int in_h, int in_w, int kernel, int stride) {
  ConvGeometry g;
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  int pad_h = std::max(0, (g.out_h - 1) * stride + kernel - in_h);
  int pad_w = std::max(0, (g.out_w - 1) * stride + kernel - in_w);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

namespace detail {

template <typename T>
void im2col(const T* x, int C, int H, int W, int kernel, int stride, const ConvGeometry& g, T* cols) {
  const int OH = g.out_h, OW = g.out_w;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* row = cols + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * OH * OW;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * stride + ky - g.pad_top;
          T* dst = row + static_cast<std::size_t>(oy) * OW;
          if (iy < 0 || iy >= H) {
            std::memset(dst, 0, sizeof(T) * static_cast<std::size_t>(OW));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * stride + kx - g.pad_left;
            dst[ox] = (ix < 0 || ix >= W) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int C, int H, int W, int kernel, int stride, const ConvGeometry& g, T* x) {
  const int OH = g.out_h, OW = g.out_w;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* row = cols + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * OH * OW;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * stride + ky - g.pad_top;
          if (iy < 0 || iy >= H) continue;
          T* dst = x + (static_cast<std::size_t>(c) * H + iy) * W;
          const T* src = row + static_cast<std::size_t>(oy) * OW;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * stride + kx - g.pad_left;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2D convolution; weight (F, C, k, k), optional bias (F), SAME padding.
template <typename T>
int conv2d(Tape<T>& tape, int x_id, int w_id, int b_id, int stride) {
  const Tensor<T>& x = tape.value(x_id);
  const Tensor<T>& w = tape.value(w_id);
  if (x.rank() != 4 || w.rank() != 4)
    throw std::invalid_argument("conv2d: expected rank-4 input and weight, got " + x.shape_string() + " and " +
                                w.shape_string());
  if (x.c() != w.dim(1)) {
    std::ostringstream os;
    os << "conv2d: input channels " << x.c() << " != weight input channels " << w.dim(1) << " (input "
       << x.shape_string() << ", weight " << w.shape_string() << ")";
    throw std::invalid_argument(os.str());
  }
  const int B = x.n(), C = x.c(), H = x.h(), W = x.w();
  const int F = w.dim(0), k = w.dim(2);
  const ConvGeometry g = conv_geometry(H, W, k, stride);
  const int OH = g.out_h, OW = g.out_w;
  const int CKK = C * k * k, ON = OH * OW;

  Tensor<T> y({B, F, OH, OW});
  const T* bias = b_id >= 0 ? tape.value(b_id).data() : nullptr;

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (B > 1)
#endif
  for (int b = 0; b < B; ++b) {
    std::vector<T> cols(static_cast<std::size_t>(CKK) * ON);
    detail::im2col(x.data() + static_cast<std::size_t>(b) * C * H * W, C, H, W, k, stride, g, cols.data());
    T* yb = y.data() + static_cast<std::size_t>(b) * F * ON;
    if (bias) {
      for (int f = 0; f < F; ++f)
        for (int n = 0; n < ON; ++n) yb[static_cast<std::size_t>(f) * ON + n] = bias[f];
    } else {
      std::memset(yb, 0, sizeof(T) * static_cast<std::size_t>(F) * ON);
    }
    gemm_nn(F, ON, CKK, w.data(), cols.data(), yb);
  }

  auto back = [x_id, w_id, b_id, stride, B, C, H, W, F, k, g, CKK, ON](Tape<T>& t, int self) {
    const Tensor<T>& xv = t.value(x_id);
    const Tensor<T>& wv = t.value(w_id);
    const Tensor<T>& gy = t.grad(self);
    const bool need_x = t.needs_grad(x_id);
    const bool need_w = t.needs_grad(w_id);
    const bool need_b = b_id >= 0 && t.needs_grad(b_id);

    if (need_b) {
      Tensor<T>& gb = t.grad(b_id);
      for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f) {
          const T* row = gy.data() + (static_cast<std::size_t>(b) * F + f) * ON;
          T acc = T(0);
          for (int n = 0; n < ON; ++n) acc += row[n];
          gb[f] += acc;
        }
    }
    if (!need_x && !need_w) return;

    T* gx_data = need_x ? t.grad(x_id).data() : nullptr;
    // Per-image dW partials summed in batch order keep results independent
    // of thread count.
    std::vector<Tensor<T>> dw_partial;
    if (need_w) dw_partial.assign(static_cast<std::size_t>(B), Tensor<T>::zeros_like(wv));

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (B > 1)
#endif
    for (int b = 0; b < B; ++b) {
      std::vector<T> cols;
      const T* gyb = gy.data() + static_cast<std::size_t>(b) * F * ON;
      if (need_w) {
        cols.resize(static_cast<std::size_t>(CKK) * ON);
        detail::im2col(xv.data() + static_cast<std::size_t>(b) * C * H * W, C, H, W, k, stride, g, cols.data());
        gemm_nt(F, CKK, ON, gyb, cols.data(), dw_partial[static_cast<std::size_t>(b)].data());
      }
      if (need_x) {
        std::vector<T> dcols(static_cast<std::size_t>(CKK) * ON, T(0));
        gemm_tn(CKK, ON, F, wv.data(), gyb, dcols.data());
        detail::col2im_add(dcols.data(), C, H, W, k, stride, g, gx_data + static_cast<std::size_t>(b) * C * H * W);
      }
    }
    if (need_w) {
      Tensor<T>& gw = t.grad(w_id);
      for (int b = 0; b < B; ++b) {
        const Tensor<T>& part = dw_partial[static_cast<std::size_t>(b)];
        for (std::int64_t i = 0; i < gw.size(); ++i) gw[i] += part[i];
      }
    }
  };

  std::vector<int> inputs{x_id, w_id};
  if (b_id >= 0) inputs.push_back(b_id);
  return tape.emit(std::move(y), std::move(inputs), std::move(back));
}

template <typename T>
int relu(Tape<T>& tape, int x_id) {
  const Tensor<T>& x = tape.value(x_id);
  Tensor<T> y = x;
  for (std::int64_t i = 0; i < y.size(); ++i) y[i] = y[i] > T(0) ? y[i] : T(0);
  auto back = [x_id](Tape<T>& t, int self) {
    const Tensor<T>& xv = t.value(x_id);
    const Tensor<T>& gy = t.grad(self);
    Tensor<T>& gx = t.grad(x_id);
    for (std::int64_t i = 0; i < gx.size(); ++i)
      if (xv[i] > T(0)) gx[i] += gy[i];
  };
  return tape.emit(std::move(y), {x_id}, std::move(back));
}

// Batch normalization over (batch, height, width) per channel. Training mode
// normalizes with batch statistics and optionally folds them into the running
// buffers; inference mode uses the running buffers as constants.
template <typename T>
int batchnorm(Tape<T>& tape, int x_id, int gamma_id, int beta_id, Param<T>& running_mean, Param<T>& running_var,
              const EvalMode& mode, double momentum = 0.99, double eps = 1e-5) {
  const Tensor<T>& x = tape.value(x_id);
  if (x.rank() != 4) throw std::invalid_argument("batchnorm: expected rank-4 input, got " + x.shape_string());
  const int B = x.n(), C = x.c(), H = x.h(), W = x.w();
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  const std::int64_t count = static_cast<std::int64_t>(B) * plane;
  const Tensor<T>& gamma = tape.value(gamma_id);
  const Tensor<T>& beta = tape.value(beta_id);

  std::vector<T> mean(static_cast<std::size_t>(C)), invstd(static_cast<std::size_t>(C));
  if (mode.training) {
    for (int c = 0; c < C; ++c) {
      double sum = 0.0;
      for (int b = 0; b < B; ++b) {
        const T* p = x.data() + (static_cast<std::size_t>(b) * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) sum += static_cast<double>(p[i]);
      }
      const double m = sum / static_cast<double>(count);
      double sq = 0.0;
      for (int b = 0; b < B; ++b) {
        const T* p = x.data() + (static_cast<std::size_t>(b) * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(p[i]) - m;
          sq += d * d;
        }
      }
      const double v = sq / static_cast<double>(count);
      mean[static_cast<std::size_t>(c)] = static_cast<T>(m);
      invstd[static_cast<std::size_t>(c)] = static_cast<T>(1.0 / std::sqrt(v + eps));
      if (mode.update_running_stats) {
        running_mean.value[c] = static_cast<T>(momentum * static_cast<double>(running_mean.value[c]) + (1.0 - momentum) * m);
        running_var.value[c] = static_cast<T>(momentum * static_cast<double>(running_var.value[c]) + (1.0 - momentum) * v);
      }
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[static_cast<std::size_t>(c)] = running_mean.value[c];
      invstd[static_cast<std::size_t>(c)] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.value[c]) + eps));
    }
  }

  Tensor<T> y({B, C, H, W});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T* p = x.data() + (static_cast<std::size_t>(b) * C + c) * plane;
      T* q = y.data() + (static_cast<std::size_t>(b) * C + c) * plane;
      const T m = mean[static_cast<std::size_t>(c)], s = invstd[static_cast<std::size_t>(c)];
      const T gsc = gamma[c], bsh = beta[c];
      for (std::int64_t i = 0; i < plane; ++i) q[i] = (p[i] - m) * s * gsc + bsh;
    }

  const bool training = mode.training;
  auto back = [x_id, gamma_id, beta_id, mean, invstd, B, C, plane, count, training](Tape<T>& t, int self) {
    const Tensor<T>& xv = t.value(x_id);
    const Tensor<T>& gy = t.grad(self);
    const Tensor<T>& gamma_v = t.value(gamma_id);
    const bool need_x = t.needs_grad(x_id);
    const bool need_g = t.needs_grad(gamma_id);
    const bool need_b = t.needs_grad(beta_id);

    for (int c = 0; c < C; ++c) {
      const T m = mean[static_cast<std::size_t>(c)], s = invstd[static_cast<std::size_t>(c)];
      double sum_gy = 0.0, sum_gy_xhat = 0.0;
      for (int b = 0; b < B; ++b) {
        const T* xp = xv.data() + (static_cast<std::size_t>(b) * C + c) * plane;
        const T* gp = gy.data() + (static_cast<std::size_t>(b) * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          sum_gy += static_cast<double>(gp[i]);
          sum_gy_xhat += static_cast<double>(gp[i]) * static_cast<double>((xp[i] - m) * s);
        }
      }
      if (need_g) t.grad(gamma_id)[c] += static_cast<T>(sum_gy_xhat);
      if (need_b) t.grad(beta_id)[c] += static_cast<T>(sum_gy);
      if (!need_x) continue;
      Tensor<T>& gx = t.grad(x_id);
      const double g = static_cast<double>(gamma_v[c]);
      if (training) {
        const double inv_n = 1.0 / static_cast<double>(count);
        for (int b = 0; b < B; ++b) {
          const T* xp = xv.data() + (static_cast<std::size_t>(b) * C + c) * plane;
          const T* gp = gy.data() + (static_cast<std::size_t>(b) * C + c) * plane;
          T* op = gx.data() + (static_cast<std::size_t>(b) * C + c) * plane;
          for (std::int64_t i = 0; i < plane; ++i) {
            const double xhat = static_cast<double>((xp[i] - m) * s);
            op[i] += static_cast<T>(g * static_cast<double>(s) *
                                    (static_cast<double>(gp[i]) - inv_n * sum_gy - xhat * inv_n * sum_gy_xhat));
          }
        }
      } else {
        for (int b = 0; b < B; ++b) {
          const T* gp = gy.data() + (static_cast<std::size_t>(b) * C + c) * plane;
          T* op = gx.data() + (static_cast<std::size_t>(b) * C + c) * plane;
          for (std::int64_t i = 0; i < plane; ++i) op[i] += static_cast<T>(g * static_cast<double>(s) * static_cast<double>(gp[i]));
        }
      }
    }
  };
  return tape.emit(std::move(y), {x_id, gamma_id, beta_id}, std::move(back));
}

// ---------------------------------------------------------------------------
// Bilinear resize, corner-aligned: endpoints map to endpoints so heatmap peak
// positions are consistent across resolutions. Shared by the tape op and the
// plain functional version.

namespace detail {

struct ResizeTap {
  int lo = 0, hi = 0;
  double w_hi = 0.0;
};

inline std::vector<ResizeTap> resize_taps(int in, int out) {
  std::vector<ResizeTap> taps(static_cast<std::size_t>(out));
  const double scale = out > 1 ? static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
  for (int o = 0; o < out; ++o) {
    double src = o * scale;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    int hi = std::min(lo + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = {lo, hi, src - lo};
  }
  return taps;
}

}  // namespace detail

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w) {
  if (x.rank() != 4) throw std::invalid_argument("bilinear_resize: expected rank-4 input, got " + x.shape_string());
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: output dims must be >= 1");
  if (out_h == x.h() && out_w == x.w()) return x;  // identity, bitwise
  const int B = x.n(), C = x.c(), H = x.h(), W = x.w();
  const auto ty = detail::resize_taps(H, out_h);
  const auto tx = detail::resize_taps(W, out_w);
  Tensor<T> y({B, C, out_h, out_w});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T* src = x.data() + (static_cast<std::size_t>(b) * C + c) * H * W;
      T* dst = y.data() + (static_cast<std::size_t>(b) * C + c) * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& r = ty[static_cast<std::size_t>(oy)];
        const T* row0 = src + static_cast<std::size_t>(r.lo) * W;
        const T* row1 = src + static_cast<std::size_t>(r.hi) * W;
        const double wy1 = r.w_hi, wy0 = 1.0 - r.w_hi;
        for (int ox = 0; ox < out_w; ++ox) {
          const auto& q = tx[static_cast<std::size_t>(ox)];
          const double wx1 = q.w_hi, wx0 = 1.0 - q.w_hi;
          dst[static_cast<std::size_t>(oy) * out_w + ox] =
              static_cast<T>(wy0 * (wx0 * row0[q.lo] + wx1 * row0[q.hi]) + wy1 * (wx0 * row1[q.lo] + wx1 * row1[q.hi]));
        }
      }
    }
  return y;
}

template <typename T>
int bilinear_resize_op(Tape<T>& tape, int x_id, int out_h, int out_w) {
  const Tensor<T>& x = tape.value(x_id);
  if (out_h == x.h() && out_w == x.w()) {
    // identity pass-through
    auto back = [x_id](Tape<T>& t, int self) {
      const Tensor<T>& gy = t.grad(self);
      Tensor<T>& gx = t.grad(x_id);
      for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    };
    return tape.emit(x, {x_id}, std::move(back));
  }
  Tensor<T> y = bilinear_resize(x, out_h, out_w);
  const int B = x.n(), C = x.c(), H = x.h(), W = x.w();
  auto back = [x_id, B, C, H, W, out_h, out_w](Tape<T>& t, int self) {
    const Tensor<T>& gy = t.grad(self);
    Tensor<T>& gx = t.grad(x_id);
    const auto ty = detail::resize_taps(H, out_h);
    const auto tx = detail::resize_taps(W, out_w);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        T* dst = gx.data() + (static_cast<std::size_t>(b) * C + c) * H * W;
        const T* src = gy.data() + (static_cast<std::size_t>(b) * C + c) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
          const auto& r = ty[static_cast<std::size_t>(oy)];
          const double wy1 = r.w_hi, wy0 = 1.0 - r.w_hi;
          for (int ox = 0; ox < out_w; ++ox) {
            const auto& q = tx[static_cast<std::size_t>(ox)];
            const T g = src[static_cast<std::size_t>(oy) * out_w + ox];
            dst[static_cast<std::size_t>(r.lo) * W + q.lo] += static_cast<T>(wy0 * (1.0 - q.w_hi)) * g;
            dst[static_cast<std::size_t>(r.lo) * W + q.hi] += static_cast<T>(wy0 * q.w_hi) * g;
            dst[static_cast<std::size_t>(r.hi) * W + q.lo] += static_cast<T>(wy1 * (1.0 - q.w_hi)) * g;
            dst[static_cast<std::size_t>(r.hi) * W + q.hi] += static_cast<T>(wy1 * q.w_hi) * g;
          }
        }
      }
  };
  return tape.emit(std::move(y), {x_id}, std::move(back));
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty input list");
  int total_c = 0;
  for (const auto& x : xs) {
    check_same_spatial(xs.front().dims(), x.dims(), "concat_channels");
    total_c += x.c();
  }
  const int B = xs.front().n(), H = xs.front().h(), W = xs.front().w();
  Tensor<T> y({B, total_c, H, W});
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  for (int b = 0; b < B; ++b) {
    std::int64_t coff = 0;
    for (const auto& x : xs) {
      std::memcpy(y.data() + (static_cast<std::size_t>(b) * total_c + coff) * plane,
                  x.data() + static_cast<std::size_t>(b) * x.c() * plane,
                  sizeof(T) * static_cast<std::size_t>(x.c()) * plane);
      coff += x.c();
    }
  }
  return y;
}

template <typename T>
int concat_channels_op(Tape<T>& tape, const std::vector<int>& ids) {
  if (ids.empty()) throw std::invalid_argument("concat_channels: empty input list");
  if (ids.size() == 1) return ids[0];  // identity case
  std::vector<Tensor<T>> vals;
  std::vector<int> channels;
  vals.reserve(ids.size());
  for (int id : ids) {
    vals.push_back(tape.value(id));
    channels.push_back(tape.value(id).c());
  }
  Tensor<T> y = concat_channels(vals);
  const int B = y.n(), TC = y.c(), H = y.h(), W = y.w();
  auto ids_copy = ids;
  auto back = [ids_copy, channels, B, TC, H, W](Tape<T>& t, int self) {
    const Tensor<T>& gy = t.grad(self);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    std::int64_t coff = 0;
    for (std::size_t i = 0; i < ids_copy.size(); ++i) {
      const int ci = channels[i];
      if (t.needs_grad(ids_copy[i])) {
        Tensor<T>& gx = t.grad(ids_copy[i]);
        for (int b = 0; b < B; ++b) {
          const T* src = gy.data() + (static_cast<std::size_t>(b) * TC + coff) * plane;
          T* dst = gx.data() + static_cast<std::size_t>(b) * ci * plane;
          for (std::int64_t j = 0; j < ci * plane; ++j) dst[j] += src[j];
        }
      }
      coff += ci;
    }
  };
  return tape.emit(std::move(y), ids_copy, std::move(back));
}

template <typename T>
int add_op(Tape<T>& tape, int a_id, int b_id) {
  const Tensor<T>& a = tape.value(a_id);
  const Tensor<T>& b = tape.value(b_id);
  if (!a.same_shape(b))
    throw std::invalid_argument("add: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  Tensor<T> y = a;
  for (std::int64_t i = 0; i < y.size(); ++i) y[i] += b[i];
  auto back = [a_id, b_id](Tape<T>& t, int self) {
    const Tensor<T>& gy = t.grad(self);
    if (t.needs_grad(a_id)) {
      Tensor<T>& ga = t.grad(a_id);
      for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
    }
    if (t.needs_grad(b_id)) {
      Tensor<T>& gb = t.grad(b_id);
      for (std::int64_t i = 0; i < gb.size(); ++i) gb[i] += gy[i];
    }
  };
  return tape.emit(std::move(y), {a_id, b_id}, std::move(back));
}

// f + lambda * delta with a scalar trainable lambda.
template <typename T>
int residual_mix_trainable(Tape<T>& tape, int f_id, int delta_id, int lambda_id) {
  const Tensor<T>& f = tape.value(f_id);
  const Tensor<T>& d = tape.value(delta_id);
  if (!f.same_shape(d))
    throw std::invalid_argument("residual_mix: shape mismatch " + f.shape_string() + " vs " + d.shape_string());
  if (tape.value(lambda_id).size() != 1) throw std::invalid_argument("residual_mix: lambda must be scalar");
  const T lam = tape.value(lambda_id)[0];
  Tensor<T> y = f;
  for (std::int64_t i = 0; i < y.size(); ++i) y[i] += lam * d[i];
  auto back = [f_id, delta_id, lambda_id, lam](Tape<T>& t, int self) {
    const Tensor<T>& gy = t.grad(self);
    if (t.needs_grad(f_id)) {
      Tensor<T>& gf = t.grad(f_id);
      for (std::int64_t i = 0; i < gf.size(); ++i) gf[i] += gy[i];
    }
    if (t.needs_grad(delta_id)) {
      Tensor<T>& gd = t.grad(delta_id);
      for (std::int64_t i = 0; i < gd.size(); ++i) gd[i] += lam * gy[i];
    }
    if (t.needs_grad(lambda_id)) {
      const Tensor<T>& dv = t.value(delta_id);
      double acc = 0.0;
      for (std::int64_t i = 0; i < dv.size(); ++i) acc += static_cast<double>(gy[i]) * static_cast<double>(dv[i]);
      t.grad(lambda_id)[0] += static_cast<T>(acc);
    }
  };
  return tape.emit(std::move(y), {f_id, delta_id, lambda_id}, std::move(back));
}

// Scalar sum of x weighted by a constant tensor; the reduction used by the
// finite-difference gradient checker.
template <typename T>
int weighted_sum_op(Tape<T>& tape, int x_id, const Tensor<T>& weights) {
  const Tensor<T>& x = tape.value(x_id);
  if (!x.same_shape(weights))
    throw std::invalid_argument("weighted_sum: shape mismatch " + x.shape_string() + " vs " + weights.shape_string());
  Tensor<T> y({1});
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x[i]) * static_cast<double>(weights[i]);
  y[0] = static_cast<T>(acc);
  auto back = [x_id, weights](Tape<T>& t, int self) {
    if (!t.needs_grad(x_id)) return;
    const T g = t.grad(self)[0];
    Tensor<T>& gx = t.grad(x_id);
    for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
  };
  return tape.emit(std::move(y), {x_id}, std::move(back));
}

template <typename T>
int sum_scalars_op(Tape<T>& tape, const std::vector<int>& ids) {
  if (ids.empty()) throw std::invalid_argument("sum_scalars: empty input list");
  Tensor<T> y({1});
  for (int id : ids) {
    if (tape.value(id).size() != 1) throw std::invalid_argument("sum_scalars: inputs must be scalars");
    y[0] += tape.value(id)[0];
  }
  auto ids_copy = ids;
  auto back = [ids_copy](Tape<T>& t, int self) {
    const T g = t.grad(self)[0];
    for (int id : ids_copy)
      if (t.needs_grad(id)) t.grad(id)[0] += g;
  };
  return tape.emit(std::move(y), ids_copy, std::move(back));
}

}  // namespace repose

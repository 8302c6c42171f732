#include "ediv/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ediv/simd/kernels.hpp"

namespace ediv::ops {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* arg) {
  require(t.rank() == rank, std::string(op) + ": " + arg + " must have rank " +
                                std::to_string(rank) + ", got shape " + shape_str(t.shape()));
}

// cols is (C*K*K) x (Ho*Wo) for one sample.
void im2col(const double* x, std::size_t C, std::size_t H, std::size_t W, std::size_t K,
            std::size_t pad, std::size_t Ho, std::size_t Wo, double* cols) {
  const std::size_t P = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < K; ++ky)
      for (std::size_t kx = 0; kx < K; ++kx) {
        double* row = cols + ((c * K + ky) * K + kx) * P;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pad);
          double* dst = row + oy * Wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
            std::fill(dst, dst + Wo, 0.0);
            continue;
          }
          const double* src = x + (c * H + static_cast<std::size_t>(iy)) * W;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) ? 0.0 : src[ix];
          }
        }
      }
}

void col2im_add(const double* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t K,
                std::size_t pad, std::size_t Ho, std::size_t Wo, double* dx) {
  const std::size_t P = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < K; ++ky)
      for (std::size_t kx = 0; kx < K; ++kx) {
        const double* row = cols + ((c * K + ky) * K + kx) * P;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          double* dst = dx + (c * H + static_cast<std::size_t>(iy)) * W;
          const double* src = row + oy * Wo;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

Var conv2d(Graph& g, Var xv, Var wv, Var bv, std::size_t pad) {
  const Tensor& x = g.value(xv);
  const Tensor& w = g.value(wv);
  const Tensor& b = g.value(bv);
  require_rank(x, 4, "conv2d", "input");
  require_rank(w, 4, "conv2d", "weight");
  require_rank(b, 1, "conv2d", "bias");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), K = w.dim(2);
  require(w.dim(1) == C, "conv2d: weight expects " + std::to_string(w.dim(1)) +
                             " input channels, input has " + std::to_string(C));
  require(w.dim(3) == K, "conv2d: kernel must be square, got " + shape_str(w.shape()));
  require(b.dim(0) == O, "conv2d: bias length " + std::to_string(b.dim(0)) +
                             " does not match " + std::to_string(O) + " output channels");
  require(H + 2 * pad >= K && W + 2 * pad >= K,
          "conv2d: kernel " + std::to_string(K) + " larger than padded input " + shape_str(x.shape()));
  const std::size_t Ho = H + 2 * pad - K + 1, Wo = W + 2 * pad - K + 1;
  const std::size_t P = Ho * Wo, KK = C * K * K;
  const bool keep = g.requires_grad(xv) || g.requires_grad(wv) || g.requires_grad(bv);

  Tensor out({N, O, Ho, Wo});
  std::vector<double> cols_all(keep ? N * KK * P : KK * P);
  const auto& kt = simd::active();
  for (std::size_t n = 0; n < N; ++n) {
    double* cols = cols_all.data() + (keep ? n * KK * P : 0);
    im2col(x.data().data() + n * C * H * W, C, H, W, K, pad, Ho, Wo, cols);
    for (std::size_t o = 0; o < O; ++o) {
      double* dst = out.data().data() + (n * O + o) * P;
      std::fill(dst, dst + P, b[o]);
      const double* wrow = w.data().data() + o * KK;
      for (std::size_t k = 0; k < KK; ++k) kt.axpy(wrow[k], cols + k * P, dst, P);
    }
  }
  if (!keep) cols_all.clear();

  return g.record(
      OpKind::conv2d, {xv, wv, bv}, std::move(out),
      [=, cols_all = std::move(cols_all)](Graph& gr, std::span<const double> dout) {
        const auto& kt = simd::active();
        const double* wdata = gr.value(wv).data().data();
        if (gr.requires_grad(wv)) {
          auto dw = gr.grad_accumulator(wv);
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o) {
              const double* d = dout.data() + (n * O + o) * P;
              const double* cols = cols_all.data() + n * KK * P;
              for (std::size_t k = 0; k < KK; ++k) dw[o * KK + k] += kt.dot(d, cols + k * P, P);
            }
        }
        if (gr.requires_grad(bv)) {
          auto db = gr.grad_accumulator(bv);
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o) db[o] += kt.sum(dout.data() + (n * O + o) * P, P);
        }
        if (gr.requires_grad(xv)) {
          auto dx = gr.grad_accumulator(xv);
          std::vector<double> dcols(KK * P);
          for (std::size_t n = 0; n < N; ++n) {
            std::fill(dcols.begin(), dcols.end(), 0.0);
            for (std::size_t o = 0; o < O; ++o) {
              const double* d = dout.data() + (n * O + o) * P;
              for (std::size_t k = 0; k < KK; ++k)
                kt.axpy(wdata[o * KK + k], d, dcols.data() + k * P, P);
            }
            col2im_add(dcols.data(), C, H, W, K, pad, Ho, Wo, dx.data() + n * C * H * W);
          }
        }
      });
}

Var relu(Graph& g, Var xv) {
  const Tensor& x = g.value(xv);
  Tensor out(x.shape());
  simd::active().relu(x.data().data(), out.data().data(), x.size());
  return g.record(OpKind::relu, {xv}, std::move(out),
                  [xv](Graph& gr, std::span<const double> dout) {
                    const Tensor& xin = gr.value(xv);
                    auto dx = gr.grad_accumulator(xv);
                    std::vector<double> tmp(dout.size());
                    simd::active().relu_grad(xin.data().data(), dout.data(), tmp.data(),
                                             tmp.size());
                    for (std::size_t i = 0; i < tmp.size(); ++i) dx[i] += tmp[i];
                  });
}

Var maxpool2x2(Graph& g, Var xv) {
  const Tensor& x = g.value(xv);
  require_rank(x, 4, "maxpool2x2", "input");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H >= 2 && W >= 2, "maxpool2x2: spatial size must be at least 2x2, got " +
                                shape_str(x.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor out({N, C, Ho, Wo});
  std::vector<std::uint32_t> arg(out.size());
  std::size_t q = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (n * C + c) * H * W;
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox, ++q) {
          std::size_t best = base + (2 * oy) * W + 2 * ox;
          const std::size_t cand[3] = {best + 1, best + W, best + W + 1};
          for (std::size_t k : cand)
            if (x[k] > x[best]) best = k;
          out[q] = x[best];
          arg[q] = static_cast<std::uint32_t>(best);
        }
    }
  return g.record(OpKind::maxpool2x2, {xv}, std::move(out),
                  [xv, arg = std::move(arg)](Graph& gr, std::span<const double> dout) {
                    auto dx = gr.grad_accumulator(xv);
                    for (std::size_t i = 0; i < arg.size(); ++i) dx[arg[i]] += dout[i];
                  });
}

Var global_avg_pool(Graph& g, Var xv) {
  const Tensor& x = g.value(xv);
  require_rank(x, 4, "global_avg_pool", "input");
  const std::size_t N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  Tensor out({N, C});
  const auto& kt = simd::active();
  for (std::size_t i = 0; i < N * C; ++i)
    out[i] = kt.sum(x.data().data() + i * P, P) / static_cast<double>(P);
  return g.record(OpKind::global_avg_pool, {xv}, std::move(out),
                  [xv, P](Graph& gr, std::span<const double> dout) {
                    auto dx = gr.grad_accumulator(xv);
                    const double inv = 1.0 / static_cast<double>(P);
                    for (std::size_t i = 0; i < dout.size(); ++i) {
                      const double d = dout[i] * inv;
                      for (std::size_t p = 0; p < P; ++p) dx[i * P + p] += d;
                    }
                  });
}

Var flatten(Graph& g, Var xv) {
  const Tensor& x = g.value(xv);
  require(x.rank() >= 2, "flatten: input must have a batch axis and at least one feature axis");
  const std::size_t N = x.dim(0);
  Tensor out = x.reshaped({N, x.size() / N});
  return g.record(OpKind::flatten, {xv}, std::move(out),
                  [xv](Graph& gr, std::span<const double> dout) {
                    auto dx = gr.grad_accumulator(xv);
                    for (std::size_t i = 0; i < dout.size(); ++i) dx[i] += dout[i];
                  });
}

Var linear(Graph& g, Var xv, Var wv, Var bv) {
  const Tensor& x = g.value(xv);
  const Tensor& w = g.value(wv);
  const Tensor& b = g.value(bv);
  require_rank(x, 2, "linear", "input");
  require_rank(w, 2, "linear", "weight");
  require_rank(b, 1, "linear", "bias");
  const std::size_t N = x.dim(0), I = x.dim(1), O = w.dim(0);
  require(w.dim(1) == I, "linear: weight expects " + std::to_string(w.dim(1)) +
                             " input features, input has " + std::to_string(I));
  require(b.dim(0) == O, "linear: bias length does not match output features");
  Tensor out({N, O});
  const auto& kt = simd::active();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      out[n * O + o] = b[o] + kt.dot(w.data().data() + o * I, x.data().data() + n * I, I);
  return g.record(OpKind::linear, {xv, wv, bv}, std::move(out),
                  [=](Graph& gr, std::span<const double> dout) {
                    const auto& kt = simd::active();
                    const double* xd = gr.value(xv).data().data();
                    const double* wd = gr.value(wv).data().data();
                    if (gr.requires_grad(wv)) {
                      auto dw = gr.grad_accumulator(wv);
                      for (std::size_t n = 0; n < N; ++n)
                        for (std::size_t o = 0; o < O; ++o)
                          kt.axpy(dout[n * O + o], xd + n * I, dw.data() + o * I, I);
                    }
                    if (gr.requires_grad(bv)) {
                      auto db = gr.grad_accumulator(bv);
                      for (std::size_t n = 0; n < N; ++n)
                        for (std::size_t o = 0; o < O; ++o) db[o] += dout[n * O + o];
                    }
                    if (gr.requires_grad(xv)) {
                      auto dx = gr.grad_accumulator(xv);
                      for (std::size_t n = 0; n < N; ++n)
                        for (std::size_t o = 0; o < O; ++o)
                          kt.axpy(dout[n * O + o], wd + o * I, dx.data() + n * I, I);
                    }
                  });
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax", "logits");
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const double* row = logits.data().data() + n * K;
    double* dst = out.data().data() + n * K;
    const double mx = *std::max_element(row, row + K);
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      dst[k] = std::exp(row[k] - mx);
      total += dst[k];
    }
    for (std::size_t k = 0; k < K; ++k) dst[k] /= total;
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& m) {
  require_rank(m, 2, "argmax_rows", "matrix");
  const std::size_t N = m.dim(0), K = m.dim(1);
  std::vector<int> out(N);
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (m[n * K + k] > m[n * K + best]) best = k;
    out[n] = static_cast<int>(best);
  }
  return out;
}

Var cross_entropy(Graph& g, Var lv, std::span<const int> labels) {
  const Tensor& logits = g.value(lv);
  require_rank(logits, 2, "cross_entropy", "logits");
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  require(labels.size() == N, "cross_entropy: " + std::to_string(labels.size()) +
                                  " labels for a batch of " + std::to_string(N));
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < K,
            "cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(K) + ")");
  Tensor probs = softmax(logits);
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const double* row = logits.data().data() + n * K;
    const double mx = *std::max_element(row, row + K);
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) total += std::exp(row[k] - mx);
    loss += (std::log(total) + mx) - row[labels[n]];
  }
  loss /= static_cast<double>(N);
  std::vector<int> y(labels.begin(), labels.end());
  return g.record(OpKind::cross_entropy, {lv}, Tensor({1}, {loss}),
                  [lv, N, K, y = std::move(y), probs = std::move(probs)](
                      Graph& gr, std::span<const double> dout) {
                    auto dl = gr.grad_accumulator(lv);
                    const double s = dout[0] / static_cast<double>(N);
                    for (std::size_t n = 0; n < N; ++n)
                      for (std::size_t k = 0; k < K; ++k) {
                        const double target = static_cast<int>(k) == y[n] ? 1.0 : 0.0;
                        dl[n * K + k] += s * (probs[n * K + k] - target);
                      }
                  });
}

Var sum(Graph& g, Var xv) {
  const Tensor& x = g.value(xv);
  const double total = simd::sum(x.data());
  return g.record(OpKind::sum, {xv}, Tensor({1}, {total}),
                  [xv](Graph& gr, std::span<const double> dout) {
                    auto dx = gr.grad_accumulator(xv);
                    for (double& d : dx) d += dout[0];
                  });
}

Var mul(Graph& g, Var av, Var bv) {
  const Tensor& a = g.value(av);
  const Tensor& b = g.value(bv);
  require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  Tensor out(a.shape());
  simd::mul(a.data(), b.data(), out.data());
  return g.record(OpKind::mul, {av, bv}, std::move(out),
                  [av, bv](Graph& gr, std::span<const double> dout) {
                    const auto& kt = simd::active();
                    const std::size_t n = dout.size();
                    std::vector<double> tmp(n);
                    if (gr.requires_grad(av)) {
                      kt.mul(dout.data(), gr.value(bv).data().data(), tmp.data(), n);
                      auto da = gr.grad_accumulator(av);
                      for (std::size_t i = 0; i < n; ++i) da[i] += tmp[i];
                    }
                    if (gr.requires_grad(bv)) {
                      kt.mul(dout.data(), gr.value(av).data().data(), tmp.data(), n);
                      auto db = gr.grad_accumulator(bv);
                      for (std::size_t i = 0; i < n; ++i) db[i] += tmp[i];
                    }
                  });
}

Var scale(Graph& g, Var xv, double factor) {
  const Tensor& x = g.value(xv);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = factor * x[i];
  return g.record(OpKind::scale, {xv}, std::move(out),
                  [xv, factor](Graph& gr, std::span<const double> dout) {
                    auto dx = gr.grad_accumulator(xv);
                    for (std::size_t i = 0; i < dout.size(); ++i) dx[i] += factor * dout[i];
                  });
}

Var channel_mean(Graph& g, Var xv, std::size_t channel) {
  const Tensor& x = g.value(xv);
  require_rank(x, 4, "channel_mean", "input");
  const std::size_t N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  require(channel < C, "channel_mean: channel " + std::to_string(channel) + " out of range for " +
                           std::to_string(C) + " channels");
  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) total += simd::sum(x.data().subspan((n * C + channel) * P, P));
  const double count = static_cast<double>(N * P);
  return g.record(OpKind::channel_mean, {xv}, Tensor({1}, {total / count}),
                  [=](Graph& gr, std::span<const double> dout) {
                    auto dx = gr.grad_accumulator(xv);
                    const double d = dout[0] / count;
                    for (std::size_t n = 0; n < N; ++n)
                      for (std::size_t p = 0; p < P; ++p) dx[(n * C + channel) * P + p] += d;
                  });
}

Var resample(Graph& g, Var xv, const SamplingMap& map) {
  const Tensor& x = g.value(xv);
  require_rank(x, 4, "resample", "input");
  require(x.dim(2) == map.in_h && x.dim(3) == map.in_w,
          "resample: sampling map built for " + std::to_string(map.in_h) + "x" +
              std::to_string(map.in_w) + ", input is " + shape_str(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t Pin = map.in_h * map.in_w, Pout = map.out_h * map.out_w;
  require(map.index.size() == Pout && map.weight.size() == Pout, "resample: malformed sampling map");
  Tensor out({x.dim(0), x.dim(1), map.out_h, map.out_w});
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double* src = x.data().data() + pl * Pin;
    double* dst = out.data().data() + pl * Pout;
    for (std::size_t q = 0; q < Pout; ++q) {
      const auto& idx = map.index[q];
      const auto& wt = map.weight[q];
      dst[q] = wt[0] * src[idx[0]] + wt[1] * src[idx[1]] + wt[2] * src[idx[2]] + wt[3] * src[idx[3]];
    }
  }
  return g.record(OpKind::resample, {xv}, std::move(out),
                  [xv, map, planes, Pin, Pout](Graph& gr, std::span<const double> dout) {
                    auto dx = gr.grad_accumulator(xv);
                    for (std::size_t pl = 0; pl < planes; ++pl)
                      for (std::size_t q = 0; q < Pout; ++q) {
                        const double d = dout[pl * Pout + q];
                        for (int j = 0; j < 4; ++j)
                          dx[pl * Pin + map.index[q][j]] += map.weight[q][j] * d;
                      }
                  });
}

}  // namespace ediv::ops

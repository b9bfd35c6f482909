#include "snrs/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "snrs/error.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#endif

namespace snrs {
namespace {

[[noreturn]] void shape_error(const std::string& what) { throw Error(ErrorKind::kShapeMismatch, what); }

void expect_rank(const Tensor& t, std::size_t rank, const char* name) {
  if (t.rank() != rank) {
    shape_error(std::string(name) + " must have rank " + std::to_string(rank) + ", got " +
                shape_to_string(t.shape()));
  }
}

void expect_dim(std::size_t got, std::size_t want, const std::string& what) {
  if (got != want) {
    shape_error(what + " is " + std::to_string(got) + ", expected " + std::to_string(want));
  }
}

struct ConvDims {
  std::size_t c_in, h, w, c_out, kh, kw, out_h, out_w;
  // Outputs are computed on a "wide" grid with the input's row pitch so that
  // every kernel tap becomes one contiguous axpy of this length.
  std::size_t wide_len() const { return (out_h - 1) * w + out_w; }
  std::size_t plane() const { return h * w; }
};

ConvDims check_conv(const Tensor& input, const Tensor& weights, const ActiveTaps& taps) {
  expect_rank(input, 3, "conv input");
  expect_rank(weights, 4, "conv weights");
  if (taps.shape() != weights.shape()) {
    shape_error("mask shape " + shape_to_string(taps.shape()) + " differs from weight shape " +
                shape_to_string(weights.shape()));
  }
  ConvDims d{input.dim(0), input.dim(1), input.dim(2), weights.dim(0),
             weights.dim(2), weights.dim(3), 0, 0};
  expect_dim(weights.dim(1), d.c_in, "weights in_channels");
  if (d.kh > d.h) shape_error("kernel_h " + std::to_string(d.kh) + " exceeds input height " + std::to_string(d.h));
  if (d.kw > d.w) shape_error("kernel_w " + std::to_string(d.kw) + " exceeds input width " + std::to_string(d.w));
  d.out_h = d.h - d.kh + 1;
  d.out_w = d.w - d.kw + 1;
  return d;
}

struct Tap {
  std::size_t offset;  // into the source buffer
  std::size_t index;   // into the flattened weight tensor
  double weight;
};

// Resolves output channel o's active taps against the input geometry.
void resolve_taps(const ConvDims& d, const Tensor& weights, std::span<const ActiveTaps::Tap> active,
                  std::vector<Tap>& out) {
  out.resize(active.size());
  for (std::size_t k = 0; k < active.size(); ++k) {
    const auto& a = active[k];
    out[k] = {a.c * d.plane() + a.i * d.w + a.j, a.index, weights[a.index]};
  }
}

// dst[t] = fma(w_k, src_k[t], dst[t]) for each tap k in list order. Taps are
// applied four per pass but still one at a time per element, so every
// element sees exactly the tap order. The SIMD and scalar paths perform the
// same fused operations and agree bit for bit.
void accumulate_taps(double* __restrict dst, const double* base, const Tap* taps, std::size_t n,
                     std::size_t len) {
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const double w0 = taps[k].weight, w1 = taps[k + 1].weight, w2 = taps[k + 2].weight, w3 = taps[k + 3].weight;
    const double* s0 = base + taps[k].offset;
    const double* s1 = base + taps[k + 1].offset;
    const double* s2 = base + taps[k + 2].offset;
    const double* s3 = base + taps[k + 3].offset;
    std::size_t t = 0;
#if defined(__AVX512F__)
    const __m512d z0 = _mm512_set1_pd(w0), z1 = _mm512_set1_pd(w1);
    const __m512d z2 = _mm512_set1_pd(w2), z3 = _mm512_set1_pd(w3);
    for (; t + 8 <= len; t += 8) {
      __m512d a = _mm512_loadu_pd(dst + t);
      a = _mm512_fmadd_pd(z0, _mm512_loadu_pd(s0 + t), a);
      a = _mm512_fmadd_pd(z1, _mm512_loadu_pd(s1 + t), a);
      a = _mm512_fmadd_pd(z2, _mm512_loadu_pd(s2 + t), a);
      a = _mm512_fmadd_pd(z3, _mm512_loadu_pd(s3 + t), a);
      _mm512_storeu_pd(dst + t, a);
    }
#endif
#if defined(__AVX2__) && defined(__FMA__)
    const __m256d v0 = _mm256_set1_pd(w0), v1 = _mm256_set1_pd(w1);
    const __m256d v2 = _mm256_set1_pd(w2), v3 = _mm256_set1_pd(w3);
    for (; t + 4 <= len; t += 4) {
      __m256d a = _mm256_loadu_pd(dst + t);
      a = _mm256_fmadd_pd(v0, _mm256_loadu_pd(s0 + t), a);
      a = _mm256_fmadd_pd(v1, _mm256_loadu_pd(s1 + t), a);
      a = _mm256_fmadd_pd(v2, _mm256_loadu_pd(s2 + t), a);
      a = _mm256_fmadd_pd(v3, _mm256_loadu_pd(s3 + t), a);
      _mm256_storeu_pd(dst + t, a);
    }
#endif
    for (; t < len; ++t) {
      double a = dst[t];
      a = std::fma(w0, s0[t], a);
      a = std::fma(w1, s1[t], a);
      a = std::fma(w2, s2[t], a);
      a = std::fma(w3, s3[t], a);
      dst[t] = a;
    }
  }
  for (; k < n; ++k) {
    const double wv = taps[k].weight;
    const double* s = base + taps[k].offset;
    std::size_t t = 0;
#if defined(__AVX512F__)
    for (; t + 8 <= len; t += 8) {
      _mm512_storeu_pd(dst + t, _mm512_fmadd_pd(_mm512_set1_pd(wv), _mm512_loadu_pd(s + t), _mm512_loadu_pd(dst + t)));
    }
#endif
    for (; t < len; ++t) dst[t] = std::fma(wv, s[t], dst[t]);
  }
}

constexpr std::size_t kLanes = 16;

// For each tap k: out_grad[index_k] += scale * dot(grad, src_k), and with
// kInput also gin[offset_k + t] = fma(w_k, grad[t], gin[offset_k + t]).
// The dot accumulates element t into lane t % 16 and folds the lanes in
// halves (i with i + 8, then i + 4, i + 2, i + 1). Every path performs the
// same per-lane operations and agrees bit for bit.
template <bool kInput>
void backward_taps(const double* grad, const double* base, double* gin, const Tap* taps, std::size_t n,
                   std::size_t len, double scale, double* out_grad) {
  if (len == 1) {
    // One element lands in lane 0 and the fold only adds zeros.
    for (std::size_t k = 0; k < n; ++k) {
      const double x = base[taps[k].offset];
      out_grad[taps[k].index] += scale * std::fma(x, grad[0], 0.0);
      if constexpr (kInput) gin[taps[k].offset] = std::fma(taps[k].weight, grad[0], gin[taps[k].offset]);
    }
    return;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double* src = base + taps[k].offset;
    double* dst = kInput ? gin + taps[k].offset : nullptr;
    const double wv = taps[k].weight;
    alignas(64) double lanes[kLanes] = {};
    std::size_t t = 0;
#if defined(__AVX512F__)
    __m512d a0 = _mm512_setzero_pd(), a1 = a0;
    const __m512d w = _mm512_set1_pd(wv);
    auto step = [&](__m512d& acc, std::size_t u) {
      const __m512d g = _mm512_loadu_pd(grad + u);
      acc = _mm512_fmadd_pd(_mm512_loadu_pd(src + u), g, acc);
      if constexpr (kInput) _mm512_storeu_pd(dst + u, _mm512_fmadd_pd(w, g, _mm512_loadu_pd(dst + u)));
    };
    for (; t + kLanes <= len; t += kLanes) {
      step(a0, t);
      step(a1, t + 8);
    }
    if (t + 8 <= len) step(a0, t), t += 8;
    _mm512_store_pd(lanes, a0);
    _mm512_store_pd(lanes + 8, a1);
    // At most one 4-block remains; it lands in lanes t % 16 .. t % 16 + 3.
    if (t + 4 <= len) {
      const std::size_t q = t % kLanes;
      const __m256d g = _mm256_loadu_pd(grad + t);
      _mm256_store_pd(lanes + q, _mm256_fmadd_pd(_mm256_loadu_pd(src + t), g, _mm256_load_pd(lanes + q)));
      if constexpr (kInput) {
        _mm256_storeu_pd(dst + t, _mm256_fmadd_pd(_mm256_set1_pd(wv), g, _mm256_loadu_pd(dst + t)));
      }
      t += 4;
    }
#elif defined(__AVX2__) && defined(__FMA__)
    __m256d a0 = _mm256_setzero_pd(), a1 = a0, a2 = a0, a3 = a0;
    const __m256d w = _mm256_set1_pd(wv);
    auto step = [&](__m256d& acc, std::size_t u) {
      const __m256d g = _mm256_loadu_pd(grad + u);
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(src + u), g, acc);
      if constexpr (kInput) _mm256_storeu_pd(dst + u, _mm256_fmadd_pd(w, g, _mm256_loadu_pd(dst + u)));
    };
    for (; t + kLanes <= len; t += kLanes) {
      step(a0, t);
      step(a1, t + 4);
      step(a2, t + 8);
      step(a3, t + 12);
    }
    if (t + 4 <= len) step(a0, t), t += 4;
    if (t + 4 <= len) step(a1, t), t += 4;
    if (t + 4 <= len) step(a2, t), t += 4;
    _mm256_store_pd(lanes, a0);
    _mm256_store_pd(lanes + 4, a1);
    _mm256_store_pd(lanes + 8, a2);
    _mm256_store_pd(lanes + 12, a3);
#endif
    for (; t < len; ++t) {
      lanes[t % kLanes] = std::fma(src[t], grad[t], lanes[t % kLanes]);
      if constexpr (kInput) dst[t] = std::fma(wv, grad[t], dst[t]);
    }
    for (std::size_t h = kLanes / 2; h > 0; h /= 2) {
      for (std::size_t i = 0; i < h; ++i) lanes[i] += lanes[i + h];
    }
    out_grad[taps[k].index] += scale * lanes[0];
  }
}

}  // namespace

ActiveTaps::ActiveTaps(const Tensor& mask) : shape_(mask.shape()) {
  expect_rank(mask, 4, "mask");
  const std::size_t co = mask.dim(0), ci = mask.dim(1), kh = mask.dim(2), kw = mask.dim(3);
  start_.reserve(co + 1);
  std::size_t idx = 0;
  for (std::size_t o = 0; o < co; ++o) {
    start_.push_back(taps_.size());
    for (std::size_t c = 0; c < ci; ++c) {
      for (std::size_t i = 0; i < kh; ++i) {
        for (std::size_t j = 0; j < kw; ++j, ++idx) {
          const double m = mask[idx];
          if (m == 1.0) {
            taps_.push_back({static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(c),
                             static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
          } else if (m != 0.0) {
            throw Error(ErrorKind::kInvalidArgument, "mask values must be 0 or 1");
          }
        }
      }
    }
  }
  start_.push_back(taps_.size());
}

Tensor conv2d_masked(const Tensor& input, const Tensor& weights, const Tensor& mask,
                     const Tensor& bias) {
  if (mask.shape() != weights.shape()) {
    shape_error("mask shape " + shape_to_string(mask.shape()) + " differs from weight shape " +
                shape_to_string(weights.shape()));
  }
  return conv2d_masked(input, weights, ActiveTaps(mask), bias);
}

Tensor conv2d_masked(const Tensor& input, const Tensor& weights, const ActiveTaps& active,
                     const Tensor& bias) {
  const ConvDims d = check_conv(input, weights, active);
  expect_rank(bias, 1, "conv bias");
  expect_dim(bias.dim(0), d.c_out, "bias length");

  Tensor out({d.c_out, d.out_h, d.out_w});
  const std::size_t len = d.wide_len();
  if (len == 1) {
    // One output per channel: run four channels' chains side by side.
    const double* in = input.data().data();
    auto offset = [&](const ActiveTaps::Tap& a) { return a.c * d.plane() + a.i * d.w + a.j; };
    std::size_t o = 0;
    for (; o + 4 <= d.c_out; o += 4) {
      const std::span<const ActiveTaps::Tap> t[4] = {active.channel(o), active.channel(o + 1),
                                                     active.channel(o + 2), active.channel(o + 3)};
      double a[4] = {0.0, 0.0, 0.0, 0.0};
      const std::size_t common = std::min({t[0].size(), t[1].size(), t[2].size(), t[3].size()});
      for (std::size_t k = 0; k < common; ++k) {
        for (std::size_t q = 0; q < 4; ++q) a[q] = std::fma(weights[t[q][k].index], in[offset(t[q][k])], a[q]);
      }
      for (std::size_t q = 0; q < 4; ++q) {
        for (std::size_t k = common; k < t[q].size(); ++k) {
          a[q] = std::fma(weights[t[q][k].index], in[offset(t[q][k])], a[q]);
        }
        out[o + q] = a[q] + bias[o + q];
      }
    }
    for (; o < d.c_out; ++o) {
      double a = 0.0;
      for (const auto& tap : active.channel(o)) a = std::fma(weights[tap.index], in[offset(tap)], a);
      out[o] = a + bias[o];
    }
    return out;
  }
  std::vector<double> acc(len);
  std::vector<Tap> taps;
  for (std::size_t o = 0; o < d.c_out; ++o) {
    resolve_taps(d, weights, active.channel(o), taps);
    std::fill(acc.begin(), acc.end(), 0.0);
    accumulate_taps(acc.data(), input.data().data(), taps.data(), taps.size(), len);
    const double b = bias[o];
    for (std::size_t y = 0; y < d.out_h; ++y) {
      for (std::size_t x = 0; x < d.out_w; ++x) out.at(o, y, x) = acc[y * d.w + x] + b;
    }
  }
  return out;
}

ConvGradients conv2d_masked_backward(const Tensor& input, const Tensor& weights,
                                     const Tensor& mask, const Tensor& grad_out,
                                     bool want_input_grad) {
  if (mask.shape() != weights.shape()) {
    shape_error("mask shape " + shape_to_string(mask.shape()) + " differs from weight shape " +
                shape_to_string(weights.shape()));
  }
  return conv2d_masked_backward(input, weights, ActiveTaps(mask), grad_out, want_input_grad);
}

ConvGradients conv2d_masked_backward(const Tensor& input, const Tensor& weights,
                                     const ActiveTaps& active, const Tensor& grad_out,
                                     bool want_input_grad) {
  ConvGradients g;
  g.weights = Tensor(weights.shape());
  g.bias = Tensor({weights.dim(0)});
  if (want_input_grad) g.input = Tensor(input.shape());
  conv2d_masked_backward_accumulate(input, weights, active, grad_out, 1.0, g.weights, g.bias,
                                    want_input_grad ? &g.input : nullptr);
  return g;
}

void conv2d_masked_backward_accumulate(const Tensor& input, const Tensor& weights,
                                       const ActiveTaps& active, const Tensor& grad_out,
                                       double scale, Tensor& grad_weights, Tensor& grad_bias,
                                       Tensor* grad_input) {
  const ConvDims d = check_conv(input, weights, active);
  expect_rank(grad_out, 3, "conv grad_out");
  expect_dim(grad_out.dim(0), d.c_out, "grad_out channels");
  expect_dim(grad_out.dim(1), d.out_h, "grad_out height");
  expect_dim(grad_out.dim(2), d.out_w, "grad_out width");
  if (grad_weights.shape() != weights.shape()) shape_error("grad_weights shape differs from weights");
  if (grad_bias.shape() != Shape{d.c_out}) shape_error("grad_bias shape differs from bias");
  if (grad_input) {
    if (grad_input->shape() != input.shape()) shape_error("grad_input shape differs from input");
    grad_input->fill(0.0);
  }

  // grad_out on the wide grid, one row per output channel. Columns past the
  // valid width are zero, so they contribute nothing below.
  const std::size_t len = d.wide_len();
  const std::size_t pitch = len;
  std::vector<double> wide(d.c_out * pitch, 0.0);
  for (std::size_t o = 0; o < d.c_out; ++o) {
    double* row = wide.data() + o * pitch;
    double bsum = 0.0;
    for (std::size_t y = 0; y < d.out_h; ++y) {
      for (std::size_t x = 0; x < d.out_w; ++x) {
        const double v = grad_out.at(o, y, x);
        row[y * d.w + x] = v;
        bsum += v;
      }
    }
    grad_bias[o] += scale * bsum;
  }

  // grad_input[c][off + t] accumulates w * grad_o[t] with o outermost and
  // taps in row-major order for every input element.
  double* gin = grad_input ? grad_input->data().data() : nullptr;
  std::vector<Tap> taps;
  for (std::size_t o = 0; o < d.c_out; ++o) {
    resolve_taps(d, weights, active.channel(o), taps);
    const double* row = wide.data() + o * pitch;
    if (gin) {
      backward_taps<true>(row, input.data().data(), gin, taps.data(), taps.size(), len, scale,
                          grad_weights.data().data());
    } else {
      backward_taps<false>(row, input.data().data(), nullptr, taps.data(), taps.size(), len, scale,
                           grad_weights.data().data());
    }
  }
}

PoolResult maxpool2(const Tensor& input) {
  expect_rank(input, 3, "pool input");
  const std::size_t ch = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 != 0) shape_error("pool input height " + std::to_string(h) + " is odd");
  if (w % 2 != 0) shape_error("pool input width " + std::to_string(w) + " is odd");

  PoolResult r{Tensor({ch, h / 2, w / 2}), {}};
  r.argmax.resize(r.output.size());
  std::size_t k = 0;
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y = 0; y < h / 2; ++y) {
      for (std::size_t x = 0; x < w / 2; ++x, ++k) {
        std::size_t best = (c * h + 2 * y) * w + 2 * x;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (c * h + 2 * y + dy) * w + 2 * x + dx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        r.output[k] = input[best];
        r.argmax[k] = best;
      }
    }
  }
  return r;
}

Tensor maxpool2_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                         const Tensor& grad_out) {
  if (argmax.size() != grad_out.size()) {
    shape_error("argmax holds " + std::to_string(argmax.size()) + " indices for " +
                std::to_string(grad_out.size()) + " gradients");
  }
  Tensor g(input_shape);
  for (std::size_t k = 0; k < argmax.size(); ++k) {
    if (argmax[k] >= g.size()) shape_error("argmax index out of range");
    g[argmax[k]] += grad_out[k];
  }
  return g;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  if (input.shape() != grad_out.shape()) {
    shape_error("relu grad_out shape " + shape_to_string(grad_out.shape()) + " vs input " +
                shape_to_string(input.shape()));
  }
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  return g;
}

Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  expect_rank(weights, 2, "dense weights");
  expect_rank(bias, 1, "dense bias");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  expect_dim(input.size(), n, "dense input length");
  expect_dim(bias.dim(0), m, "dense bias length");
  Tensor out({m});
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += weights[r * n + k] * input[k];
    out[r] = s + bias[r];
  }
  return out;
}

DenseGradients fully_connected_backward(const Tensor& input, const Tensor& weights,
                                        const Tensor& grad_out) {
  expect_rank(weights, 2, "dense weights");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  expect_dim(input.size(), n, "dense input length");
  expect_dim(grad_out.size(), m, "dense grad_out length");
  DenseGradients g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({m})};
  for (std::size_t r = 0; r < m; ++r) {
    const double go = grad_out[r];
    g.bias[r] = go;
    for (std::size_t k = 0; k < n; ++k) {
      g.weights[r * n + k] = go * input[k];
      g.input[k] += weights[r * n + k] * go;
    }
  }
  return g;
}

Tensor softmax(const Tensor& logits) {
  if (logits.size() == 0) shape_error("softmax of empty tensor");
  const double mx = *std::max_element(logits.data().begin(), logits.data().end());
  Tensor p(logits.shape());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (std::size_t i = 0; i < p.size(); ++i) p[i] /= z;
  return p;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::size_t true_class) {
  if (logits.size() < 2) shape_error("softmax cross-entropy needs at least 2 classes");
  if (true_class >= logits.size()) {
    throw Error(ErrorKind::kInvalidArgument, "class index " + std::to_string(true_class) +
                                                 " out of range for " + std::to_string(logits.size()) +
                                                 " logits");
  }
  const double mx = *std::max_element(logits.data().begin(), logits.data().end());
  double z = 0.0;
  for (double v : logits.data()) z += std::exp(v - mx);
  LossResult r;
  r.loss = std::log(z) - (logits[true_class] - mx);
  r.grad_logits = Tensor(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) r.grad_logits[i] = std::exp(logits[i] - mx) / z;
  r.grad_logits[true_class] -= 1.0;
  return r;
}

}  // namespace snrs

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "snrs/tensor.hpp"

namespace snrs {

/// Valid-padding, stride-1 convolution geometry.
struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;

  std::size_t out_h(std::size_t in_h) const { return in_h - kernel_h + 1; }
  std::size_t out_w(std::size_t in_w) const { return in_w - kernel_w + 1; }
  std::size_t weight_count() const { return out_channels * in_channels * kernel_h * kernel_w; }
  Shape weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }
};

/// Active (mask == 1) weight positions of a [out, in, kh, kw] mask, grouped
/// by output channel in row-major order. Depends only on the mask, so layers
/// with a frozen mask build it once.
class ActiveTaps {
 public:
  struct Tap {
    std::uint32_t index;  // flat weight index
    std::uint32_t c, i, j;
  };

  ActiveTaps() = default;
  explicit ActiveTaps(const Tensor& mask);  // throws unless values are 0 or 1

  const Shape& shape() const noexcept { return shape_; }
  std::span<const Tap> channel(std::size_t o) const {
    return std::span(taps_).subspan(start_[o], start_[o + 1] - start_[o]);
  }
  std::size_t count() const noexcept { return taps_.size(); }

 private:
  Shape shape_;
  std::vector<Tap> taps_;
  std::vector<std::size_t> start_;
};

// Masked convolution. The effective kernel is weights * mask; the bias is
// never masked. Each output element is accumulated with fused multiply-adds
// over (c, i, j) in row-major order starting from zero, and the bias is
// added last.
Tensor conv2d_masked(const Tensor& input, const Tensor& weights, const Tensor& mask,
                     const Tensor& bias);
Tensor conv2d_masked(const Tensor& input, const Tensor& weights, const ActiveTaps& taps,
                     const Tensor& bias);

struct ConvGradients {
  Tensor input;  // empty when not requested
  Tensor weights;
  Tensor bias;
};

ConvGradients conv2d_masked_backward(const Tensor& input, const Tensor& weights,
                                     const Tensor& mask, const Tensor& grad_out,
                                     bool want_input_grad = true);
ConvGradients conv2d_masked_backward(const Tensor& input, const Tensor& weights,
                                     const ActiveTaps& taps, const Tensor& grad_out,
                                     bool want_input_grad = true);

/// Adds scale * (weight and bias gradients) into the given accumulators,
/// touching only active weight slots. grad_input, when given, is overwritten.
void conv2d_masked_backward_accumulate(const Tensor& input, const Tensor& weights,
                                       const ActiveTaps& taps, const Tensor& grad_out,
                                       double scale, Tensor& grad_weights, Tensor& grad_bias,
                                       Tensor* grad_input);

struct PoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

/// Disjoint 2x2 max-pooling. Ties resolve to the first element in row-major
/// window order.
PoolResult maxpool2(const Tensor& input);
Tensor maxpool2_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                         const Tensor& grad_out);

Tensor relu(const Tensor& input);
/// The derivative at exactly zero is taken as zero.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGradients {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

DenseGradients fully_connected_backward(const Tensor& input, const Tensor& weights,
                                        const Tensor& grad_out);

Tensor softmax(const Tensor& logits);

struct LossResult {
  double loss = 0.0;
  Tensor grad_logits;
};

/// -log softmax(logits)[true_class], stabilized by subtracting the max logit.
LossResult softmax_cross_entropy(const Tensor& logits, std::size_t true_class);

}  // namespace snrs

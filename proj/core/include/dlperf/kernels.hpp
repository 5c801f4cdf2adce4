#pragma once

#include <span>
#include <vector>

#include "dlperf/tensor.hpp"

namespace dlperf {

// Convolution hyperparameters. Output side length is
// floor((H + 2*pad - kernel_h) / stride) + 1 and must be >= 1.
struct ConvParams {
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int pad = 0;
  int in_channels = 0;
  int out_channels = 0;
};

// Throws ShapeError (naming the offending dimension) unless the input/weight
// shapes are consistent with p and the output dims are positive.
std::vector<int64_t> conv2d_output_shape(const std::vector<int64_t>& input_shape,
                                         const ConvParams& p);

// input N x C x H x W, weights K x C x kh x kw, bias K -> N x K x H' x W'.
// Cross-correlation with zero padding.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvParams& p);

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                          const ConvParams& p);

struct PoolResult {
  Tensor output;
  // Flat input index of the selected element per output element; ties go to
  // the first element in row-major window order. Padded cells never win.
  std::vector<int64_t> argmax;
};
PoolResult maxpool2d_forward(const Tensor& input, int window, int stride, int pad = 0);
Tensor maxpool2d_backward(const Tensor& grad_out, const std::vector<int64_t>& argmax,
                          const std::vector<int64_t>& input_shape);

Tensor avgpool2d_forward(const Tensor& input, int window, int stride);
Tensor avgpool2d_backward(const Tensor& grad_out, const std::vector<int64_t>& input_shape,
                          int window, int stride);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

// input N x D, weights D x M, bias M -> N x M.
Tensor fc_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
struct FcGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
FcGrads fc_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights);

// Across-channel response normalization:
//   b[c] = a[c] / (k + (alpha/n) * sum_{j in win(c)} a[j]^2)^beta
// win(c) spans n channels centered on c, clamped at the channel edges; the
// alpha/n divisor always uses the nominal n.
struct LrnParams {
  double k = 2.0;
  int n = 5;
  double alpha = 1e-4;
  double beta = 0.75;
};
Tensor lrn_forward(const Tensor& input, const LrnParams& p);
Tensor lrn_backward(const Tensor& grad_out, const Tensor& input, const LrnParams& p);

// logits N x C -> row-stochastic probabilities, computed with max
// subtraction. Throws on non-finite input.
Tensor softmax(const Tensor& logits);

// Mean over the batch of -log(probs[label]); labels must lie in [0, C).
double cross_entropy(const Tensor& probs, std::span<const int> labels);

}  // namespace dlperf

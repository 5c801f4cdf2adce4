#include "dlperf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dlperf/gemm.hpp"

namespace dlperf {
namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

int64_t out_side(int64_t in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace

std::vector<int64_t> conv2d_output_shape(const std::vector<int64_t>& s, const ConvParams& p) {
  require(s.size() == 4, "conv2d input must be rank 4, got " + shape_to_string(s));
  require(p.stride >= 1, "conv2d stride must be >= 1");
  require(p.pad >= 0, "conv2d pad must be >= 0");
  require(s[1] == p.in_channels, "conv2d input channel dim " + std::to_string(s[1]) +
                                     " != in_channels " + std::to_string(p.in_channels));
  require(s[2] + 2 * p.pad >= p.kernel_h,
          "conv2d input height " + std::to_string(s[2]) + " too small for kernel_h " +
              std::to_string(p.kernel_h) + " with pad " + std::to_string(p.pad));
  require(s[3] + 2 * p.pad >= p.kernel_w,
          "conv2d input width " + std::to_string(s[3]) + " too small for kernel_w " +
              std::to_string(p.kernel_w) + " with pad " + std::to_string(p.pad));
  const int64_t oh = out_side(s[2], p.kernel_h, p.stride, p.pad);
  const int64_t ow = out_side(s[3], p.kernel_w, p.stride, p.pad);
  require(oh >= 1, "conv2d output height not positive");
  require(ow >= 1, "conv2d output width not positive");
  return {s[0], p.out_channels, oh, ow};
}

namespace {

void check_conv_args(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     const ConvParams& p) {
  require(weights.rank() == 4, "conv2d weights must be rank 4, got " + weights.shape_str());
  require(weights.dim(0) == p.out_channels,
          "conv2d weights dim 0 (" + std::to_string(weights.dim(0)) + ") != out_channels " +
              std::to_string(p.out_channels));
  require(weights.dim(1) == p.in_channels,
          "conv2d weights dim 1 (" + std::to_string(weights.dim(1)) + ") != in_channels " +
              std::to_string(p.in_channels));
  require(weights.dim(2) == p.kernel_h && weights.dim(3) == p.kernel_w,
          "conv2d weights spatial dims " + weights.shape_str() + " != kernel " +
              std::to_string(p.kernel_h) + "x" + std::to_string(p.kernel_w));
  require(bias.rank() == 1 && bias.dim(0) == p.out_channels,
          "conv2d bias must be [out_channels], got " + bias.shape_str());
  (void)input;
}

// Gathers sliding windows into a row-major patch matrix:
// rows = N*OH*OW, cols = C*kh*kw. Out-of-bounds taps read as zero.
void im2col(const Tensor& input, const ConvParams& p, int64_t oh, int64_t ow, double* patches) {
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t cols = c * p.kernel_h * p.kernel_w;
  const double* src = input.data();
#pragma omp parallel for schedule(static)
  for (int64_t row = 0; row < n * oh * ow; ++row) {
    const int64_t x = row % ow;
    const int64_t y = (row / ow) % oh;
    const int64_t img = row / (ow * oh);
    double* dst = patches + row * cols;
    const int64_t y0 = y * p.stride - p.pad;
    const int64_t x0 = x * p.stride - p.pad;
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* plane = src + (img * c + ch) * h * w;
      for (int ky = 0; ky < p.kernel_h; ++ky) {
        const int64_t yy = y0 + ky;
        for (int kx = 0; kx < p.kernel_w; ++kx) {
          const int64_t xx = x0 + kx;
          *dst++ = (yy >= 0 && yy < h && xx >= 0 && xx < w) ? plane[yy * w + xx] : 0.0;
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvParams& p) {
  const auto out_shape = conv2d_output_shape(input.shape(), p);
  check_conv_args(input, weights, bias, p);

  const int64_t n = input.dim(0), k = p.out_channels;
  const int64_t oh = out_shape[2], ow = out_shape[3];
  const int64_t rows = n * oh * ow;
  const int64_t cols = static_cast<int64_t>(p.in_channels) * p.kernel_h * p.kernel_w;

  std::vector<double> patches(static_cast<size_t>(rows * cols));
  im2col(input, p, oh, ow, patches.data());

  std::vector<double> out_mat(static_cast<size_t>(rows * k));
  matmul_nt(patches.data(), weights.data(), out_mat.data(), rows, cols, k);

  Tensor out(out_shape);
  double* dst = out.data();
  const double* b = bias.data();
#pragma omp parallel for schedule(static)
  for (int64_t img = 0; img < n; ++img) {
    for (int64_t ch = 0; ch < k; ++ch) {
      const double bv = b[ch];
      for (int64_t px = 0; px < oh * ow; ++px) {
        dst[(img * k + ch) * oh * ow + px] = out_mat[(img * oh * ow + px) * k + ch] + bv;
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                          const ConvParams& p) {
  const auto out_shape = conv2d_output_shape(input.shape(), p);
  require(grad_out.shape() == out_shape, "conv2d grad_out shape " + grad_out.shape_str() +
                                             " != expected " + shape_to_string(out_shape));
  require(weights.rank() == 4 && weights.dim(0) == p.out_channels &&
              weights.dim(1) == p.in_channels && weights.dim(2) == p.kernel_h &&
              weights.dim(3) == p.kernel_w,
          "conv2d weights shape " + weights.shape_str() + " inconsistent with params");

  const int64_t n = input.dim(0), k = p.out_channels;
  const int64_t oh = out_shape[2], ow = out_shape[3];
  const int64_t rows = n * oh * ow;
  const int64_t cols = static_cast<int64_t>(p.in_channels) * p.kernel_h * p.kernel_w;

  // grad_out rearranged to rows x K.
  std::vector<double> gmat(static_cast<size_t>(rows * k));
  const double* gsrc = grad_out.data();
#pragma omp parallel for schedule(static)
  for (int64_t img = 0; img < n; ++img) {
    for (int64_t ch = 0; ch < k; ++ch) {
      for (int64_t px = 0; px < oh * ow; ++px) {
        gmat[(img * oh * ow + px) * k + ch] = gsrc[(img * k + ch) * oh * ow + px];
      }
    }
  }

  std::vector<double> patches(static_cast<size_t>(rows * cols));
  im2col(input, p, oh, ow, patches.data());

  ConvGrads grads;
  grads.weights = Tensor(weights.shape());
  matmul_tn(gmat.data(), patches.data(), grads.weights.data(), k, rows, cols);

  grads.bias = Tensor({k});
  for (int64_t ch = 0; ch < k; ++ch) {
    double acc = 0.0;
    for (int64_t r = 0; r < rows; ++r) acc += gmat[r * k + ch];
    grads.bias[ch] = acc;
  }

  // grad wrt patches, then scatter-add back (col2im). Parallel over images:
  // windows of one image may overlap, so the within-image order stays fixed.
  std::vector<double> gpatches(static_cast<size_t>(rows * cols));
  matmul(gmat.data(), weights.data(), gpatches.data(), rows, k, cols);

  grads.input = Tensor(input.shape());
  const int64_t c = input.dim(1), h = input.dim(2), w = input.dim(3);
  double* gin = grads.input.data();
#pragma omp parallel for schedule(static)
  for (int64_t img = 0; img < n; ++img) {
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t x = 0; x < ow; ++x) {
        const int64_t row = (img * oh + y) * ow + x;
        const double* src = gpatches.data() + row * cols;
        const int64_t y0 = y * p.stride - p.pad;
        const int64_t x0 = x * p.stride - p.pad;
        for (int64_t ch = 0; ch < c; ++ch) {
          double* plane = gin + (img * c + ch) * h * w;
          for (int ky = 0; ky < p.kernel_h; ++ky) {
            const int64_t yy = y0 + ky;
            for (int kx = 0; kx < p.kernel_w; ++kx) {
              const int64_t xx = x0 + kx;
              if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
                plane[yy * w + xx] += src[(ch * p.kernel_h + ky) * p.kernel_w + kx];
              }
            }
          }
        }
      }
    }
  }
  return grads;
}

PoolResult maxpool2d_forward(const Tensor& input, int window, int stride, int pad) {
  require(input.rank() == 4, "maxpool input must be rank 4, got " + input.shape_str());
  require(window >= 1 && stride >= 1, "maxpool window and stride must be >= 1");
  require(pad >= 0 && pad < window, "maxpool pad must be in [0, window)");
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  require(window <= h + 2 * pad && window <= w + 2 * pad,
          "maxpool window " + std::to_string(window) + " larger than padded input " +
              input.shape_str());
  const int64_t oh = out_side(h, window, stride, pad);
  const int64_t ow = out_side(w, window, stride, pad);
  require(oh >= 1 && ow >= 1, "maxpool output not positive");

  PoolResult res;
  res.output = Tensor({n, c, oh, ow});
  res.argmax.assign(static_cast<size_t>(n * c * oh * ow), -1);
  const double* src = input.data();
  double* dst = res.output.data();
  int64_t* amax = res.argmax.data();
#pragma omp parallel for schedule(static)
  for (int64_t plane = 0; plane < n * c; ++plane) {
    const double* in_plane = src + plane * h * w;
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t x = 0; x < ow; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        int64_t best_idx = -1;
        for (int ky = 0; ky < window; ++ky) {
          const int64_t yy = y * stride - pad + ky;
          if (yy < 0 || yy >= h) continue;
          for (int kx = 0; kx < window; ++kx) {
            const int64_t xx = x * stride - pad + kx;
            if (xx < 0 || xx >= w) continue;
            const double v = in_plane[yy * w + xx];
            if (v > best) {
              best = v;
              best_idx = plane * h * w + yy * w + xx;
            }
          }
        }
        dst[(plane * oh + y) * ow + x] = best;
        amax[(plane * oh + y) * ow + x] = best_idx;
      }
    }
  }
  return res;
}

Tensor maxpool2d_backward(const Tensor& grad_out, const std::vector<int64_t>& argmax,
                          const std::vector<int64_t>& input_shape) {
  require(static_cast<int64_t>(argmax.size()) == grad_out.size(),
          "maxpool argmax length != grad_out size");
  Tensor grad_in(input_shape);
  const double* g = grad_out.data();
  double* dst = grad_in.data();
  for (int64_t i = 0; i < grad_out.size(); ++i) {
    dst[argmax[static_cast<size_t>(i)]] += g[i];
  }
  return grad_in;
}

Tensor avgpool2d_forward(const Tensor& input, int window, int stride) {
  require(input.rank() == 4, "avgpool input must be rank 4, got " + input.shape_str());
  require(window >= 1 && stride >= 1, "avgpool window and stride must be >= 1");
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  require(window <= h && window <= w,
          "avgpool window " + std::to_string(window) + " larger than input " + input.shape_str());
  const int64_t oh = out_side(h, window, stride, 0);
  const int64_t ow = out_side(w, window, stride, 0);
  Tensor out({n, c, oh, ow});
  const double inv = 1.0 / (static_cast<double>(window) * window);
  const double* src = input.data();
  double* dst = out.data();
  for (int64_t plane = 0; plane < n * c; ++plane) {
    const double* in_plane = src + plane * h * w;
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int ky = 0; ky < window; ++ky) {
          for (int kx = 0; kx < window; ++kx) {
            acc += in_plane[(y * stride + ky) * w + (x * stride + kx)];
          }
        }
        dst[(plane * oh + y) * ow + x] = acc * inv;
      }
    }
  }
  return out;
}

Tensor avgpool2d_backward(const Tensor& grad_out, const std::vector<int64_t>& input_shape,
                          int window, int stride) {
  Tensor grad_in(input_shape);
  const int64_t h = input_shape[2], w = input_shape[3];
  const int64_t oh = grad_out.dim(2), ow = grad_out.dim(3);
  const int64_t planes = input_shape[0] * input_shape[1];
  const double inv = 1.0 / (static_cast<double>(window) * window);
  const double* g = grad_out.data();
  double* dst = grad_in.data();
  for (int64_t plane = 0; plane < planes; ++plane) {
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t x = 0; x < ow; ++x) {
        const double gv = g[(plane * oh + y) * ow + x] * inv;
        for (int ky = 0; ky < window; ++ky) {
          for (int kx = 0; kx < window; ++kx) {
            dst[plane * h * w + (y * stride + ky) * w + (x * stride + kx)] += gv;
          }
        }
      }
    }
  }
  return grad_in;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  const double* src = input.data();
  double* dst = out.data();
  for (int64_t i = 0; i < input.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
  require(grad_out.same_shape(input), "relu grad_out shape " + grad_out.shape_str() +
                                          " != input shape " + input.shape_str());
  Tensor grad_in(input.shape());
  const double* g = grad_out.data();
  const double* src = input.data();
  double* dst = grad_in.data();
  for (int64_t i = 0; i < input.size(); ++i) dst[i] = src[i] > 0.0 ? g[i] : 0.0;
  return grad_in;
}

Tensor fc_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require(input.rank() == 2, "fc input must be rank 2, got " + input.shape_str());
  require(weights.rank() == 2, "fc weights must be rank 2, got " + weights.shape_str());
  require(input.dim(1) == weights.dim(0), "fc input feature dim " + std::to_string(input.dim(1)) +
                                              " != weights dim 0 " +
                                              std::to_string(weights.dim(0)));
  require(bias.rank() == 1 && bias.dim(0) == weights.dim(1),
          "fc bias must be [out_features], got " + bias.shape_str());
  const int64_t n = input.dim(0), d = input.dim(1), m = weights.dim(1);
  Tensor out({n, m});
  matmul(input.data(), weights.data(), out.data(), n, d, m);
  double* dst = out.data();
  const double* b = bias.data();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < m; ++j) dst[i * m + j] += b[j];
  }
  return out;
}

FcGrads fc_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights) {
  require(grad_out.rank() == 2 && grad_out.dim(0) == input.dim(0) &&
              grad_out.dim(1) == weights.dim(1),
          "fc grad_out shape " + grad_out.shape_str() + " inconsistent with input " +
              input.shape_str() + " and weights " + weights.shape_str());
  const int64_t n = input.dim(0), d = input.dim(1), m = weights.dim(1);
  FcGrads grads;
  grads.input = Tensor({n, d});
  matmul_nt(grad_out.data(), weights.data(), grads.input.data(), n, m, d);
  grads.weights = Tensor({d, m});
  matmul_tn(input.data(), grad_out.data(), grads.weights.data(), d, n, m);
  grads.bias = Tensor({m});
  const double* g = grad_out.data();
  for (int64_t j = 0; j < m; ++j) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += g[i * m + j];
    grads.bias[j] = acc;
  }
  return grads;
}

namespace {

inline double lrn_denom(const double* chans, int64_t c_count, int64_t c, const LrnParams& p,
                        int64_t plane_stride, int64_t px) {
  const int64_t half = p.n / 2;
  const int64_t lo = std::max<int64_t>(0, c - half);
  const int64_t hi = std::min<int64_t>(c_count - 1, c + half);
  double ssq = 0.0;
  for (int64_t j = lo; j <= hi; ++j) {
    const double v = chans[j * plane_stride + px];
    ssq += v * v;
  }
  return p.k + (p.alpha / p.n) * ssq;
}

}  // namespace

Tensor lrn_forward(const Tensor& input, const LrnParams& p) {
  require(input.rank() == 4, "lrn input must be rank 4, got " + input.shape_str());
  require(p.n >= 1, "lrn window must be >= 1");
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t plane = h * w;
  Tensor out(input.shape());
  const double* src = input.data();
  double* dst = out.data();
#pragma omp parallel for schedule(static)
  for (int64_t img = 0; img < n; ++img) {
    const double* chans = src + img * c * plane;
    double* ochans = dst + img * c * plane;
    for (int64_t ch = 0; ch < c; ++ch) {
      for (int64_t px = 0; px < plane; ++px) {
        const double d = lrn_denom(chans, c, ch, p, plane, px);
        ochans[ch * plane + px] = chans[ch * plane + px] * std::pow(d, -p.beta);
      }
    }
  }
  return out;
}

Tensor lrn_backward(const Tensor& grad_out, const Tensor& input, const LrnParams& p) {
  require(grad_out.same_shape(input), "lrn grad_out shape " + grad_out.shape_str() +
                                          " != input shape " + input.shape_str());
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t plane = h * w;
  const int64_t half = p.n / 2;
  Tensor grad_in(input.shape());
  const double* src = input.data();
  const double* g = grad_out.data();
  double* dst = grad_in.data();
#pragma omp parallel for schedule(static)
  for (int64_t img = 0; img < n; ++img) {
    const double* a = src + img * c * plane;
    const double* go = g + img * c * plane;
    double* gi = dst + img * c * plane;
    for (int64_t px = 0; px < plane; ++px) {
      // d_i = k + (alpha/n) * sum win(i) a_j^2 ; b_i = a_i d_i^-beta
      // db_i/da_j = delta_ij d_i^-beta - 2 beta (alpha/n) a_i a_j d_i^-(beta+1) [j in win(i)]
      for (int64_t j = 0; j < c; ++j) {
        double acc = 0.0;
        const int64_t lo = std::max<int64_t>(0, j - half);
        const int64_t hi = std::min<int64_t>(c - 1, j + half);
        for (int64_t i = lo; i <= hi; ++i) {
          const double d = lrn_denom(a, c, i, p, plane, px);
          const double dpow = std::pow(d, -p.beta);
          double term = 0.0;
          if (i == j) term += dpow;
          term -= 2.0 * p.beta * (p.alpha / p.n) * a[i * plane + px] * a[j * plane + px] *
                  dpow / d;
          acc += go[i * plane + px] * term;
        }
        gi[j * plane + px] = acc;
      }
    }
  }
  return grad_in;
}

Tensor softmax(const Tensor& logits) {
  require(logits.rank() == 2, "softmax input must be rank 2, got " + logits.shape_str());
  const int64_t n = logits.dim(0), c = logits.dim(1);
  Tensor out(logits.shape());
  const double* src = logits.data();
  double* dst = out.data();
  for (int64_t i = 0; i < n; ++i) {
    const double* row = src + i * c;
    double mx = row[0];
    for (int64_t j = 0; j < c; ++j) {
      if (!std::isfinite(row[j])) {
        throw std::invalid_argument("softmax: non-finite logit at row " + std::to_string(i) +
                                    " col " + std::to_string(j));
      }
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      const double e = std::exp(row[j] - mx);
      dst[i * c + j] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int64_t j = 0; j < c; ++j) dst[i * c + j] *= inv;
  }
  return out;
}

double cross_entropy(const Tensor& probs, std::span<const int> labels) {
  require(probs.rank() == 2, "cross_entropy probs must be rank 2, got " + probs.shape_str());
  require(static_cast<int64_t>(labels.size()) == probs.dim(0),
          "cross_entropy labels length " + std::to_string(labels.size()) + " != batch " +
              std::to_string(probs.dim(0)));
  const int64_t n = probs.dim(0), c = probs.dim(1);
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const int label = labels[static_cast<size_t>(i)];
    if (label < 0 || label >= c) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " at row " +
                              std::to_string(i) + " outside [0, " + std::to_string(c) + ")");
    }
    acc += -std::log(probs.data()[i * c + label]);
  }
  return acc / static_cast<double>(n);
}

}  // namespace dlperf

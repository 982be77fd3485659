#pragma once

#include <cstddef>
#include <vector>

#include "erpgan/nn/tensor.hpp"
#include "erpgan/rng.hpp"

// Differentiable primitives. Spatial ops work on batched 4-axis tensors
// (batch, rows, time, features); the feature axis is innermost.
namespace erpgan::nn::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// x (N, in) times w (in, out) plus b (out).
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

/// "Same"-padded stride-1 convolution over the rows/time axes.
/// x (N, R, T, Fi), w (KR, KT, Fi, Fo), b (Fo). For even kernels the extra
/// padding goes to the high end, matching the usual framework convention.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);

/// Inverted dropout: zeroes each entry with probability `rate` and scales the
/// survivors by 1 / (1 - rate).
Tensor dropout(const Tensor& x, double rate, Rng& rng);

/// Non-overlapping max pooling; floors extents that do not divide evenly.
Tensor maxpool2d(const Tensor& x, std::size_t pool_rows, std::size_t pool_time);
/// Nearest-neighbour repetition.
Tensor upsample2d(const Tensor& x, std::size_t factor_rows, std::size_t factor_time);
Tensor zeropad2d(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
                 std::size_t right);

/// out.shape[i] = x.shape[axes[i]].
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& x, Shape shape);
/// Stacks a and b along the batch axis; trailing extents must agree.
Tensor concat_rows(const Tensor& a, const Tensor& b);
/// Batch rows [begin, end).
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);

/// Batch normalization over every axis but the last, using batch statistics.
/// The biased batch mean/variance are written to the optional outputs.
Tensor batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                       std::vector<double>* batch_mean = nullptr,
                       std::vector<double>* batch_var = nullptr);
Tensor batchnorm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const std::vector<double>& running_mean,
                       const std::vector<double>& running_var, double eps);

/// Probabilities are clamped to [margin, 1 - margin] before the log.
inline constexpr double kProbabilityMargin = 1e-7;

/// Mean binary cross-entropy. Throws DomainError for predictions outside [0, 1].
Tensor bce(const Tensor& prediction, const Tensor& target);
/// Mean over rows of -sum_k target_k log p_k for (N, K) probability rows.
Tensor categorical_ce(const Tensor& prediction, const Tensor& target);
/// Mean squared elementwise difference.
Tensor mse(const Tensor& prediction, const Tensor& target);

}  // namespace erpgan::nn::ops

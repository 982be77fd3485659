#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "erpgan/nn/tensor.hpp"
#include "erpgan/rng.hpp"

namespace erpgan::nn {

enum class Mode { train, infer };

enum class LayerKind {
  dense,
  conv2d,
  batchnorm,
  relu,
  leaky_relu,
  sigmoid,
  softmax,
  dropout,
  maxpool,
  upsample,
  zeropad,
  permute,
  reshape,
  flatten,
  linear,  // identity activation
};

std::string_view kind_name(LayerKind kind);
LayerKind kind_from_name(std::string_view name);
bool is_trainable(LayerKind kind);

/// Kind plus kind-specific hyperparameters. All shapes and axes refer to a
/// single sample; the batch axis is implicit.
struct LayerSpec {
  LayerKind kind = LayerKind::linear;
  std::size_t units = 0;                        // dense
  std::size_t features = 0;                     // conv2d output feature maps
  std::array<std::size_t, 2> kernel{3, 3};      // conv2d (rows, time)
  std::array<std::size_t, 2> factor{1, 1};      // maxpool / upsample (rows, time)
  std::array<std::size_t, 4> pad{0, 0, 0, 0};   // zeropad (top, bottom, left, right)
  std::vector<std::size_t> axes;                // permute
  Shape target;                                 // reshape
  double rate = 0.0;                            // dropout
  double slope = 0.2;                           // leaky_relu
  std::size_t axis = 0;                         // softmax
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;

  static LayerSpec dense(std::size_t units);
  static LayerSpec conv2d(std::size_t features, std::size_t kernel_rows, std::size_t kernel_time);
  static LayerSpec batchnorm();
  static LayerSpec relu();
  static LayerSpec leaky_relu(double slope);
  static LayerSpec sigmoid();
  static LayerSpec softmax(std::size_t axis);
  static LayerSpec dropout(double rate);
  static LayerSpec maxpool(std::size_t rows, std::size_t time);
  static LayerSpec upsample(std::size_t rows, std::size_t time);
  static LayerSpec zeropad(std::size_t top, std::size_t bottom, std::size_t left, std::size_t right);
  static LayerSpec permute(std::vector<std::size_t> axes);
  static LayerSpec reshape(Shape target);
  static LayerSpec flatten();
  static LayerSpec linear();

  /// Throws ConfigError for out-of-range hyperparameters.
  void validate() const;
};

/// Deterministic per-sample output shape; throws ShapeError naming the layer
/// and the offending input shape.
Shape output_shape(const LayerSpec& spec, const Shape& input);

/// Trainable tensor with its Adam state.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  Parameter(std::string name, Tensor value);
};

/// A layer instantiated for a concrete input shape.
class Layer {
 public:
  /// Weights ~ N(0, 0.02^2), biases zero, batchnorm gamma one / beta zero.
  Layer(LayerSpec spec, Shape input_shape, const std::string& name, Rng& init_rng);

  const LayerSpec& spec() const { return spec_; }
  const std::string& name() const { return name_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }

  /// `x` is batched: (N, input_shape...). Running statistics are only
  /// updated in train mode when `update_stats` is set.
  Tensor forward(const Tensor& x, Mode mode, Rng& rng, bool update_stats = true);

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  std::vector<double>& running_mean() { return running_mean_; }
  std::vector<double>& running_var() { return running_var_; }
  const std::vector<double>& running_mean() const { return running_mean_; }
  const std::vector<double>& running_var() const { return running_var_; }

 private:
  LayerSpec spec_;
  std::string name_;
  Shape input_shape_;
  Shape output_shape_;
  std::vector<Parameter> params_;
  std::vector<double> running_mean_;
  std::vector<double> running_var_;
};

struct TraceRow {
  LayerKind kind;
  Shape shape;
};

/// Ordered layer stack.
class Sequential {
 public:
  Sequential() = default;
  Sequential(const std::vector<LayerSpec>& specs, Shape input_shape, const std::string& prefix,
             Rng& init_rng);

  Tensor forward(const Tensor& x, Mode mode, Rng& rng, bool update_stats = true);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const;
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<TraceRow> trace() const;
  std::vector<Parameter*> parameters();

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
};

}  // namespace erpgan::nn

#include "erpgan/nn/layer.hpp"

#include <algorithm>
#include <array>

#include "erpgan/error.hpp"
#include "erpgan/nn/ops.hpp"

namespace erpgan::nn {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 15> kKindNames{{
    {LayerKind::dense, "dense"},
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::batchnorm, "batchnorm"},
    {LayerKind::relu, "relu"},
    {LayerKind::leaky_relu, "leaky_relu"},
    {LayerKind::sigmoid, "sigmoid"},
    {LayerKind::softmax, "softmax"},
    {LayerKind::dropout, "dropout"},
    {LayerKind::maxpool, "maxpool"},
    {LayerKind::upsample, "upsample"},
    {LayerKind::zeropad, "zeropad"},
    {LayerKind::permute, "permute"},
    {LayerKind::reshape, "reshape"},
    {LayerKind::flatten, "flatten"},
    {LayerKind::linear, "linear"},
}};

constexpr double kInitStddev = 0.02;

[[noreturn]] void shape_error(const LayerSpec& spec, const Shape& input, const std::string& why) {
  throw ShapeError(std::string(kind_name(spec.kind)) + " layer: input shape " + to_string(input) +
                   " " + why);
}

Tensor gaussian(Shape shape, Rng& rng) {
  Tensor t(std::move(shape), 0.0, true);
  for (double& v : t.data()) v = rng.normal(0.0, kInitStddev);
  return t;
}

}  // namespace

std::string_view kind_name(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

LayerKind kind_from_name(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw ConfigError("unknown layer kind '" + std::string(name) + "'");
}

bool is_trainable(LayerKind kind) {
  return kind == LayerKind::dense || kind == LayerKind::conv2d || kind == LayerKind::batchnorm;
}

LayerSpec LayerSpec::dense(std::size_t units) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.units = units;
  return s;
}

LayerSpec LayerSpec::conv2d(std::size_t features, std::size_t kernel_rows, std::size_t kernel_time) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.features = features;
  s.kernel = {kernel_rows, kernel_time};
  return s;
}

LayerSpec LayerSpec::batchnorm() {
  LayerSpec s;
  s.kind = LayerKind::batchnorm;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::relu;
  return s;
}

LayerSpec LayerSpec::leaky_relu(double slope) {
  LayerSpec s;
  s.kind = LayerKind::leaky_relu;
  s.slope = slope;
  return s;
}

LayerSpec LayerSpec::sigmoid() {
  LayerSpec s;
  s.kind = LayerKind::sigmoid;
  return s;
}

LayerSpec LayerSpec::softmax(std::size_t axis) {
  LayerSpec s;
  s.kind = LayerKind::softmax;
  s.axis = axis;
  return s;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.rate = rate;
  return s;
}

LayerSpec LayerSpec::maxpool(std::size_t rows, std::size_t time) {
  LayerSpec s;
  s.kind = LayerKind::maxpool;
  s.factor = {rows, time};
  return s;
}

LayerSpec LayerSpec::upsample(std::size_t rows, std::size_t time) {
  LayerSpec s;
  s.kind = LayerKind::upsample;
  s.factor = {rows, time};
  return s;
}

LayerSpec LayerSpec::zeropad(std::size_t top, std::size_t bottom, std::size_t left, std::size_t right) {
  LayerSpec s;
  s.kind = LayerKind::zeropad;
  s.pad = {top, bottom, left, right};
  return s;
}

LayerSpec LayerSpec::permute(std::vector<std::size_t> axes) {
  LayerSpec s;
  s.kind = LayerKind::permute;
  s.axes = std::move(axes);
  return s;
}

LayerSpec LayerSpec::reshape(Shape target) {
  LayerSpec s;
  s.kind = LayerKind::reshape;
  s.target = std::move(target);
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}

LayerSpec LayerSpec::linear() { return LayerSpec{}; }

void LayerSpec::validate() const {
  const std::string name(kind_name(kind));
  switch (kind) {
    case LayerKind::dense:
      if (units < 1) throw ConfigError(name + ": units must be >= 1");
      break;
    case LayerKind::conv2d:
      if (features < 1 || kernel[0] < 1 || kernel[1] < 1) {
        throw ConfigError(name + ": features and kernel extents must be >= 1");
      }
      break;
    case LayerKind::maxpool:
    case LayerKind::upsample:
      if (factor[0] < 1 || factor[1] < 1) throw ConfigError(name + ": factors must be >= 1");
      break;
    case LayerKind::dropout:
      if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError(name + ": rate must lie in [0, 1)");
      break;
    case LayerKind::leaky_relu:
      if (!(slope >= 0.0)) throw ConfigError(name + ": slope must be >= 0");
      break;
    case LayerKind::reshape:
      if (target.empty() || std::find(target.begin(), target.end(), 0) != target.end()) {
        throw ConfigError(name + ": target extents must be >= 1");
      }
      break;
    case LayerKind::batchnorm:
      if (!(bn_eps > 0.0) || !(bn_momentum >= 0.0 && bn_momentum < 1.0)) {
        throw ConfigError(name + ": eps must be > 0 and momentum in [0, 1)");
      }
      break;
    default:
      break;
  }
}

Shape output_shape(const LayerSpec& spec, const Shape& in) {
  auto need_rank3 = [&] {
    if (in.size() != 3) shape_error(spec, in, "needs rows x time x features");
  };
  switch (spec.kind) {
    case LayerKind::dense:
      if (in.size() != 1) shape_error(spec, in, "needs a flat vector");
      return {spec.units};
    case LayerKind::conv2d:
      need_rank3();
      return {in[0], in[1], spec.features};
    case LayerKind::maxpool: {
      need_rank3();
      const std::size_t r = in[0] / spec.factor[0], t = in[1] / spec.factor[1];
      if (r == 0 || t == 0) shape_error(spec, in, "is smaller than the pool window");
      return {r, t, in[2]};
    }
    case LayerKind::upsample:
      need_rank3();
      return {in[0] * spec.factor[0], in[1] * spec.factor[1], in[2]};
    case LayerKind::zeropad:
      need_rank3();
      return {in[0] + spec.pad[0] + spec.pad[1], in[1] + spec.pad[2] + spec.pad[3], in[2]};
    case LayerKind::permute: {
      if (spec.axes.size() != in.size()) {
        shape_error(spec, in, "does not match axis order of length " + std::to_string(spec.axes.size()));
      }
      Shape out(in.size());
      std::vector<bool> used(in.size(), false);
      for (std::size_t i = 0; i < in.size(); ++i) {
        const std::size_t a = spec.axes[i];
        if (a >= in.size() || used[a]) shape_error(spec, in, "has an invalid axis order");
        used[a] = true;
        out[i] = in[a];
      }
      return out;
    }
    case LayerKind::reshape:
      if (numel(spec.target) != numel(in)) {
        shape_error(spec, in, "cannot be reshaped to " + to_string(spec.target));
      }
      return spec.target;
    case LayerKind::flatten:
      return {numel(in)};
    case LayerKind::softmax:
      if (spec.axis >= in.size()) shape_error(spec, in, "has no axis " + std::to_string(spec.axis));
      return in;
    case LayerKind::batchnorm:
      if (in.empty()) shape_error(spec, in, "has no feature axis");
      return in;
    default:
      return in;
  }
}

Parameter::Parameter(std::string n, Tensor t) : name(std::move(n)), value(std::move(t)) {
  value.set_requires_grad(true);
  value.zero_grad();
  m.assign(value.size(), 0.0);
  v.assign(value.size(), 0.0);
}

Layer::Layer(LayerSpec spec, Shape input_shape, const std::string& name, Rng& init_rng)
    : spec_(std::move(spec)), name_(name), input_shape_(std::move(input_shape)) {
  spec_.validate();
  output_shape_ = nn::output_shape(spec_, input_shape_);
  switch (spec_.kind) {
    case LayerKind::dense:
      params_.emplace_back(name_ + ".weight", gaussian({input_shape_[0], spec_.units}, init_rng));
      params_.emplace_back(name_ + ".bias", Tensor({spec_.units}, 0.0, true));
      break;
    case LayerKind::conv2d:
      params_.emplace_back(name_ + ".weight", gaussian({spec_.kernel[0], spec_.kernel[1], input_shape_[2],
                                                        spec_.features},
                                                       init_rng));
      params_.emplace_back(name_ + ".bias", Tensor({spec_.features}, 0.0, true));
      break;
    case LayerKind::batchnorm: {
      const std::size_t feat = input_shape_.back();
      params_.emplace_back(name_ + ".gamma", Tensor({feat}, 1.0, true));
      params_.emplace_back(name_ + ".beta", Tensor({feat}, 0.0, true));
      running_mean_.assign(feat, 0.0);
      running_var_.assign(feat, 1.0);
      break;
    }
    default:
      break;
  }
}

Tensor Layer::forward(const Tensor& x, Mode mode, Rng& rng, bool update_stats) {
  if (x.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), x.shape().begin() + 1)) {
    throw ShapeError("layer " + name_ + " (" + std::string(kind_name(spec_.kind)) + ") expects samples of shape " +
                     to_string(input_shape_) + ", got batch " + to_string(x.shape()));
  }
  const std::size_t batch = x.extent(0);
  switch (spec_.kind) {
    case LayerKind::dense:
      return ops::dense(x, params_[0].value, params_[1].value);
    case LayerKind::conv2d:
      return ops::conv2d(x, params_[0].value, params_[1].value);
    case LayerKind::batchnorm: {
      if (mode == Mode::infer) {
        return ops::batchnorm_infer(x, params_[0].value, params_[1].value, running_mean_, running_var_,
                                    spec_.bn_eps);
      }
      std::vector<double> mu, var;
      Tensor y = ops::batchnorm_train(x, params_[0].value, params_[1].value, spec_.bn_eps, &mu, &var);
      if (update_stats) {
        const double k = spec_.bn_momentum;
        for (std::size_t f = 0; f < mu.size(); ++f) {
          running_mean_[f] = k * running_mean_[f] + (1.0 - k) * mu[f];
          running_var_[f] = k * running_var_[f] + (1.0 - k) * var[f];
        }
      }
      return y;
    }
    case LayerKind::relu:
      return ops::relu(x);
    case LayerKind::leaky_relu:
      return ops::leaky_relu(x, spec_.slope);
    case LayerKind::sigmoid:
      return ops::sigmoid(x);
    case LayerKind::softmax:
      return ops::softmax(x, spec_.axis + 1);
    case LayerKind::dropout:
      if (mode == Mode::infer || spec_.rate == 0.0) return x;
      return ops::dropout(x, spec_.rate, rng);
    case LayerKind::maxpool:
      return ops::maxpool2d(x, spec_.factor[0], spec_.factor[1]);
    case LayerKind::upsample:
      return ops::upsample2d(x, spec_.factor[0], spec_.factor[1]);
    case LayerKind::zeropad:
      return ops::zeropad2d(x, spec_.pad[0], spec_.pad[1], spec_.pad[2], spec_.pad[3]);
    case LayerKind::permute: {
      std::vector<std::size_t> axes{0};
      for (std::size_t a : spec_.axes) axes.push_back(a + 1);
      return ops::permute(x, axes);
    }
    case LayerKind::reshape:
    case LayerKind::flatten: {
      Shape shape{batch};
      shape.insert(shape.end(), output_shape_.begin(), output_shape_.end());
      return ops::reshape(x, std::move(shape));
    }
    case LayerKind::linear:
      return x;
  }
  return x;
}

Sequential::Sequential(const std::vector<LayerSpec>& specs, Shape input_shape, const std::string& prefix,
                       Rng& init_rng)
    : input_shape_(std::move(input_shape)) {
  Shape shape = input_shape_;
  layers_.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const std::string name = prefix + "." + std::to_string(i) + "." + std::string(kind_name(specs[i].kind));
    layers_.emplace_back(specs[i], shape, name, init_rng);
    shape = layers_.back().output_shape();
  }
}

const Shape& Sequential::output_shape() const {
  return layers_.empty() ? input_shape_ : layers_.back().output_shape();
}

Tensor Sequential::forward(const Tensor& x, Mode mode, Rng& rng, bool update_stats) {
  Tensor h = x;
  for (Layer& layer : layers_) h = layer.forward(h, mode, rng, update_stats);
  return h;
}

std::vector<TraceRow> Sequential::trace() const {
  std::vector<TraceRow> rows;
  rows.reserve(layers_.size());
  for (const Layer& layer : layers_) rows.push_back({layer.spec().kind, layer.output_shape()});
  return rows;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (Layer& layer : layers_) {
    for (Parameter& p : layer.parameters()) out.push_back(&p);
  }
  return out;
}

}  // namespace erpgan::nn

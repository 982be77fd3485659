#include "erpgan/models.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "erpgan/error.hpp"
#include "erpgan/fileutil.hpp"
#include "json.hpp"

namespace erpgan::models {

using nn::LayerSpec;
using nn::Mode;
using nn::Shape;
using nn::Tensor;

namespace {

constexpr char kMagic[7] = {'E', 'R', 'P', 'G', 'A', 'N', '\0'};

void check_dims(std::size_t time_samples, std::size_t channels) {
  if (time_samples == 0 || time_samples % 16 != 0) {
    throw ConfigError("T must be divisible by 16 (got " + std::to_string(time_samples) + ")");
  }
  if (channels == 0) throw ConfigError("C must be >= 1");
}

std::vector<LayerSpec> generator_layers(std::size_t T, std::size_t C, const ArchitectureOptions& o) {
  const auto [kr, kt] = o.kernel;
  return {
      LayerSpec::dense(T / 2),
      LayerSpec::reshape({2, T / 16, 4}),
      LayerSpec::batchnorm(),
      LayerSpec::upsample(2, 4),
      LayerSpec::zeropad(0, 1, 0, 0),
      LayerSpec::conv2d(8, kr, kt),
      LayerSpec::relu(),
      LayerSpec::batchnorm(),
      LayerSpec::upsample(2, 4),
      LayerSpec::conv2d(C, kr, kt),
      LayerSpec::relu(),
      LayerSpec::batchnorm(),
      LayerSpec::upsample(2, 1),
      LayerSpec::permute({2, 1, 0}),
      LayerSpec::conv2d(1, kr, kt),
      o.relu_output ? LayerSpec::relu() : LayerSpec::linear(),
  };
}

std::vector<LayerSpec> discriminator_layers(const ArchitectureOptions& o) {
  const auto [fr, ft] = o.first_kernel;
  const auto [kr, kt] = o.kernel;
  return {
      LayerSpec::conv2d(8, fr, ft),
      LayerSpec::leaky_relu(o.leaky_slope),
      LayerSpec::dropout(o.dropout_rate),
      LayerSpec::permute({2, 1, 0}),
      LayerSpec::conv2d(8, kr, kt),
      LayerSpec::leaky_relu(o.leaky_slope),
      LayerSpec::maxpool(2, 4),
      LayerSpec::dropout(o.dropout_rate),
      LayerSpec::batchnorm(),
      LayerSpec::conv2d(4, kr, kt),
      LayerSpec::leaky_relu(o.leaky_slope),
      LayerSpec::maxpool(2, 4),
      LayerSpec::dropout(o.dropout_rate),
      LayerSpec::batchnorm(),
      LayerSpec::flatten(),
  };
}

}  // namespace

std::string_view role_name(Role role) {
  switch (role) {
    case Role::generator:
      return "generator";
    case Role::discriminator:
      return "discriminator";
    case Role::encoder:
      return "encoder";
  }
  return "unknown";
}

Role role_from_name(std::string_view name) {
  for (Role r : {Role::generator, Role::discriminator, Role::encoder}) {
    if (role_name(r) == name) return r;
  }
  throw ConfigError("unknown model role '" + std::string(name) + "'");
}

Model::Model(Role role, std::size_t time_samples, std::size_t channels, std::size_t latent_dim,
             ArchitectureOptions options, std::uint64_t seed)
    : role_(role),
      time_samples_(time_samples),
      channels_(channels),
      latent_dim_(latent_dim),
      options_(options),
      seed_(seed),
      dropout_rng_(derive_seed(seed, 1)) {
  check_dims(time_samples, channels);
  if (latent_dim == 0) throw ConfigError("latent_dim must be >= 1");
  Rng init(derive_seed(seed, 0));
  const std::size_t T = time_samples, C = channels;
  if (role == Role::generator) {
    trunk_ = nn::Sequential(generator_layers(T, C, options), {latent_dim}, "generator", init);
    return;
  }
  if (latent_dim != T / 2) {
    throw ConfigError("latent_dim must equal T/2 = " + std::to_string(T / 2) + " for the " +
                      std::string(role_name(role)));
  }
  const std::string prefix(role_name(role));
  trunk_ = nn::Sequential(discriminator_layers(options), {C, T, 1}, prefix, init);
  const Shape features = trunk_.output_shape();
  if (role == Role::discriminator) {
    heads_.push_back({"validity", nn::Sequential({LayerSpec::dense(1), LayerSpec::sigmoid()}, features,
                                                 prefix + ".validity", init)});
  }
  heads_.push_back({"class", nn::Sequential({LayerSpec::dense(2), LayerSpec::softmax(0)}, features,
                                            prefix + ".class", init)});
}

Model Model::clone() const {
  Model copy;
  copy.role_ = role_;
  copy.time_samples_ = time_samples_;
  copy.channels_ = channels_;
  copy.latent_dim_ = latent_dim_;
  copy.options_ = options_;
  copy.seed_ = seed_;
  copy.trunk_ = trunk_;
  copy.heads_ = heads_;
  copy.dropout_rng_ = dropout_rng_;
  copy.trainable_ = trainable_;
  copy.epochs_trained = epochs_trained;
  for (nn::Parameter* p : copy.parameters()) {
    Tensor fresh = p->value.clone();
    if (p->value.has_grad()) fresh.zero_grad();
    p->value = fresh;
  }
  return copy;
}

nn::Sequential& Model::head(std::string_view name) {
  for (Head& h : heads_) {
    if (h.name == name) return h.layers;
  }
  throw ConfigError(std::string(role_name(role_)) + " has no '" + std::string(name) + "' head");
}

Tensor Model::forward(const Tensor& x, Mode mode) {
  return trunk_.forward(x, mode, dropout_rng_, trainable_);
}

DiscriminatorOutput Model::discriminate(const Tensor& x, Mode mode) {
  Tensor features = forward(x, mode);
  return {head("validity").forward(features, mode, dropout_rng_, trainable_),
          head("class").forward(features, mode, dropout_rng_, trainable_)};
}

Tensor Model::classify(const Tensor& x, Mode mode) {
  Tensor features = forward(x, mode);
  return head("class").forward(features, mode, dropout_rng_, trainable_);
}

Tensor Model::encode(const Tensor& x) {
  nn::NoGradGuard guard;
  return trunk_.forward(x, Mode::infer, dropout_rng_, false);
}

std::vector<nn::Parameter*> Model::parameters() {
  std::vector<nn::Parameter*> out = trunk_.parameters();
  for (Head& h : heads_) {
    for (nn::Parameter* p : h.layers.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const nn::Parameter*> Model::parameters() const {
  auto* self = const_cast<Model*>(this);
  std::vector<nn::Parameter*> params = self->parameters();
  return {params.begin(), params.end()};
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const nn::Parameter* p : parameters()) total += p->value.size();
  return total;
}

void Model::set_trainable(bool trainable) {
  trainable_ = trainable;
  for (nn::Parameter* p : parameters()) {
    p->value.set_requires_grad(trainable);
    if (trainable) {
      p->value.zero_grad();
    } else {
      p->value.clear_grad();
    }
  }
}

Model build_generator(std::size_t time_samples, std::size_t channels, std::size_t latent_dim,
                      const ArchitectureOptions& options, std::uint64_t seed) {
  return Model(Role::generator, time_samples, channels, latent_dim, options, seed);
}

Model build_discriminator(std::size_t time_samples, std::size_t channels,
                          const ArchitectureOptions& options, std::uint64_t seed) {
  check_dims(time_samples, channels);
  return Model(Role::discriminator, time_samples, channels, time_samples / 2, options, seed);
}

Model build_encoder(std::size_t time_samples, std::size_t channels, const ArchitectureOptions& options,
                    std::uint64_t seed) {
  check_dims(time_samples, channels);
  return Model(Role::encoder, time_samples, channels, time_samples / 2, options, seed);
}

std::string format_trace(const std::vector<nn::TraceRow>& trace) {
  std::ostringstream out;
  for (const auto& row : trace) out << nn::kind_name(row.kind) << ' ' << nn::to_string(row.shape) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  const char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(FormatError::Kind::truncated,
                        "checkpoint " + source_ + " is truncated at byte " + std::to_string(pos_));
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4));
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) { return std::string(take(n), n); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

struct Record {
  std::string name;
  Shape shape;
  std::vector<double>* values;  // running stats
  nn::Parameter* param;
};

// Records in declaration order.
std::vector<Record> records_of(Model& model) {
  std::vector<Record> out;
  auto visit = [&](nn::Sequential& seq) {
    for (nn::Layer& layer : seq.layers()) {
      for (nn::Parameter& p : layer.parameters()) out.push_back({p.name, p.value.shape(), nullptr, &p});
      if (layer.spec().kind == nn::LayerKind::batchnorm) {
        const Shape s{layer.running_mean().size()};
        out.push_back({layer.name() + ".running_mean", s, &layer.running_mean(), nullptr});
        out.push_back({layer.name() + ".running_var", s, &layer.running_var(), nullptr});
      }
    }
  };
  visit(model.trunk());
  for (auto& head : model.heads()) visit(head.layers);
  return out;
}

nlohmann::json descriptor(const Model& model) {
  const auto& o = model.options();
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& h : model.heads()) heads.push_back(h.name);
  return {
      {"format_version", kCheckpointVersion},
      {"role", std::string(role_name(model.role()))},
      {"T", model.time_samples()},
      {"C", model.channels()},
      {"latent_dim", model.latent_dim()},
      {"first_kernel", {o.first_kernel[0], o.first_kernel[1]}},
      {"kernel", {o.kernel[0], o.kernel[1]}},
      {"dropout_rate", o.dropout_rate},
      {"leaky_slope", o.leaky_slope},
      {"relu_output", o.relu_output},
      {"heads", heads},
      {"seed", model.seed()},
      {"epochs", model.epochs_trained},
  };
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::string out(kMagic, sizeof kMagic);
  out.push_back(static_cast<char>(kCheckpointVersion));
  const std::string desc = descriptor(model).dump();
  put_u32(out, static_cast<std::uint32_t>(desc.size()));
  out += desc;
  auto records = records_of(const_cast<Model&>(model));
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const Record& r : records) {
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
    for (std::size_t e : r.shape) put_u32(out, static_cast<std::uint32_t>(e));
    if (r.param) {
      for (double v : r.param->value.data()) put_f32(out, static_cast<float>(v));
    } else {
      for (double v : *r.values) put_f32(out, static_cast<float>(v));
    }
  }
  write_file_atomic(path, out);
}

Model load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string source = path.string();
  Reader in(bytes, source);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError(FormatError::Kind::bad_magic, source + " is not a checkpoint (bad magic)");
  }
  in.take(7);
  const auto version = static_cast<std::uint8_t>(*in.take(1));
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::version_mismatch,
                      source + ": checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const std::uint32_t desc_len = in.u32();
  nlohmann::json desc;
  try {
    desc = nlohmann::json::parse(in.str(desc_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::parse, source + ": bad descriptor: " + e.what());
  }

  Model model = [&] {
    try {
      ArchitectureOptions o;
      o.first_kernel = {desc.at("first_kernel").at(0).get<std::size_t>(),
                        desc.at("first_kernel").at(1).get<std::size_t>()};
      o.kernel = {desc.at("kernel").at(0).get<std::size_t>(), desc.at("kernel").at(1).get<std::size_t>()};
      o.dropout_rate = desc.at("dropout_rate").get<double>();
      o.leaky_slope = desc.at("leaky_slope").get<double>();
      o.relu_output = desc.at("relu_output").get<bool>();
      const Role role = role_from_name(desc.at("role").get<std::string>());
      Model m(role, desc.at("T").get<std::size_t>(), desc.at("C").get<std::size_t>(),
              desc.at("latent_dim").get<std::size_t>(), o, desc.at("seed").get<std::uint64_t>());
      if (desc.at("heads").empty()) m.strip_heads();
      m.epochs_trained = desc.at("epochs").get<std::uint64_t>();
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(FormatError::Kind::parse, source + ": bad descriptor: " + e.what());
    } catch (const ConfigError& e) {
      throw FormatError(FormatError::Kind::parse, source + ": bad descriptor: " + e.what());
    }
  }();

  auto records = records_of(model);
  const std::uint32_t count = in.u32();
  if (count != records.size()) {
    throw FormatError(FormatError::Kind::architecture_mismatch,
                      source + ": " + std::to_string(count) + " records, architecture needs " +
                          std::to_string(records.size()));
  }
  for (Record& r : records) {
    const std::string name = in.str(in.u32());
    const std::uint32_t rank = in.u32();
    Shape shape(rank);
    for (auto& e : shape) e = in.u32();
    if (name != r.name || shape != r.shape) {
      throw FormatError(FormatError::Kind::architecture_mismatch,
                        source + ": record '" + name + "' " + nn::to_string(shape) + " where '" + r.name +
                            "' " + nn::to_string(r.shape) + " was expected");
    }
    const std::size_t n = nn::numel(shape);
    std::span<double> dst = r.param ? r.param->value.data() : std::span<double>(*r.values);
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<double>(in.f32());
  }
  if (!in.done()) {
    throw FormatError(FormatError::Kind::parse, source + ": trailing bytes after the last record");
  }
  return model;
}

Model load_checkpoint(const std::filesystem::path& path, Role expected) {
  Model model = load_checkpoint(path);
  if (model.role() != expected) {
    throw FormatError(FormatError::Kind::architecture_mismatch,
                      path.string() + " holds a " + std::string(role_name(model.role())) + ", not a " +
                          std::string(role_name(expected)));
  }
  return model;
}

}  // namespace erpgan::models

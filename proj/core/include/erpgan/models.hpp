#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "erpgan/nn/layer.hpp"

namespace erpgan::models {

enum class Role { generator, discriminator, encoder };

std::string_view role_name(Role role);
Role role_from_name(std::string_view name);

/// Hyperparameters the layer table leaves open.
struct ArchitectureOptions {
  std::array<std::size_t, 2> first_kernel{1, 16};  // first discriminator/encoder conv
  std::array<std::size_t, 2> kernel{3, 3};         // every other conv
  double dropout_rate = 0.25;
  double leaky_slope = 0.2;
  /// Generator ends in ReLU (as tabulated) instead of a linear output.
  bool relu_output = false;
};

struct DiscriminatorOutput {
  nn::Tensor validity;  // (N, 1), sigmoid
  nn::Tensor classes;   // (N, 2), softmax; column 1 is "target"
};

/// Generator, discriminator or encoder. Inputs and outputs are batched:
/// generator (N, latent) -> (N, C, T, 1); discriminator/encoder (N, C, T, 1).
class Model {
 public:
  Model(Role role, std::size_t time_samples, std::size_t channels, std::size_t latent_dim,
        ArchitectureOptions options, std::uint64_t seed);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Deep copy (parameters, running statistics and dropout stream).
  Model clone() const;

  Role role() const { return role_; }
  std::size_t time_samples() const { return time_samples_; }
  std::size_t channels() const { return channels_; }
  std::size_t latent_dim() const { return latent_dim_; }
  const ArchitectureOptions& options() const { return options_; }
  std::uint64_t seed() const { return seed_; }

  /// Per-sample input and trunk output shapes.
  const nn::Shape& input_shape() const { return trunk_.input_shape(); }
  const nn::Shape& output_shape() const { return trunk_.output_shape(); }

  /// Runs the trunk only (generator: the whole network; encoder: the latent).
  nn::Tensor forward(const nn::Tensor& x, nn::Mode mode);
  /// Discriminator trunk plus both heads.
  DiscriminatorOutput discriminate(const nn::Tensor& x, nn::Mode mode);
  /// Encoder trunk plus its temporary class head (pretraining only).
  nn::Tensor classify(const nn::Tensor& x, nn::Mode mode);
  /// Infer-mode latent vectors, no graph.
  nn::Tensor encode(const nn::Tensor& x);

  bool has_heads() const { return !heads_.empty(); }
  /// Drops the encoder's class head once pretraining is done.
  void strip_heads() { heads_.clear(); }

  /// Layer-by-layer output shapes of the trunk.
  std::vector<nn::TraceRow> shape_trace() const { return trunk_.trace(); }

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  std::size_t parameter_count() const;

  /// Frozen models record no parameter gradients and leave their running
  /// statistics untouched, but still propagate gradients to their inputs.
  void set_trainable(bool trainable);
  bool trainable() const { return trainable_; }

  void reseed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

  nn::Sequential& trunk() { return trunk_; }
  const nn::Sequential& trunk() const { return trunk_; }
  struct Head {
    std::string name;
    nn::Sequential layers;
  };
  std::vector<Head>& heads() { return heads_; }
  const std::vector<Head>& heads() const { return heads_; }

  /// Creation metadata stored in checkpoints.
  std::uint64_t epochs_trained = 0;

 private:
  Model() = default;
  nn::Sequential& head(std::string_view name);

  Role role_ = Role::generator;
  std::size_t time_samples_ = 0;
  std::size_t channels_ = 0;
  std::size_t latent_dim_ = 0;
  ArchitectureOptions options_;
  std::uint64_t seed_ = 0;
  nn::Sequential trunk_;
  std::vector<Head> heads_;
  Rng dropout_rng_;
  bool trainable_ = true;
};

/// Throws ConfigError unless T is a positive multiple of 16 and C, latent >= 1.
Model build_generator(std::size_t time_samples, std::size_t channels, std::size_t latent_dim,
                      const ArchitectureOptions& options = {}, std::uint64_t seed = 0);
Model build_discriminator(std::size_t time_samples, std::size_t channels,
                          const ArchitectureOptions& options = {}, std::uint64_t seed = 0);
/// latent_dim is fixed to T/2 (the trunk's flatten extent).
Model build_encoder(std::size_t time_samples, std::size_t channels,
                    const ArchitectureOptions& options = {}, std::uint64_t seed = 0);

/// Trace rows for printing: "conv2d (1, 128, 8)".
std::string format_trace(const std::vector<nn::TraceRow>& trace);

// Checkpoint format (little-endian):
//   8 bytes   "ERPGAN\0" followed by format version byte 0x01
//   u32       descriptor length, then UTF-8 JSON descriptor
//   u32       record count
//   records   u32 name length, name, u32 rank, rank x u32 extents,
//             extents-product x f32 values
// Records follow layer declaration order: parameters, then batchnorm running
// mean and variance ("<layer>.running_mean", "<layer>.running_var").
inline constexpr std::uint8_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
/// Also throws FormatError(architecture_mismatch) if the stored role differs.
Model load_checkpoint(const std::filesystem::path& path, Role expected);

}  // namespace erpgan::models

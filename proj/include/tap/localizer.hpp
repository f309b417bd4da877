#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tap/dataset.hpp"
#include "tap/ndiff/adamw.hpp"
#include "tap/ndiff/checkpoint.hpp"
#include "tap/ndiff/layers.hpp"
#include "tap/setpred.hpp"

namespace tap {

struct LocalizerConfig {
  int num_queries = 5;
  int num_layers = 2;
  int model_dim = 32;
  int feature_dim = 16;
  /// Adds sinusoidal frame-time features to the keys.
  bool positional_encoding = true;

  void validate() const;
};

/// Sinusoidal encoding of a normalized time in [0, 1], `dim` wide.
nd::RowVector time_encoding(double t, int dim);

/// Event localizer: learnable queries cross-attend to projected frame features and a
/// small head emits one (center, duration) per query.
class Localizer {
 public:
  static constexpr const char* kPrefix = "loc.";

  Localizer(const LocalizerConfig& cfg, std::uint64_t seed);
  /// Restores a localizer saved with to_checkpoint.
  explicit Localizer(const nd::Checkpoint& ckpt);

  Localizer(Localizer&&) noexcept = default;
  Localizer& operator=(Localizer&&) noexcept = default;

  /// Records the forward pass; returns the M x 2 matrix of sigmoid outputs.
  nd::Tensor forward(nd::Tape& tape, const nd::Matrix& features) const;
  std::vector<TemporalAnchor> localize(const nd::Matrix& features) const;

  nd::Checkpoint to_checkpoint() const;

  const LocalizerConfig& config() const { return cfg_; }
  nd::ParameterStore& params() { return *store_; }
  const nd::ParameterStore& params() const { return *store_; }

 private:
  void bind();

  LocalizerConfig cfg_;
  std::unique_ptr<nd::ParameterStore> store_;
  nd::Linear input_;
  std::vector<nd::Attention> attn_;
  std::vector<nd::FeedForward> ffn_;
  nd::LayerNorm out_norm_;
  nd::Linear head_hidden_;
  nd::Linear head_out_;
};

/// Reads rows of a forward() output as anchors.
std::vector<TemporalAnchor> anchors_from_rows(const nd::Matrix& rows);

/// Anchor loss of one forward() output, injected into its tape.
nd::Tensor anchor_loss_node(const nd::Tensor& out, std::span<const TemporalAnchor> truths,
                            const LossWeights& w, Assignment* assignment = nullptr);

struct LocalizerTrainConfig {
  nd::AdamWConfig opt{1e-3, 1e-4};
  int epochs = 300;
  int batch_size = 8;
  /// Step decay: lr is multiplied by `lr_gamma` every `lr_step` epochs.
  int lr_step = 120;
  double lr_gamma = 0.5;
  LossWeights weights;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LocalizerTrace {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
};

/// Checks that every video has between 1 and M - 1 events.
void check_trainable(const Dataset& data, const LocalizerConfig& cfg);

double mean_anchor_loss(const Localizer& model, const Dataset& data, const LossWeights& w);

/// Trains `model` in place.
LocalizerTrace fit_localizer(Localizer& model, const Dataset& data, const LocalizerTrainConfig& train);

struct TrainedLocalizer {
  Localizer model;
  LocalizerTrace trace;
};

TrainedLocalizer train_localizer(const Dataset& data, const LocalizerConfig& cfg,
                                 const LocalizerTrainConfig& train);

}  // namespace tap

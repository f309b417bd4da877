#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tap/dataset.hpp"
#include "tap/localizer.hpp"
#include "tap/ndiff/adamw.hpp"
#include "tap/ndiff/checkpoint.hpp"
#include "tap/ndiff/layers.hpp"
#include "tap/setpred.hpp"

namespace tap {

struct CaptionerConfig {
  int model_dim = 32;
  int num_layers = 2;
  int feature_dim = 16;
  int max_caption_len = 12;

  void validate() const;
};

/// An event as the captioner sees it: the anchor that fills its slot and its words.
struct AnchoredCaption {
  TemporalAnchor anchor;
  Caption caption;
};

/// Text part of a decoder input. Positions index the full sequence, video rows first.
struct BuiltSequence {
  int num_video = 0;
  std::vector<int> ids;        // text token ids, SLOT where an anchor goes
  std::vector<int> slots;      // sequence positions of SLOT tokens, one per event
  std::vector<int> loss_rows;  // positions whose next token is scored
  std::vector<int> targets;    // next token at each loss row
  std::vector<int> event_of_row;  // event index of each loss row
  nd::Mask mask;               // (num_video + ids) square, 1 = may attend

  int length() const { return num_video + static_cast<int>(ids.size()); }
};

/// Lays out events as SEP SLOT BOS w1 .. wk after `num_video` video rows. The caption
/// positions (BOS and each word) predict the next word, and the last one predicts EOS.
/// Attention is causal, except SLOT rows see only video rows.
BuiltSequence build_sequence(int num_video, std::span<const Caption> captions);

/// Anchor-conditioned toy caption decoder with its time embedding.
class Captioner {
 public:
  static constexpr const char* kDecoderPrefix = "cap.";
  static constexpr const char* kTimePrefix = "time.";

  Captioner(const CaptionerConfig& cfg, Vocab vocab, std::uint64_t seed);
  explicit Captioner(const nd::Checkpoint& ckpt);

  Captioner(Captioner&&) noexcept = default;
  Captioner& operator=(Captioner&&) noexcept = default;

  /// Time embedding of anchors given as an n x 2 tensor of (center, duration) rows:
  /// the sinusoidal code plus an MLP of it. Video frames use it too, as (time, 1/T).
  nd::Tensor embed_anchors(nd::Tape& tape, const nd::Tensor& anchors) const;
  nd::RowVector embed_anchor(const TemporalAnchor& a) const;
  /// Regression head over n x D hidden states; n x 2 sigmoid outputs.
  nd::Tensor regress(nd::Tape& tape, const nd::Tensor& hidden) const;
  TemporalAnchor regress_anchor(const nd::RowVector& hidden) const;

  /// Runs the decoder; `anchors` is an n x 2 tensor, one row per SLOT of `seq`.
  /// Returns the sequence x D hidden states after the final norm.
  nd::Tensor forward(nd::Tape& tape, const nd::Matrix& features, const BuiltSequence& seq,
                     const nd::Tensor& anchors) const;
  /// Vocabulary logits of hidden rows.
  nd::Tensor logits(nd::Tape& tape, const nd::Tensor& hidden) const;

  nd::Checkpoint to_checkpoint() const;

  const CaptionerConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  nd::ParameterStore& params() { return *store_; }
  const nd::ParameterStore& params() const { return *store_; }
  std::vector<nd::Parameter*> time_params();
  std::vector<nd::Parameter*> decoder_params();

 private:
  void bind();

  CaptionerConfig cfg_;
  Vocab vocab_;
  std::unique_ptr<nd::ParameterStore> store_;
  nd::Parameter* tokens_ = nullptr;
  nd::Linear video_;
  std::vector<nd::LayerNorm> attn_norm_;
  std::vector<nd::Attention> attn_;
  std::vector<nd::FeedForward> ffn_;
  nd::LayerNorm final_norm_;
  nd::Linear out_;
  nd::Linear time_down_;
  nd::Linear time_up_;
  nd::Linear time_head_;
};

nd::Tensor anchor_rows(nd::Tape& tape, std::span<const TemporalAnchor> anchors);

/// Mean cross-entropy over caption positions, recorded on `tape`.
nd::Tensor caption_ce_loss(nd::Tape& tape, const Captioner& model, const nd::Matrix& features,
                           std::span<const AnchoredCaption> events);
double caption_ce_loss(const Captioner& model, const nd::Matrix& features, std::span<const AnchoredCaption> events);
/// Mean cross-entropy of each event's own caption positions.
std::vector<double> caption_ce_terms(const Captioner& model, const nd::Matrix& features,
                                     std::span<const AnchoredCaption> events);

/// Anchor-style loss between index-aligned regressed and true anchors.
double denoise_loss(std::span<const TemporalAnchor> regressed, std::span<const TemporalAnchor> truths,
                    const LossWeights& w);
/// Same loss on an n x 2 tensor, with its subgradient on the tape.
nd::Tensor denoise_loss(const nd::Tensor& regressed, std::span<const TemporalAnchor> truths, const LossWeights& w);

/// Regressed anchors read at each event's SLOT.
std::vector<TemporalAnchor> denoised_anchors(const Captioner& model, const nd::Matrix& features,
                                             std::span<const AnchoredCaption> events);

struct GenerateOptions {
  int max_len = -1;  // -1 uses the model's max_caption_len
  /// 0 decodes greedily; otherwise samples from softmax(logits / temperature) with `rng`.
  double temperature = 0.0;
  std::mt19937_64* rng = nullptr;
};

struct Generation {
  Caption tokens;
  /// Log-probability of each emitted token, then of EOS unless truncated.
  std::vector<double> logprobs;
  bool truncated = false;
};

Generation generate_caption(const Captioner& model, const nd::Matrix& features, const TemporalAnchor& anchor,
                            std::span<const AnchoredCaption> history, const GenerateOptions& opts = {});

/// Sum of log-probabilities of `caption` followed by EOS, teacher forced.
double caption_logprob(const Captioner& model, const nd::Matrix& features, const TemporalAnchor& anchor,
                       std::span<const AnchoredCaption> history, const Caption& caption);

struct StageBConfig {
  nd::AdamWConfig opt{3e-3, 1e-4};
  int epochs = 60;
  int batch_size = 8;
  LossWeights weights;
  /// Localizer parameters step at this fraction of the learning rate.
  double localizer_lr_scale = 0.002;
  /// Each event is left out of a training sequence with this probability (at least one
  /// stays), so captions cannot be guessed from their rank in the sequence alone.
  double event_dropout = 0.25;
  /// Opening epochs that train on one random event per video.
  int warmup_epochs = 40;
  /// Learning-rate factor of the denoise pass.
  double denoise_lr_scale = 0.1;
  /// Appends an empty-caption event after the last one, anchored at the next unmatched
  /// localizer anchor, so decoding learns where to stop.
  bool terminal_event = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct StageBTrace {
  std::vector<double> caption_loss;
  std::vector<double> denoise_loss;
};

/// Training events of one video: ground-truth captions anchored at the localizer
/// predictions matched to them.
struct StageBExample {
  std::vector<int> events;   // kept ground-truth events
  std::vector<int> matched;  // localizer row per kept event
  int terminal = -1;         // localizer row of the terminal event, or -1
};
/// `keep` lists the ground-truth events in the sequence, ascending. The terminal event is
/// added only when the last event is kept.
StageBExample stage_b_example(std::span<const TemporalAnchor> predicted, const VideoSample& video,
                              const LossWeights& w, bool terminal_event, std::span<const int> keep);

struct StageBLosses {
  nd::Tensor caption;
  nd::Tensor denoise;
};
/// Records both losses of one video on one tape, over the events listed in `keep`
/// (all events when empty).
StageBLosses stage_b_losses(nd::Tape& tape, const Localizer& loc, const Captioner& cap, const VideoSample& video,
                            const StageBConfig& cfg, std::span<const int> keep = {});

/// Trains the captioner and fine-tunes the localizer. Per batch the caption loss updates
/// every parameter, then the denoise loss updates only localizer and time-embedding ones.
StageBTrace train_stage_b(const Dataset& data, Localizer& loc, Captioner& cap, const StageBConfig& cfg);

}  // namespace tap

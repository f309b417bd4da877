#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tap/captioner.hpp"
#include "tap/dataset.hpp"

namespace tap {

struct EcsConfig {
  double alpha = 0.2;
  double cluster_iou_threshold = 0.75;
  /// Live candidates kept per cluster.
  int batch_threshold = 8;
  /// 0 means one per anchor.
  int max_events = 0;

  void validate() const;
};

struct ScoredCandidate {
  int anchor_index = -1;
  TemporalAnchor anchor;
  Caption caption;
  std::vector<double> logprobs;
  bool truncated = false;
  double s_cs = 0.0;
  double s_as = 0.0;
  double s = 0.0;
  std::vector<int> history;  // anchor indices committed before this candidate
};

/// Per-frame caption alignment. score_as averages it over the frames of a span.
class AlignmentScorer {
 public:
  virtual ~AlignmentScorer() = default;
  virtual double frame_score(const nd::Matrix& features, int frame, const Caption& caption) const = 0;
};

/// Cosine between a frame feature and the mean token vector of the caption's words.
class ReferenceScorer : public AlignmentScorer {
 public:
  explicit ReferenceScorer(const Vocab& vocab, int feature_dim);
  double frame_score(const nd::Matrix& features, int frame, const Caption& caption) const override;

 private:
  nd::Matrix token_vectors_;  // |vocab| x feature_dim, reserved rows zero
};

/// exp of the mean log-probability.
double score_cs(std::span<const double> logprobs);
/// Mean frame_score over frames whose centers lie in `span`.
double score_as(const AlignmentScorer& scorer, const nd::Matrix& features, const TimeSpan& span,
                const Caption& caption);
/// `span`, or the single frame holding its center when it covers no frame center.
TimeSpan scoring_span(const TimeSpan& span, int num_frames);

/// Anchor indices grouped greedily in start order: an anchor joins the current cluster when
/// its IoU with the cluster's first member reaches `threshold`.
std::vector<std::vector<int>> cluster_anchors(std::span<const TemporalAnchor> anchors, double threshold);

/// Chronological start order of anchor indices, ties by index.
std::vector<int> chronological(std::span<const TemporalAnchor> anchors);

ScoredCandidate score_candidate(const Captioner& model, const AlignmentScorer& scorer, const nd::Matrix& features,
                                std::span<const TemporalAnchor> anchors, int index,
                                std::span<const AnchoredCaption> history, std::span<const int> history_ids,
                                double alpha);

struct DecodeResult {
  std::vector<PredictedEvent> events;
  std::vector<int> anchor_indices;  // localizer anchor of each event
  std::vector<ScoredCandidate> candidates;  // every scored candidate, in generation order
};

DecodeResult ecs_decode(const nd::Matrix& features, std::span<const TemporalAnchor> anchors, const Captioner& model,
                        const AlignmentScorer& scorer, const EcsConfig& cfg);

/// Captions anchors one after another in a random order, without clustering or scoring.
DecodeResult random_decode(const nd::Matrix& features, std::span<const TemporalAnchor> anchors,
                           const Captioner& model, const AlignmentScorer& scorer, const EcsConfig& cfg,
                           std::uint64_t seed);

/// Captions the first `k` anchors in start order (every anchor when k <= 0).
DecodeResult first_k_decode(const nd::Matrix& features, std::span<const TemporalAnchor> anchors,
                            const Captioner& model, const AlignmentScorer& scorer, const EcsConfig& cfg, int k = 0);

}  // namespace tap

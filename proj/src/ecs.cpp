#include "tap/ecs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "tap/synthetic.hpp"

namespace tap {

void EcsConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(cluster_iou_threshold > 0.0 && cluster_iou_threshold <= 1.0)) {
    throw std::invalid_argument("cluster_iou_threshold must be in (0, 1]");
  }
  if (batch_threshold < 1) throw std::invalid_argument("batch_threshold must be >= 1");
  if (max_events < 0) throw std::invalid_argument("max_events must be >= 0");
}

ReferenceScorer::ReferenceScorer(const Vocab& vocab, int feature_dim)
    : token_vectors_(nd::Matrix::Zero(vocab.size(), feature_dim)) {
  for (int t = Vocab::kNumReserved; t < vocab.size(); ++t) {
    token_vectors_.row(t) = token_vector(vocab.token(t), feature_dim);
  }
}

double ReferenceScorer::frame_score(const nd::Matrix& features, int frame, const Caption& caption) const {
  if (features.cols() != token_vectors_.cols()) {
    throw std::invalid_argument("scorer expects feature_dim " + std::to_string(token_vectors_.cols()) +
                                ", got features " + nd::shape_str(features));
  }
  nd::RowVector bag = nd::RowVector::Zero(token_vectors_.cols());
  for (int t : caption) {
    if (t < 0 || t >= token_vectors_.rows()) throw std::out_of_range("token id out of range: " + std::to_string(t));
    bag += token_vectors_.row(t);
  }
  const double denom = bag.norm() * features.row(frame).norm();
  return denom > 0.0 ? features.row(frame).dot(bag) / denom : 0.0;
}

double score_cs(std::span<const double> logprobs) {
  if (logprobs.empty()) throw std::invalid_argument("score_cs of an empty caption");
  double sum = 0.0;
  for (double lp : logprobs) sum += lp;
  return std::exp(sum / static_cast<double>(logprobs.size()));
}

double score_as(const AlignmentScorer& scorer, const nd::Matrix& features, const TimeSpan& span,
                const Caption& caption) {
  const auto frames = frames_in_span(span, static_cast<int>(features.rows()));
  if (frames.empty()) {
    throw std::invalid_argument("span [" + std::to_string(span.start()) + ", " + std::to_string(span.end()) +
                                "] covers no frame");
  }
  double sum = 0.0;
  for (int f : frames) sum += scorer.frame_score(features, f, caption);
  return sum / static_cast<double>(frames.size());
}

TimeSpan scoring_span(const TimeSpan& span, int num_frames) {
  if (!frames_in_span(span, num_frames).empty()) return span;
  const double mid = 0.5 * (span.start() + span.end());
  const int f = std::clamp(static_cast<int>(std::floor(mid * num_frames)), 0, num_frames - 1);
  const double t = frame_time(f, num_frames);
  return {t, t};
}

std::vector<int> chronological(std::span<const TemporalAnchor> anchors) {
  std::vector<int> order(anchors.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return span_from_anchor(anchors[static_cast<std::size_t>(a)]).start() <
           span_from_anchor(anchors[static_cast<std::size_t>(b)]).start();
  });
  return order;
}

std::vector<std::vector<int>> cluster_anchors(std::span<const TemporalAnchor> anchors, double threshold) {
  std::vector<std::vector<int>> clusters;
  for (int i : chronological(anchors)) {
    const TimeSpan s = span_from_anchor(anchors[static_cast<std::size_t>(i)]);
    if (!clusters.empty()) {
      const TimeSpan rep = span_from_anchor(anchors[static_cast<std::size_t>(clusters.back().front())]);
      if (temporal_iou(rep, s) >= threshold) {
        clusters.back().push_back(i);
        continue;
      }
    }
    clusters.push_back({i});
  }
  return clusters;
}

ScoredCandidate score_candidate(const Captioner& model, const AlignmentScorer& scorer, const nd::Matrix& features,
                                std::span<const TemporalAnchor> anchors, int index,
                                std::span<const AnchoredCaption> history, std::span<const int> history_ids,
                                double alpha) {
  ScoredCandidate c;
  c.anchor_index = index;
  c.anchor = anchors[static_cast<std::size_t>(index)];
  Generation g = generate_caption(model, features, c.anchor, history);
  c.caption = std::move(g.tokens);
  c.logprobs = std::move(g.logprobs);
  c.truncated = g.truncated;
  c.s_cs = c.logprobs.empty() ? 0.0 : score_cs(c.logprobs);
  const TimeSpan span = scoring_span(span_from_anchor(c.anchor), static_cast<int>(features.rows()));
  c.s_as = score_as(scorer, features, span, c.caption);
  c.s = c.s_cs + alpha * c.s_as;
  c.history.assign(history_ids.begin(), history_ids.end());
  return c;
}

namespace {

struct Committer {
  DecodeResult out;
  std::vector<AnchoredCaption> history;
  std::vector<int> history_ids;

  /// Returns false once decoding should stop.
  bool commit(const ScoredCandidate& c, std::size_t max_events) {
    if (c.caption.empty()) return false;
    out.events.push_back(PredictedEvent{span_from_anchor(c.anchor), c.caption, c.s, c.s_cs, c.s_as});
    out.anchor_indices.push_back(c.anchor_index);
    history.push_back({c.anchor, c.caption});
    history_ids.push_back(c.anchor_index);
    return out.events.size() < max_events;
  }
};

std::size_t event_cap(const EcsConfig& cfg, std::size_t m) {
  return cfg.max_events > 0 ? static_cast<std::size_t>(cfg.max_events) : m;
}

void check_inputs(const nd::Matrix& features, std::span<const TemporalAnchor> anchors) {
  if (anchors.empty()) throw std::invalid_argument("decoding needs at least one anchor");
  if (features.rows() < 1) throw std::invalid_argument("decoding needs at least one frame");
}

DecodeResult sequential(const nd::Matrix& features, std::span<const TemporalAnchor> anchors, const Captioner& model,
                        const AlignmentScorer& scorer, const EcsConfig& cfg, const std::vector<int>& picks) {
  Committer c;
  const std::size_t cap = event_cap(cfg, anchors.size());
  for (int i : picks) {
    ScoredCandidate cand = score_candidate(model, scorer, features, anchors, i, c.history, c.history_ids, cfg.alpha);
    c.out.candidates.push_back(cand);
    if (!c.commit(cand, cap)) break;
  }
  return std::move(c.out);
}

}  // namespace

DecodeResult ecs_decode(const nd::Matrix& features, std::span<const TemporalAnchor> anchors, const Captioner& model,
                        const AlignmentScorer& scorer, const EcsConfig& cfg) {
  cfg.validate();
  check_inputs(features, anchors);
  Committer c;
  const std::size_t cap = event_cap(cfg, anchors.size());
  for (const auto& cluster : cluster_anchors(anchors, cfg.cluster_iou_threshold)) {
    std::vector<ScoredCandidate> live;
    for (int i : cluster) {
      live.push_back(score_candidate(model, scorer, features, anchors, i, c.history, c.history_ids, cfg.alpha));
    }
    // Highest S first; equal S keeps the lower anchor index.
    std::stable_sort(live.begin(), live.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
      if (a.s != b.s) return a.s > b.s;
      return a.anchor_index < b.anchor_index;
    });
    if (live.size() > static_cast<std::size_t>(cfg.batch_threshold)) live.resize(static_cast<std::size_t>(cfg.batch_threshold));
    c.out.candidates.insert(c.out.candidates.end(), live.begin(), live.end());
    if (!c.commit(live.front(), cap)) break;
  }
  return std::move(c.out);
}

DecodeResult random_decode(const nd::Matrix& features, std::span<const TemporalAnchor> anchors,
                           const Captioner& model, const AlignmentScorer& scorer, const EcsConfig& cfg,
                           std::uint64_t seed) {
  cfg.validate();
  check_inputs(features, anchors);
  std::mt19937_64 rng(seed);
  std::vector<int> picks(anchors.size());
  std::iota(picks.begin(), picks.end(), 0);
  std::shuffle(picks.begin(), picks.end(), rng);
  return sequential(features, anchors, model, scorer, cfg, picks);
}

DecodeResult first_k_decode(const nd::Matrix& features, std::span<const TemporalAnchor> anchors,
                            const Captioner& model, const AlignmentScorer& scorer, const EcsConfig& cfg, int k) {
  cfg.validate();
  check_inputs(features, anchors);
  std::vector<int> picks = chronological(anchors);
  if (k > 0 && static_cast<std::size_t>(k) < picks.size()) picks.resize(static_cast<std::size_t>(k));
  return sequential(features, anchors, model, scorer, cfg, picks);
}

}  // namespace tap

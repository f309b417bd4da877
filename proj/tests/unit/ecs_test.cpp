#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "tap/ecs.hpp"
#include "tap/synthetic.hpp"

namespace tap {
namespace {

class ConstantScorer : public AlignmentScorer {
 public:
  explicit ConstantScorer(double k) : k_(k) {}
  double frame_score(const nd::Matrix&, int, const Caption&) const override { return k_; }

 private:
  double k_;
};

class FrameIndexScorer : public AlignmentScorer {
 public:
  double frame_score(const nd::Matrix&, int frame, const Caption&) const override { return 10.0 * frame + 1.0; }
};

// Pseudo-random per (frame, caption), keyed by a seed.
class RandomScorer : public AlignmentScorer {
 public:
  explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}
  double frame_score(const nd::Matrix&, int frame, const Caption& caption) const override {
    std::seed_seq seq{seed_, static_cast<std::uint64_t>(frame), static_cast<std::uint64_t>(caption.size()),
                      static_cast<std::uint64_t>(caption.empty() ? 0 : caption[0])};
    std::mt19937_64 rng(seq);
    return std::uniform_real_distribution<double>(-5.0, 5.0)(rng);
  }

 private:
  std::uint64_t seed_;
};

class ScaledScorer : public AlignmentScorer {
 public:
  ScaledScorer(const AlignmentScorer& base, double k) : base_(base), k_(k) {}
  double frame_score(const nd::Matrix& f, int frame, const Caption& c) const override {
    return k_ * base_.frame_score(f, frame, c);
  }

 private:
  const AlignmentScorer& base_;
  double k_;
};

Dataset suite(std::uint64_t seed, int videos = 20) {
  GenConfig g;
  g.num_videos = videos;
  g.seed = seed;
  return generate_dataset(g);
}

Captioner random_captioner(const Vocab& vocab, std::uint64_t seed) {
  CaptionerConfig cfg;
  cfg.max_caption_len = 4;
  return Captioner(cfg, vocab, seed);
}

std::vector<TemporalAnchor> random_anchors(std::mt19937_64& rng, int m) {
  std::uniform_real_distribution<double> c(0.1, 0.9);
  std::uniform_real_distribution<double> d(0.05, 0.3);
  std::vector<TemporalAnchor> out;
  for (int i = 0; i < m; ++i) out.emplace_back(c(rng), d(rng));
  return out;
}

void expect_same_events(const DecodeResult& a, const DecodeResult& b) {
  ASSERT_EQ(a.events.size(), b.events.size());
  EXPECT_EQ(a.anchor_indices, b.anchor_indices);
  for (std::size_t i = 0; i < a.events.size(); ++i) EXPECT_EQ(a.events[i].caption, b.events[i].caption) << i;
}

TEST(EcsTest, ScoreCsExamples) {
  EXPECT_EQ(score_cs(std::vector<double>{0.0, 0.0, 0.0}), 1.0);
  EXPECT_NEAR(score_cs(std::vector<double>{std::log(0.5), std::log(0.5)}), 0.5, 1e-12);
  EXPECT_NEAR(score_cs(std::vector<double>{std::log(0.9), std::log(0.4)}), 0.6, 1e-12);
  EXPECT_THROW(score_cs(std::vector<double>{}), std::invalid_argument);
}

TEST(EcsTest, ScoreAsExamples) {
  const nd::Matrix f = nd::Matrix::Ones(10, 3);
  const Caption c{5, 6};
  EXPECT_NEAR(score_as(ConstantScorer(0.37), f, TimeSpan(0.1, 0.8), c), 0.37, 1e-12);
  // Frame centers are at 0.05, 0.15, ...; [0.12, 0.18] holds only frame 1.
  EXPECT_EQ(score_as(FrameIndexScorer(), f, TimeSpan(0.12, 0.18), c), 11.0);
  // Frames 2, 3, 4.
  EXPECT_NEAR(score_as(FrameIndexScorer(), f, TimeSpan(0.2, 0.5), c), 31.0, 1e-12);
  EXPECT_THROW(score_as(ConstantScorer(1.0), f, TimeSpan(0.11, 0.14), c), std::invalid_argument);
}

TEST(EcsTest, ScoreAsIgnoresFramesOutsideSpan) {
  const Dataset data = suite(3, 5);
  const ReferenceScorer scorer(data.vocab, data.feature_dim);
  std::mt19937_64 rng(4);
  for (const VideoSample& v : data.videos) {
    for (const Event& e : v.events) {
      nd::Matrix f = v.features;
      const auto inside = frames_in_span(e.span, v.num_frames());
      const std::set<int> keep(inside.begin(), inside.end());
      for (int r = 0; r < f.rows(); ++r)
        if (!keep.count(r)) f.row(r) = nd::randn(1, f.cols(), 3.0, rng);
      EXPECT_EQ(score_as(scorer, f, e.span, e.caption), score_as(scorer, v.features, e.span, e.caption));
    }
  }
}

TEST(EcsTest, ReferenceScorerPrefersTheEventsOwnCaption) {
  GenConfig g;
  g.num_videos = 100;
  g.seed = 12;
  const Dataset data = generate_dataset(g);
  const ReferenceScorer scorer(data.vocab, data.feature_dim);
  std::mt19937_64 rng(1);
  int total = 0;
  int wins = 0;
  for (const VideoSample& v : data.videos) {
    for (const Event& e : v.events) {
      const int k = class_of_caption(data.vocab, e.caption, g.num_event_classes);
      ASSERT_GE(k, 0);
      int other = std::uniform_int_distribution<int>(0, g.num_event_classes - 2)(rng);
      if (other >= k) ++other;
      const Caption wrong = data.vocab.encode(class_template(other));
      ++total;
      if (score_as(scorer, v.features, e.span, e.caption) > score_as(scorer, v.features, e.span, wrong)) ++wins;
    }
  }
  EXPECT_GE(wins, 0.95 * total) << wins << " of " << total;
}

TEST(EcsTest, ClusterHandOracle) {
  const std::vector<TemporalAnchor> a{anchor_from_span(TimeSpan(0.0, 0.4)), anchor_from_span(TimeSpan(0.05, 0.45)),
                                      anchor_from_span(TimeSpan(0.5, 0.9))};
  EXPECT_EQ(cluster_anchors(a, 0.75), (std::vector<std::vector<int>>{{0, 1}, {2}}));

  // Same anchors listed out of order come back chronologically.
  const std::vector<TemporalAnchor> b{a[2], a[1], a[0]};
  EXPECT_EQ(cluster_anchors(b, 0.75), (std::vector<std::vector<int>>{{2, 1}, {0}}));
}

TEST(EcsTest, ClusterTrivialCases) {
  const std::vector<TemporalAnchor> same(4, TemporalAnchor(0.4, 0.2));
  EXPECT_EQ(cluster_anchors(same, 0.75).size(), 1u);
  const std::vector<TemporalAnchor> apart{TemporalAnchor(0.2, 0.1), TemporalAnchor(0.7, 0.1)};
  EXPECT_EQ(cluster_anchors(apart, 0.75).size(), 2u);
}

TEST(EcsTest, EveryAnchorInExactlyOneCluster) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    const auto anchors = random_anchors(rng, std::uniform_int_distribution<int>(1, 12)(rng));
    const double threshold = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    const auto clusters = cluster_anchors(anchors, threshold);
    std::vector<int> seen(anchors.size(), 0);
    double last_start = -1.0;
    for (const auto& c : clusters) {
      ASSERT_FALSE(c.empty());
      const TimeSpan rep = span_from_anchor(anchors[static_cast<std::size_t>(c.front())]);
      EXPECT_GE(rep.start(), last_start);
      last_start = rep.start();
      for (int i : c) {
        ++seen[static_cast<std::size_t>(i)];
        EXPECT_GE(temporal_iou(rep, span_from_anchor(anchors[static_cast<std::size_t>(i)])), threshold);
      }
    }
    for (int s : seen) EXPECT_EQ(s, 1);
  }
}

TEST(EcsTest, SingleAnchorDecodesItsOwnCaption) {
  const Dataset data = suite(1, 2);
  const Captioner model = random_captioner(data.vocab, 2);
  const ReferenceScorer scorer(data.vocab, data.feature_dim);
  const VideoSample& v = data.videos[0];
  const std::vector<TemporalAnchor> one{TemporalAnchor(0.4, 0.3)};
  const DecodeResult r = ecs_decode(v.features, one, model, scorer, EcsConfig());
  const Generation g = generate_caption(model, v.features, one[0], {});
  ASSERT_FALSE(g.tokens.empty());
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].caption, g.tokens);
  EXPECT_EQ(r.events[0].span.start(), span_from_anchor(one[0]).start());
  EXPECT_EQ(r.events[0].span.end(), span_from_anchor(one[0]).end());
}

TEST(EcsTest, IdenticalAnchorsCommitOnce) {
  const Dataset data = suite(1, 2);
  const Captioner model = random_captioner(data.vocab, 3);
  const ReferenceScorer scorer(data.vocab, data.feature_dim);
  const std::vector<TemporalAnchor> same(3, TemporalAnchor(0.5, 0.2));
  EXPECT_EQ(ecs_decode(data.videos[0].features, same, model, scorer, EcsConfig()).events.size(), 1u);
}

TEST(EcsTest, BatchThresholdLimitsLiveCandidates) {
  const Dataset data = suite(1, 2);
  const Captioner model = random_captioner(data.vocab, 3);
  const ReferenceScorer scorer(data.vocab, data.feature_dim);
  const std::vector<TemporalAnchor> near{TemporalAnchor(0.5, 0.2), TemporalAnchor(0.505, 0.2),
                                         TemporalAnchor(0.51, 0.2), TemporalAnchor(0.5, 0.21)};
  EcsConfig cfg;
  cfg.batch_threshold = 2;
  const DecodeResult r = ecs_decode(data.videos[0].features, near, model, scorer, cfg);
  EXPECT_EQ(r.candidates.size(), 2u);
  EXPECT_GE(r.candidates[0].s, r.candidates[1].s);
}

TEST(EcsTest, DecodeInvariantsOnRandomInputs) {
  const Dataset data = suite(2, 8);
  const ReferenceScorer scorer(data.vocab, data.feature_dim);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 16; ++trial) {
    const Captioner model = random_captioner(data.vocab, static_cast<std::uint64_t>(trial));
    const VideoSample& v = data.videos[static_cast<std::size_t>(trial) % data.videos.size()];
    const auto anchors = random_anchors(rng, 6);
    EcsConfig cfg;
    cfg.max_events = 1 + trial % 5;
    const DecodeResult r = ecs_decode(v.features, anchors, model, scorer, cfg);
    const auto clusters = cluster_anchors(anchors, cfg.cluster_iou_threshold);
    EXPECT_LE(r.events.size(), std::min<std::size_t>(static_cast<std::size_t>(cfg.max_events), clusters.size()));
    EXPECT_EQ(std::set<int>(r.anchor_indices.begin(), r.anchor_indices.end()).size(), r.anchor_indices.size());
    for (std::size_t i = 1; i < r.events.size(); ++i) EXPECT_GT(r.events[i].span.start(), r.events[i - 1].span.start());
    for (const ScoredCandidate& c : r.candidates) {
      EXPECT_NEAR(c.s, c.s_cs + cfg.alpha * c.s_as, 1e-12);
      if (!c.logprobs.empty()) {
        EXPECT_GT(c.s_cs, 0.0);
        EXPECT_LE(c.s_cs, 1.0);
      }
    }
    for (std::size_t i = 0; i < r.events.size(); ++i) {
      const auto& a = anchors[static_cast<std::size_t>(r.anchor_indices[i])];
      EXPECT_EQ(r.events[i].span.start(), span_from_anchor(a).start());
    }
  }
}

TEST(EcsTest, AlphaZeroIgnoresTheScorer) {
  const Dataset data = suite(5, 6);
  std::mt19937_64 rng(23);
  EcsConfig cfg;
  cfg.alpha = 0.0;
  cfg.cluster_iou_threshold = 0.3;
  for (int trial = 0; trial < 6; ++trial) {
    const Captioner model = random_captioner(data.vocab, static_cast<std::uint64_t>(trial));
    const VideoSample& v = data.videos[static_cast<std::size_t>(trial)];
    const auto anchors = random_anchors(rng, 6);
    const DecodeResult base = ecs_decode(v.features, anchors, model, RandomScorer(0), cfg);
    for (std::uint64_t seed = 1; seed < 4; ++seed) {
      expect_same_events(base, ecs_decode(v.features, anchors, model, RandomScorer(seed), cfg));
    }
  }
}

TEST(EcsTest, ScalingAlignmentAgainstAlphaKeepsTheArgmax) {
  const Dataset data = suite(5, 6);
  const ReferenceScorer reference(data.vocab, data.feature_dim);
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 6; ++trial) {
    const Captioner model = random_captioner(data.vocab, static_cast<std::uint64_t>(trial + 10));
    const VideoSample& v = data.videos[static_cast<std::size_t>(trial)];
    const auto anchors = random_anchors(rng, 6);
    EcsConfig cfg;
    cfg.alpha = 0.5;
    cfg.cluster_iou_threshold = 0.3;
    const DecodeResult base = ecs_decode(v.features, anchors, model, reference, cfg);
    for (double k : {0.25, 4.0}) {
      EcsConfig scaled = cfg;
      scaled.alpha = cfg.alpha / k;
      expect_same_events(base, ecs_decode(v.features, anchors, model, ScaledScorer(reference, k), scaled));
    }
  }
}

TEST(EcsTest, BaselinesVisitAnchorsInTheirOrder) {
  const Dataset data = suite(1, 2);
  const Captioner model = random_captioner(data.vocab, 4);
  const ReferenceScorer scorer(data.vocab, data.feature_dim);
  const std::vector<TemporalAnchor> anchors{TemporalAnchor(0.7, 0.1), TemporalAnchor(0.2, 0.1),
                                            TemporalAnchor(0.45, 0.1)};
  const nd::Matrix& f = data.videos[0].features;
  const DecodeResult fk = first_k_decode(f, anchors, model, scorer, EcsConfig(), 2);
  ASSERT_EQ(fk.candidates.size(), fk.events.size() + (fk.events.size() < 2 ? 1 : 0));
  if (!fk.candidates.empty()) EXPECT_EQ(fk.candidates[0].anchor_index, 1);
  if (fk.candidates.size() > 1) EXPECT_EQ(fk.candidates[1].anchor_index, 2);

  const DecodeResult a = random_decode(f, anchors, model, scorer, EcsConfig(), 7);
  const DecodeResult b = random_decode(f, anchors, model, scorer, EcsConfig(), 7);
  expect_same_events(a, b);
  std::set<int> seen;
  for (const auto& c : a.candidates) EXPECT_TRUE(seen.insert(c.anchor_index).second);
}

TEST(EcsTest, RejectsBadConfigAndEmptyAnchors) {
  const Dataset data = suite(1, 1);
  const Captioner model = random_captioner(data.vocab, 4);
  const ReferenceScorer scorer(data.vocab, data.feature_dim);
  EcsConfig bad;
  bad.alpha = -1.0;
  EXPECT_THROW(ecs_decode(data.videos[0].features, std::vector{TemporalAnchor(0.5, 0.5)}, model, scorer, bad),
               std::invalid_argument);
  EXPECT_THROW(ecs_decode(data.videos[0].features, std::vector<TemporalAnchor>{}, model, scorer, EcsConfig()),
               std::invalid_argument);
}

}  // namespace
}  // namespace tap

#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "tap/io.hpp"
#include "tap/synthetic.hpp"

namespace tap {
namespace {

TEST(SyntheticTest, NoiselessFramesEqualTheSignature) {
  GenConfig g;
  g.num_videos = 10;
  g.min_events = 1;
  g.max_events = 1;
  g.noise = 0.0;
  const Dataset data = generate_dataset(g);
  const nd::RowVector bg = background_signature(g.feature_dim);
  for (const VideoSample& v : data.videos) {
    ASSERT_EQ(v.events.size(), 1u);
    const int k = class_of_caption(data.vocab, v.events[0].caption, g.num_event_classes);
    ASSERT_GE(k, 0);
    const nd::RowVector sig = class_signature(k, g.feature_dim);
    const auto inside = frames_in_span(v.events[0].span, v.num_frames());
    const std::set<int> in(inside.begin(), inside.end());
    ASSERT_FALSE(in.empty());
    for (int f = 0; f < v.num_frames(); ++f) EXPECT_TRUE(v.features.row(f) == (in.count(f) ? sig : bg)) << f;
  }
}

TEST(SyntheticTest, SameSeedGivesIdenticalFiles) {
  GenConfig g;
  g.num_videos = 15;
  g.seed = 77;
  const std::string a = dataset_to_json(generate_dataset(g)).dump(2);
  const std::string b = dataset_to_json(generate_dataset(g)).dump(2);
  EXPECT_EQ(a, b);
  g.seed = 78;
  EXPECT_NE(a, dataset_to_json(generate_dataset(g)).dump(2));
}

TEST(SyntheticTest, DefaultSetRespectsItsConfig) {
  const GenConfig g;
  const Dataset data = generate_dataset(g);
  ASSERT_EQ(static_cast<int>(data.videos.size()), g.num_videos);
  std::set<std::string> ids;
  for (const VideoSample& v : data.videos) {
    EXPECT_TRUE(ids.insert(v.id).second);
    EXPECT_EQ(v.num_frames(), g.num_frames);
    EXPECT_EQ(v.features.cols(), g.feature_dim);
    const int n = static_cast<int>(v.events.size());
    EXPECT_GE(n, g.min_events);
    EXPECT_LE(n, g.max_events);
    for (int i = 0; i < n; ++i) {
      const Event& e = v.events[static_cast<std::size_t>(i)];
      EXPECT_GE(e.span.start(), 0.0);
      EXPECT_LE(e.span.end(), 1.0);
      const double frames = e.span.length() * g.num_frames;
      EXPECT_GE(frames, g.min_event_frames - 1e-9);
      EXPECT_LE(frames, g.max_event_frames + 1e-9);
      EXPECT_GE(class_of_caption(data.vocab, e.caption, g.num_event_classes), 0);
      for (int j = 0; j < i; ++j) {
        EXPECT_LE(v.events[static_cast<std::size_t>(j)].span.start(), e.span.start());
        EXPECT_LE(temporal_iou(v.events[static_cast<std::size_t>(j)].span, e.span), g.max_overlap + 1e-12);
      }
    }
  }
  for (int t = 0; t < Vocab::kNumReserved; ++t) EXPECT_TRUE(Vocab::is_reserved(t));
  EXPECT_EQ(data.vocab.token(Vocab::kBos), "<s>");
}

struct Recovery {
  int events = 0;
  int good = 0;  // IoU >= 0.9
  double mean_iou = 0.0;
};

// Labels each frame with its nearest signature and reads runs of one label back as spans.
Recovery nearest_signature_recovery(const GenConfig& g) {
  const Dataset data = generate_dataset(g);
  std::vector<nd::RowVector> sigs;
  for (int k = 0; k < g.num_event_classes; ++k) sigs.push_back(class_signature(k, g.feature_dim));
  sigs.push_back(background_signature(g.feature_dim));

  Recovery r;
  for (const VideoSample& v : data.videos) {
    std::vector<int> label(static_cast<std::size_t>(v.num_frames()));
    for (int f = 0; f < v.num_frames(); ++f) {
      int best = 0;
      for (int k = 1; k < static_cast<int>(sigs.size()); ++k) {
        if ((v.features.row(f) - sigs[static_cast<std::size_t>(k)]).squaredNorm() <
            (v.features.row(f) - sigs[static_cast<std::size_t>(best)]).squaredNorm())
          best = k;
      }
      label[static_cast<std::size_t>(f)] = best;
    }
    for (const Event& e : v.events) {
      const int k = class_of_caption(data.vocab, e.caption, g.num_event_classes);
      double best_iou = 0.0;
      for (int f = 0; f < v.num_frames();) {
        if (label[static_cast<std::size_t>(f)] != k) {
          ++f;
          continue;
        }
        int end = f;
        while (end < v.num_frames() && label[static_cast<std::size_t>(end)] == k) ++end;
        const TimeSpan run(static_cast<double>(f) / v.num_frames(), static_cast<double>(end) / v.num_frames());
        best_iou = std::max(best_iou, temporal_iou(run, e.span));
        f = end;
      }
      ++r.events;
      r.mean_iou += best_iou;
      if (best_iou >= 0.9) ++r.good;
    }
  }
  r.mean_iou /= r.events;
  return r;
}

TEST(SyntheticTest, NearestSignatureRecoversSeparateEvents) {
  GenConfig g;
  g.noise = 0.1;
  g.seed = 4;
  g.max_overlap = 0.0;
  const Recovery r = nearest_signature_recovery(g);
  EXPECT_GE(r.good, 0.95 * r.events) << r.good << " of " << r.events;
}

// Overlapping frames carry the mean of two signatures, which a single label cannot
// attribute to both events, so only the mean IoU is held to 0.9 here.
TEST(SyntheticTest, NearestSignatureRecoversDefaultSetOnAverage) {
  GenConfig g;
  g.noise = 0.1;
  g.seed = 4;
  const Recovery r = nearest_signature_recovery(g);
  EXPECT_GE(r.mean_iou, 0.9);
}

TEST(SyntheticTest, InfeasiblePackingIsAnError) {
  GenConfig g;
  g.num_videos = 3;
  g.num_frames = 20;
  g.min_events = 4;
  g.max_events = 4;
  g.min_event_frames = 10;
  g.max_event_frames = 10;
  g.max_overlap = 0.0;
  EXPECT_THROW(generate_dataset(g), std::invalid_argument);
}

TEST(SyntheticTest, RejectsInvalidConfigs) {
  auto bad = [](auto edit) {
    GenConfig g;
    edit(g);
    return g;
  };
  EXPECT_THROW(bad([](GenConfig& g) { g.noise = -0.1; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](GenConfig& g) { g.num_event_classes = 1; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](GenConfig& g) { g.min_events = 3; g.max_events = 2; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](GenConfig& g) { g.max_event_frames = 100; }).validate(), std::invalid_argument);
  EXPECT_NO_THROW(GenConfig().validate());
}

TEST(SyntheticTest, TokenVectorsDependOnlyOnTheWord) {
  EXPECT_TRUE(token_vector("pour", 16) == token_vector("pour", 16));
  EXPECT_NEAR(token_vector("pour", 16).norm(), 1.0, 1e-12);
  EXPECT_FALSE(token_vector("pour", 16) == token_vector("water", 16));
  EXPECT_NEAR(bag_of_tokens({"pour", "water"}, 16).norm(), 1.0, 1e-12);
}

}  // namespace
}  // namespace tap

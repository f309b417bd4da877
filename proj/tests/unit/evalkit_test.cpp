#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "tap/evalkit.hpp"
#include "tap/synthetic.hpp"
#include "test_support.hpp"

namespace tap {
namespace {

PredictedEvent pred(double s, double e, Caption c = {5}) { return PredictedEvent{TimeSpan(s, e), std::move(c)}; }
Event truth(double s, double e, Caption c = {5}) { return Event{TimeSpan(s, e), std::move(c)}; }

std::vector<Event> random_events(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Event> out;
  for (int i = 0; i < n; ++i) {
    double a = u(rng);
    double b = u(rng);
    if (a > b) std::swap(a, b);
    Caption c;
    const int len = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int k = 0; k < len; ++k) c.push_back(std::uniform_int_distribution<int>(5, 9)(rng));
    out.push_back(Event{TimeSpan(a, std::min(1.0, b + 0.05)), c});
  }
  std::sort(out.begin(), out.end(), [](const Event& x, const Event& y) { return x.span.start() < y.span.start(); });
  return out;
}

TEST(EvalkitTest, CaptionSimilarityExamples) {
  EXPECT_EQ(caption_similarity({5, 6, 7}, {5, 6, 7}), 1.0);
  EXPECT_EQ(caption_similarity({5, 6}, {7, 8}), 0.0);
  EXPECT_NEAR(caption_similarity({5, 6, 7}, {5, 6, 8}), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(caption_similarity({}, {5}), 0.0);
  // Clipped counts: one shared 5 out of two.
  EXPECT_NEAR(caption_similarity({5, 5}, {5, 6}), 0.5, 1e-12);
}

TEST(EvalkitTest, LocalizationExamples) {
  const std::vector<TimeSpan> g{TimeSpan(0.2, 0.6), TimeSpan(0.7, 0.9)};
  const auto perfect = localization_prf(g, g);
  EXPECT_EQ(perfect.recall, 100.0);
  EXPECT_EQ(perfect.precision, 100.0);
  EXPECT_EQ(perfect.f1, 100.0);

  const std::vector<TimeSpan> far{TimeSpan(0.0, 0.1), TimeSpan(0.62, 0.68)};
  const auto none = localization_prf(far, g);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.f1, 0.0);

  const std::vector<TimeSpan> one{TimeSpan(0.2, 0.6)};
  const auto half = localization_prf(g, one);
  EXPECT_NEAR(half.recall, 100.0, 1e-12);
  EXPECT_NEAR(half.precision, 50.0, 1e-12);
  EXPECT_NEAR(half.f1, 200.0 / 3.0, 1e-12);
  for (const auto& t : half.per_threshold) {
    EXPECT_EQ(t.recall, 100.0);
    EXPECT_EQ(t.precision, 50.0);
  }
}

TEST(EvalkitTest, VideosWithoutGroundTruthAreExcluded) {
  const std::vector<std::vector<TimeSpan>> preds{{TimeSpan(0.1, 0.3)}, {TimeSpan(0.1, 0.3)}};
  const std::vector<std::vector<TimeSpan>> truths{{TimeSpan(0.1, 0.3)}, {}};
  const auto s = localization_prf(preds, truths);
  EXPECT_EQ(s.videos, 1);
  EXPECT_EQ(s.excluded, 1);
  EXPECT_EQ(s.recall, 100.0);
}

TEST(EvalkitTest, LocalizationIsPermutationInvariant) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pe = random_events(rng, std::uniform_int_distribution<int>(1, 6)(rng));
    const auto ge = random_events(rng, std::uniform_int_distribution<int>(1, 6)(rng));
    std::vector<TimeSpan> p;
    std::vector<TimeSpan> g;
    for (const auto& e : pe) p.push_back(e.span);
    for (const auto& e : ge) g.push_back(e.span);
    const auto base = localization_prf(p, g);
    std::shuffle(p.begin(), p.end(), rng);
    std::shuffle(g.begin(), g.end(), rng);
    const auto shuffled = localization_prf(p, g);
    EXPECT_NEAR(base.recall, shuffled.recall, 1e-9);
    EXPECT_NEAR(base.precision, shuffled.precision, 1e-9);
  }
}

TEST(EvalkitTest, DuplicatePredictionLowersPrecisionOnly) {
  std::mt19937_64 rng(4);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    // Disjoint ground truth, so the duplicate cannot pick up an unmatched event.
    const int n = std::uniform_int_distribution<int>(1, 5)(rng);
    std::vector<TimeSpan> g;
    for (int k = 0; k < n; ++k) {
      const double lo = std::uniform_real_distribution<double>(0.0, 0.05)(rng);
      const double hi = std::uniform_real_distribution<double>(0.1, 0.2)(rng);
      g.emplace_back(0.2 * k + lo, 0.2 * k + hi);
    }
    std::shuffle(g.begin(), g.end(), rng);
    std::vector<TimeSpan> p = g;
    p.resize(std::uniform_int_distribution<std::size_t>(1, g.size())(rng));
    const auto base = localization_prf(p, g);
    p.push_back(p[0]);
    const auto dup = localization_prf(p, g);
    EXPECT_EQ(dup.recall, base.recall);
    EXPECT_LT(dup.precision, base.precision);
    ++checked;
  }
  EXPECT_EQ(checked, 200);
}

TEST(EvalkitTest, RetrievalExamples) {
  const std::vector<TimeSpan> g{TimeSpan(0.1, 0.5), TimeSpan(0.5, 0.9)};
  const auto exact = moment_retrieval(g, g);
  EXPECT_EQ(exact.at(0.3), 100.0);
  EXPECT_EQ(exact.at(0.5), 100.0);
  EXPECT_EQ(exact.at(0.7), 100.0);
  EXPECT_EQ(exact.mean_iou, 1.0);

  // IoU 0.4.
  const auto one = moment_retrieval(std::vector{TimeSpan(0.0, 0.4)}, std::vector{TimeSpan(0.0, 1.0)});
  EXPECT_EQ(one.at(0.3), 100.0);
  EXPECT_EQ(one.at(0.5), 0.0);
  EXPECT_EQ(one.at(0.7), 0.0);
  EXPECT_NEAR(one.mean_iou, 0.4, 1e-12);

  // IoUs 0.6 and 0.2.
  const auto two = moment_retrieval(std::vector{TimeSpan(0.0, 0.6), TimeSpan(0.0, 0.2)},
                                    std::vector{TimeSpan(0.0, 1.0), TimeSpan(0.0, 1.0)});
  EXPECT_EQ(two.at(0.3), 50.0);
  EXPECT_EQ(two.at(0.5), 50.0);
  EXPECT_EQ(two.at(0.7), 0.0);
  EXPECT_NEAR(two.mean_iou, 0.4, 1e-12);
}

TEST(EvalkitTest, DenseCaptionExamples) {
  const std::vector<Event> g{truth(0.0, 0.3, {5, 6}), truth(0.5, 0.9, {7, 8})};
  const std::vector<PredictedEvent> perfect{pred(0.0, 0.3, {5, 6}), pred(0.5, 0.9, {7, 8})};
  EXPECT_EQ(dense_caption_score(perfect, g), 1.0);

  const std::vector<PredictedEvent> wrong_words{pred(0.0, 0.3, {9}), pred(0.5, 0.9, {10})};
  EXPECT_EQ(dense_caption_score(wrong_words, g), 0.0);

  // One of two events matched with similarity 0.5, the other missed.
  const std::vector<PredictedEvent> half{pred(0.0, 0.3, {5, 6}), pred(0.5, 0.9, {7, 9})};
  EXPECT_NEAR(dense_caption_score(half, g), 0.75, 1e-12);
  const std::vector<PredictedEvent> one_half{pred(0.0, 0.3, {5, 6}), pred(0.5, 0.9, {9, 10})};
  EXPECT_NEAR(dense_caption_score(one_half, g), 0.5, 1e-12);
  const std::vector<PredictedEvent> both_half{pred(0.0, 0.3, {5, 9}), pred(0.5, 0.9, {7, 9})};
  EXPECT_NEAR(dense_caption_score(both_half, g), 0.5, 1e-12);
}

TEST(EvalkitTest, SodaExamples) {
  const std::vector<Event> g{truth(0.0, 0.6, {5, 6}), truth(0.2, 0.8, {7, 8})};
  EXPECT_NEAR(soda_like(as_predictions(g), g), 1.0, 1e-12);

  const std::vector<PredictedEvent> in_order{pred(0.1, 0.7, {5, 6}), pred(0.15, 0.75, {7, 8})};
  const std::vector<PredictedEvent> crossed{pred(0.1, 0.7, {7, 8}), pred(0.15, 0.75, {5, 6})};
  EXPECT_LT(soda_like(crossed, g), soda_like(in_order, g));

  Eigen::MatrixXd gain(2, 2);
  gain << 1.0, 0.2, 0.3, 0.9;
  EXPECT_NEAR(monotone_match_value(gain), 1.9, 1e-12);
  Eigen::MatrixXd anti(2, 2);
  anti << 0.2, 1.0, 0.9, 0.3;
  EXPECT_NEAR(monotone_match_value(anti), 1.0, 1e-12);
}

TEST(EvalkitTest, SodaOfAnyListWithItselfIsOne) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto e = random_events(rng, std::uniform_int_distribution<int>(1, 6)(rng));
    EXPECT_NEAR(soda_like(as_predictions(e), e), 1.0, 1e-12) << trial;
  }
}

TEST(EvalkitTest, SodaMatchesBruteForce) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    const int np = std::uniform_int_distribution<int>(1, 6)(rng);
    const int ng = std::uniform_int_distribution<int>(1, 6)(rng);
    const auto pe = as_predictions(random_events(rng, np));
    const auto ge = random_events(rng, ng);
    Eigen::MatrixXd gain(np, ng);
    for (int i = 0; i < np; ++i)
      for (int j = 0; j < ng; ++j)
        gain(i, j) = temporal_iou(pe[static_cast<std::size_t>(i)].span, ge[static_cast<std::size_t>(j)].span) *
                     caption_similarity(pe[static_cast<std::size_t>(i)].caption, ge[static_cast<std::size_t>(j)].caption);
    const double best = testing::brute_force_monotone_matching(gain);
    EXPECT_NEAR(monotone_match_value(gain), best, 1e-12);
    const double p = best / np;
    const double r = best / ng;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    EXPECT_NEAR(soda_like(pe, ge), f, 1e-12) << trial;
  }
}

TEST(EvalkitTest, GroundTruthAsPredictionsScoresPerfectly) {
  GenConfig g;
  g.num_videos = 30;
  g.seed = 2;
  Dataset data = generate_dataset(g);
  std::vector<VideoPrediction> preds;
  for (const auto& v : data.videos) preds.push_back({v.id, as_predictions(v.events)});
  const EvalReport r = evaluate(data, preds);
  EXPECT_EQ(r.samples, 30);
  EXPECT_EQ(r.excluded, 0);
  for (const char* k : {"localization_recall", "localization_precision", "localization_f1", "dense_caption",
                        "soda_like"}) {
    ASSERT_TRUE(r.metrics.count(k)) << k;
    EXPECT_NEAR(r.metrics.at(k), 100.0, 1e-9) << k;
  }
  EXPECT_EQ(r.kernel, "simplified-kernel");

  // A repeated caption is answered by its first event, so retrieval is exact only
  // when every caption in a video is distinct.
  std::erase_if(data.videos, [](const VideoSample& v) {
    for (std::size_t i = 0; i < v.events.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (v.events[i].caption == v.events[j].caption) return true;
    return false;
  });
  ASSERT_GE(data.videos.size(), 10u);
  const EvalReport distinct = evaluate(data, preds);
  for (const char* k : {"retrieval_r@0.3", "retrieval_r@0.5", "retrieval_r@0.7"}) {
    EXPECT_NEAR(distinct.metrics.at(k), 100.0, 1e-9) << k;
  }
  EXPECT_NEAR(distinct.metrics.at("retrieval_miou"), 1.0, 1e-12);
}

TEST(EvalkitTest, ReportedScoresStayInRange) {
  GenConfig g;
  g.num_videos = 20;
  g.seed = 5;
  const Dataset data = generate_dataset(g);
  std::mt19937_64 rng(1);
  std::vector<VideoPrediction> preds;
  for (const auto& v : data.videos) {
    VideoPrediction p{v.id, {}};
    for (const auto& e : random_events(rng, std::uniform_int_distribution<int>(0, 5)(rng))) {
      p.events.push_back(PredictedEvent{e.span, e.caption});
    }
    preds.push_back(p);
  }
  const EvalReport r = evaluate(data, preds);
  for (const auto& [k, v] : r.metrics) {
    EXPECT_GE(v, 0.0) << k;
    EXPECT_LE(v, k == "retrieval_miou" ? 1.0 : 100.0) << k;
  }
  preds.push_back(preds[0]);
  EXPECT_THROW(evaluate(data, preds), std::invalid_argument);
}

}  // namespace
}  // namespace tap

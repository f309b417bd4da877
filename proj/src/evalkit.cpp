#include "tap/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

namespace tap {
namespace {

double harmonic(double a, double b) { return a + b > 0.0 ? 2.0 * a * b / (a + b) : 0.0; }

std::vector<TimeSpan> spans_of(std::span<const PredictedEvent> events) {
  std::vector<TimeSpan> out;
  for (const auto& e : events) out.push_back(e.span);
  return out;
}

std::vector<TimeSpan> spans_of(std::span<const Event> events) {
  std::vector<TimeSpan> out;
  for (const auto& e : events) out.push_back(e.span);
  return out;
}

template <typename E>
std::vector<const E*> start_ordered(std::span<const E> events) {
  std::vector<const E*> out;
  for (const auto& e : events) out.push_back(&e);
  std::stable_sort(out.begin(), out.end(), [](const E* a, const E* b) { return a->span.start() < b->span.start(); });
  return out;
}

}  // namespace

double caption_similarity(const Caption& a, const Caption& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::unordered_map<int, int> counts;
  for (int t : b) ++counts[t];
  int overlap = 0;
  for (int t : a) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  const double p = static_cast<double>(overlap) / static_cast<double>(a.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(b.size());
  return harmonic(p, r);
}

std::vector<std::pair<int, int>> greedy_iou_match(std::span<const TimeSpan> preds, std::span<const TimeSpan> truths,
                                                  double threshold) {
  std::vector<std::tuple<double, int, int>> cand;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t j = 0; j < truths.size(); ++j) {
      const double iou = temporal_iou(preds[i], truths[j]);
      if (iou >= threshold && iou > 0.0) cand.emplace_back(iou, static_cast<int>(i), static_cast<int>(j));
    }
  }
  std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });
  std::vector<bool> pred_used(preds.size(), false);
  std::vector<bool> truth_used(truths.size(), false);
  std::vector<std::pair<int, int>> out;
  for (const auto& [iou, i, j] : cand) {
    if (pred_used[static_cast<std::size_t>(i)] || truth_used[static_cast<std::size_t>(j)]) continue;
    pred_used[static_cast<std::size_t>(i)] = true;
    truth_used[static_cast<std::size_t>(j)] = true;
    out.emplace_back(i, j);
  }
  return out;
}

LocalizationScore localization_prf(std::span<const TimeSpan> preds, std::span<const TimeSpan> truths,
                                   const std::vector<double>& thresholds) {
  return localization_prf(std::vector<std::vector<TimeSpan>>{{preds.begin(), preds.end()}},
                          std::vector<std::vector<TimeSpan>>{{truths.begin(), truths.end()}}, thresholds);
}

LocalizationScore localization_prf(const std::vector<std::vector<TimeSpan>>& preds,
                                   const std::vector<std::vector<TimeSpan>>& truths,
                                   const std::vector<double>& thresholds) {
  if (preds.size() != truths.size()) {
    throw std::invalid_argument("localization_prf: " + std::to_string(preds.size()) + " prediction lists for " +
                                std::to_string(truths.size()) + " videos");
  }
  if (thresholds.empty()) throw std::invalid_argument("localization_prf: no thresholds");
  LocalizationScore out;
  for (double t : thresholds) out.per_threshold.push_back({t, 0.0, 0.0});
  for (std::size_t v = 0; v < truths.size(); ++v) {
    if (truths[v].empty()) {
      ++out.excluded;
      continue;
    }
    ++out.videos;
    for (auto& pt : out.per_threshold) {
      const auto m = static_cast<double>(greedy_iou_match(preds[v], truths[v], pt.threshold).size());
      pt.recall += m / static_cast<double>(truths[v].size());
      if (!preds[v].empty()) pt.precision += m / static_cast<double>(preds[v].size());
    }
  }
  if (out.videos == 0) return out;
  for (auto& pt : out.per_threshold) {
    pt.recall *= 100.0 / out.videos;
    pt.precision *= 100.0 / out.videos;
    out.recall += pt.recall / static_cast<double>(thresholds.size());
    out.precision += pt.precision / static_cast<double>(thresholds.size());
  }
  out.f1 = harmonic(out.recall, out.precision);
  return out;
}

double RetrievalScore::at(double threshold) const {
  for (const auto& [t, r] : recall_at)
    if (t == threshold) return r;
  throw std::out_of_range("no recall at threshold " + std::to_string(threshold));
}

RetrievalScore moment_retrieval(std::span<const TimeSpan> preds, std::span<const TimeSpan> truths,
                                const std::vector<double>& thresholds) {
  if (preds.size() != truths.size()) {
    throw std::invalid_argument("moment_retrieval: " + std::to_string(preds.size()) + " predictions for " +
                                std::to_string(truths.size()) + " queries");
  }
  RetrievalScore out;
  out.queries = static_cast<int>(truths.size());
  for (double t : thresholds) out.recall_at.emplace_back(t, 0.0);
  if (truths.empty()) return out;
  for (std::size_t q = 0; q < truths.size(); ++q) {
    const double iou = temporal_iou(preds[q], truths[q]);
    out.mean_iou += iou;
    for (auto& [t, r] : out.recall_at)
      if (iou >= t) r += 1.0;
  }
  const auto n = static_cast<double>(truths.size());
  out.mean_iou /= n;
  for (auto& [t, r] : out.recall_at) r *= 100.0 / n;
  return out;
}

std::vector<TimeSpan> retrieve_by_caption(std::span<const PredictedEvent> preds, std::span<const Event> truths) {
  std::vector<TimeSpan> out;
  for (const auto& g : truths) {
    if (preds.empty()) {
      out.emplace_back(0.0, 0.0);
      continue;
    }
    std::size_t best = 0;
    double best_sim = -1.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const double s = caption_similarity(preds[i].caption, g.caption);
      if (s > best_sim) {
        best_sim = s;
        best = i;
      }
    }
    out.push_back(preds[best].span);
  }
  return out;
}

double dense_caption_score(std::span<const PredictedEvent> preds, std::span<const Event> truths,
                           const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw std::invalid_argument("dense_caption_score: no thresholds");
  if (preds.empty() && truths.empty()) return 0.0;
  const auto ps = spans_of(preds);
  const auto gs = spans_of(truths);
  const double denom = static_cast<double>(preds.size() + truths.size());
  double total = 0.0;
  for (double t : thresholds) {
    double s = 0.0;
    for (const auto& [i, j] : greedy_iou_match(ps, gs, t)) {
      s += caption_similarity(preds[static_cast<std::size_t>(i)].caption, truths[static_cast<std::size_t>(j)].caption);
    }
    total += 2.0 * s / denom;
  }
  return total / static_cast<double>(thresholds.size());
}

double monotone_match_value(const Eigen::MatrixXd& gain) {
  const Eigen::Index n = gain.rows();
  const Eigen::Index m = gain.cols();
  Eigen::MatrixXd dp = Eigen::MatrixXd::Zero(n + 1, m + 1);
  for (Eigen::Index i = 1; i <= n; ++i) {
    for (Eigen::Index j = 1; j <= m; ++j) {
      dp(i, j) = std::max({dp(i - 1, j), dp(i, j - 1), dp(i - 1, j - 1) + gain(i - 1, j - 1)});
    }
  }
  return dp(n, m);
}

double soda_like(std::span<const PredictedEvent> preds, std::span<const Event> truths) {
  if (preds.empty() || truths.empty()) return 0.0;
  const auto p = start_ordered(preds);
  const auto g = start_ordered(truths);
  Eigen::MatrixXd gain(static_cast<Eigen::Index>(p.size()), static_cast<Eigen::Index>(g.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < g.size(); ++j) {
      gain(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          temporal_iou(p[i]->span, g[j]->span) * caption_similarity(p[i]->caption, g[j]->caption);
    }
  }
  const double opt = monotone_match_value(gain);
  return harmonic(opt / static_cast<double>(p.size()), opt / static_cast<double>(g.size()));
}

std::vector<PredictedEvent> as_predictions(const std::vector<Event>& events) {
  std::vector<PredictedEvent> out;
  for (const auto& e : events) out.push_back(PredictedEvent{e.span, e.caption, 1.0, 1.0, 0.0});
  return out;
}

EvalReport evaluate(const Dataset& truth, const std::vector<VideoPrediction>& preds) {
  std::unordered_map<std::string, const VideoPrediction*> by_id;
  for (const auto& p : preds) {
    if (!by_id.emplace(p.video_id, &p).second) throw std::invalid_argument("duplicate prediction for " + p.video_id);
  }
  static const std::vector<PredictedEvent> kNone;

  EvalReport r;
  r.dense_caption_normalization =
      "per threshold: 2 * sum(similarity of IoU-matched pairs) / (|predictions| + |ground truth|), "
      "greedy one-to-one IoU matching, averaged over thresholds, then over videos";

  std::vector<std::vector<TimeSpan>> pred_spans;
  std::vector<std::vector<TimeSpan>> true_spans;
  std::vector<TimeSpan> retrieved;
  std::vector<TimeSpan> queries;
  std::vector<double> dense_per_t(kLocalizationThresholds.size(), 0.0);
  double dense = 0.0;
  double soda = 0.0;
  for (const auto& v : truth.videos) {
    auto it = by_id.find(v.id);
    const std::vector<PredictedEvent>& pe = it == by_id.end() ? kNone : it->second->events;
    pred_spans.push_back(spans_of(pe));
    true_spans.push_back(spans_of(v.events));
    if (v.events.empty()) continue;
    ++r.samples;
    for (std::size_t k = 0; k < kLocalizationThresholds.size(); ++k) {
      dense_per_t[k] += dense_caption_score(pe, v.events, {kLocalizationThresholds[k]});
    }
    dense += dense_caption_score(pe, v.events);
    soda += soda_like(pe, v.events);
    for (const auto& s : retrieve_by_caption(pe, v.events)) retrieved.push_back(s);
    for (const auto& e : v.events) queries.push_back(e.span);
  }
  r.excluded = static_cast<int>(truth.videos.size()) - r.samples;

  const LocalizationScore loc = localization_prf(pred_spans, true_spans);
  r.metrics["localization_recall"] = loc.recall;
  r.metrics["localization_precision"] = loc.precision;
  r.metrics["localization_f1"] = loc.f1;
  r.localization_per_threshold = loc.per_threshold;

  const double n = r.samples > 0 ? static_cast<double>(r.samples) : 1.0;
  r.metrics["dense_caption"] = 100.0 * dense / n;
  r.metrics["soda_like"] = 100.0 * soda / n;
  for (std::size_t k = 0; k < kLocalizationThresholds.size(); ++k) {
    r.dense_caption_per_threshold.emplace_back(kLocalizationThresholds[k], 100.0 * dense_per_t[k] / n);
  }

  const RetrievalScore mr = moment_retrieval(retrieved, queries);
  for (const auto& [t, rec] : mr.recall_at) {
    char key[32];
    std::snprintf(key, sizeof(key), "retrieval_r@%.1f", t);
    r.metrics[key] = rec;
  }
  r.metrics["retrieval_miou"] = mr.mean_iou;
  r.retrieval_per_threshold = mr.recall_at;
  return r;
}

}  // namespace tap

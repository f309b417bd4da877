#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tap/dataset.hpp"

namespace tap {

inline const std::vector<double> kLocalizationThresholds{0.3, 0.5, 0.7, 0.9};
inline const std::vector<double> kRetrievalThresholds{0.3, 0.5, 0.7};

/// Token-multiset F1 with clipped counts; 0 when either side is empty.
double caption_similarity(const Caption& a, const Caption& b);

/// One-to-one matching by descending IoU, keeping pairs with IoU >= threshold.
/// Ties go to the earlier prediction, then the earlier ground truth.
std::vector<std::pair<int, int>> greedy_iou_match(std::span<const TimeSpan> preds, std::span<const TimeSpan> truths,
                                                  double threshold);

struct ThresholdPR {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

/// Scores in [0, 100].
struct LocalizationScore {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  std::vector<ThresholdPR> per_threshold;
  int videos = 0;
  int excluded = 0;  // videos without ground truth
};

LocalizationScore localization_prf(std::span<const TimeSpan> preds, std::span<const TimeSpan> truths,
                                   const std::vector<double>& thresholds = kLocalizationThresholds);
/// Per-video recall and precision averaged over videos, then over thresholds.
LocalizationScore localization_prf(const std::vector<std::vector<TimeSpan>>& preds,
                                   const std::vector<std::vector<TimeSpan>>& truths,
                                   const std::vector<double>& thresholds = kLocalizationThresholds);

/// R@t in [0, 100], mean IoU in [0, 1].
struct RetrievalScore {
  std::vector<std::pair<double, double>> recall_at;  // (threshold, R@threshold)
  double mean_iou = 0.0;
  int queries = 0;

  double at(double threshold) const;
};

/// One prediction per query.
RetrievalScore moment_retrieval(std::span<const TimeSpan> preds, std::span<const TimeSpan> truths,
                                const std::vector<double>& thresholds = kRetrievalThresholds);

/// Answers each ground-truth caption with the predicted event whose caption is most similar
/// (first on ties). Returns one span per ground-truth event; empty predictions answer (0, 0).
std::vector<TimeSpan> retrieve_by_caption(std::span<const PredictedEvent> preds, std::span<const Event> truths);

/// At each threshold: 2 * sum of caption similarity over IoU-matched pairs / (|preds| + |truths|),
/// then averaged over thresholds. In [0, 1].
double dense_caption_score(std::span<const PredictedEvent> preds, std::span<const Event> truths,
                           const std::vector<double>& thresholds = kLocalizationThresholds);

/// Order-preserving matching maximizing sum of IoU * caption similarity; F-measure of
/// (optimum / |preds|, optimum / |truths|). Both lists are read in start order. In [0, 1].
double soda_like(std::span<const PredictedEvent> preds, std::span<const Event> truths);

/// Optimal order-preserving total for a gain matrix (rows preds, cols truths).
double monotone_match_value(const Eigen::MatrixXd& gain);

struct EvalReport {
  std::string kernel = "simplified-kernel";
  std::string dense_caption_normalization;
  std::map<std::string, double> metrics;
  std::vector<ThresholdPR> localization_per_threshold;
  std::vector<std::pair<double, double>> dense_caption_per_threshold;
  std::vector<std::pair<double, double>> retrieval_per_threshold;
  int samples = 0;
  int excluded = 0;
};

/// Scores predictions against a dataset. Videos without a prediction count as empty.
EvalReport evaluate(const Dataset& truth, const std::vector<VideoPrediction>& preds);

std::vector<PredictedEvent> as_predictions(const std::vector<Event>& events);

}  // namespace tap

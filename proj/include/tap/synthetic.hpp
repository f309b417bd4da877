#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tap/dataset.hpp"

namespace tap {

/// Planted-event dataset settings.
struct GenConfig {
  int num_videos = 200;
  int num_frames = 64;
  int feature_dim = 16;
  int num_event_classes = 8;
  int min_events = 1;
  int max_events = 4;
  int min_event_frames = 6;
  int max_event_frames = 20;
  double noise = 0.1;
  /// Largest IoU allowed between two planted events of one video.
  double max_overlap = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Caption words of event class `k`.
const std::vector<std::string>& class_template(int k);
int num_class_templates();

/// Deterministic unit-norm vector for a word, derived from its bytes only.
nd::RowVector token_vector(const std::string& word, int dim);
/// Mean of the token vectors of `words`, scaled to unit norm.
nd::RowVector bag_of_tokens(const std::vector<std::string>& words, int dim);
/// Frame signature of event class `k`.
nd::RowVector class_signature(int k, int dim);
nd::RowVector background_signature(int dim);

Dataset generate_dataset(const GenConfig& cfg);

/// Index of the class whose template equals `caption`, or -1.
int class_of_caption(const Vocab& vocab, const Caption& caption, int num_classes);

}  // namespace tap

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tap/ndiff/tensor.hpp"
#include "tap/temporal.hpp"

namespace tap {

/// Token inventory. The first five ids are reserved.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;  // "<s>", opens every caption
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;  // opens every event
  static constexpr int kSlot = 4;  // replaced by the encoded anchor
  static constexpr int kNumReserved = 5;

  Vocab();
  /// `tokens` must start with the five reserved strings in order.
  explicit Vocab(std::vector<std::string> tokens);

  int add(const std::string& word);
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  static bool is_reserved(int id) { return id >= 0 && id < kNumReserved; }

  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

using Caption = std::vector<int>;

struct Event {
  TimeSpan span;
  Caption caption;
};

struct VideoSample {
  std::string id;
  nd::Matrix features;  // num_frames x feature_dim
  std::vector<Event> events;  // sorted by start

  int num_frames() const { return static_cast<int>(features.rows()); }
  std::vector<TemporalAnchor> anchors() const;
};

/// One decoded event with the scores that selected it.
struct PredictedEvent {
  TimeSpan span;
  Caption caption;
  double score = 0.0;
  double s_cs = 0.0;
  double s_as = 0.0;
};

struct VideoPrediction {
  std::string video_id;
  std::vector<PredictedEvent> events;
};

struct Dataset {
  int feature_dim = 0;
  Vocab vocab;
  std::vector<VideoSample> videos;

  std::size_t max_events() const;
};

/// Normalized time of the center of frame `f` in a `num_frames` video.
inline double frame_time(int f, int num_frames) { return (f + 0.5) / static_cast<double>(num_frames); }

/// Indices of frames whose center lies inside `span`.
std::vector<int> frames_in_span(const TimeSpan& span, int num_frames);

}  // namespace tap

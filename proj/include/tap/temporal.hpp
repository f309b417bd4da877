#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tap {

/// A (center, duration) pair in normalized video time.
template <typename Scalar>
class BasicAnchor {
 public:
  BasicAnchor() = default;
  BasicAnchor(Scalar center, Scalar duration) : center_(center), duration_(duration) {
    if (!(center >= Scalar(0) && center <= Scalar(1)) ||
        !(duration >= Scalar(0) && duration <= Scalar(1))) {
      throw std::invalid_argument("anchor out of [0,1]^2: (" + std::to_string(double(center)) +
                                  ", " + std::to_string(double(duration)) + ")");
    }
  }

  Scalar center() const { return center_; }
  Scalar duration() const { return duration_; }

  friend bool operator==(const BasicAnchor&, const BasicAnchor&) = default;

 private:
  Scalar center_{0.5};
  Scalar duration_{0.5};
};

/// A [start, end] interval in normalized video time.
template <typename Scalar>
class BasicSpan {
 public:
  BasicSpan() = default;
  BasicSpan(Scalar start, Scalar end) : start_(start), end_(end) {
    if (!(start >= Scalar(0) && end <= Scalar(1) && start <= end)) {
      throw std::invalid_argument("invalid span: (" + std::to_string(double(start)) + ", " +
                                  std::to_string(double(end)) + ")");
    }
  }

  Scalar start() const { return start_; }
  Scalar end() const { return end_; }
  Scalar length() const { return end_ - start_; }

  friend bool operator==(const BasicSpan&, const BasicSpan&) = default;

 private:
  Scalar start_{0};
  Scalar end_{0};
};

using TemporalAnchor = BasicAnchor<double>;
using TimeSpan = BasicSpan<double>;

template <typename Scalar>
BasicSpan<Scalar> span_from_anchor(const BasicAnchor<Scalar>& a) {
  const Scalar half = a.duration() / Scalar(2);
  return {std::clamp(a.center() - half, Scalar(0), Scalar(1)),
          std::clamp(a.center() + half, Scalar(0), Scalar(1))};
}

template <typename Scalar>
BasicAnchor<Scalar> anchor_from_span(const BasicSpan<Scalar>& s) {
  return {(s.start() + s.end()) / Scalar(2), s.end() - s.start()};
}

template <typename Scalar>
Scalar temporal_iou(const BasicSpan<Scalar>& a, const BasicSpan<Scalar>& b) {
  const Scalar inter = std::max(Scalar(0), std::min(a.end(), b.end()) - std::max(a.start(), b.start()));
  const Scalar uni = a.length() + b.length() - inter;
  return uni > Scalar(0) ? inter / uni : Scalar(0);
}

/// Intersection over the enclosing hull of both spans.
template <typename Scalar>
Scalar hull_overlap_ratio(const BasicSpan<Scalar>& a, const BasicSpan<Scalar>& b) {
  const Scalar inter = std::max(Scalar(0), std::min(a.end(), b.end()) - std::max(a.start(), b.start()));
  const Scalar hull = std::max(a.end(), b.end()) - std::min(a.start(), b.start());
  return hull > Scalar(0) ? inter / hull : Scalar(0);
}

}  // namespace tap

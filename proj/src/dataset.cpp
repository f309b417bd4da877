#include "tap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tap {

namespace {
const std::vector<std::string> kReserved{"<pad>", "<s>", "</s>", "<sep>", "<slot>"};
}

Vocab::Vocab() : Vocab(kReserved) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kReserved.size() || !std::equal(kReserved.begin(), kReserved.end(), tokens_.begin())) {
    throw std::invalid_argument("vocab must start with <pad> <s> </s> <sep> <slot>");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocab token " + tokens_[i]);
    }
  }
}

int Vocab::add(const std::string& word) {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  tokens_.push_back(word);
  index_.emplace(word, size() - 1);
  return size() - 1;
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw std::out_of_range("token not in vocab: " + token);
  return it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::vector<TemporalAnchor> VideoSample::anchors() const {
  std::vector<TemporalAnchor> out;
  out.reserve(events.size());
  for (const Event& e : events) out.push_back(anchor_from_span(e.span));
  return out;
}

std::size_t Dataset::max_events() const {
  std::size_t m = 0;
  for (const auto& v : videos) m = std::max(m, v.events.size());
  return m;
}

std::vector<int> frames_in_span(const TimeSpan& span, int num_frames) {
  std::vector<int> out;
  const int first = std::max(0, static_cast<int>(std::ceil(span.start() * num_frames - 0.5)));
  for (int f = first; f < num_frames; ++f) {
    const double t = frame_time(f, num_frames);
    if (t > span.end()) break;
    if (t >= span.start()) out.push_back(f);
  }
  return out;
}

}  // namespace tap

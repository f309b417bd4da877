#include "tap/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace tap {
namespace {

const std::vector<std::vector<std::string>> kTemplates{
    {"person", "pours", "water", "into", "glass"},
    {"chef", "chops", "the", "onion"},
    {"man", "opens", "the", "door"},
    {"dog", "runs", "across", "field"},
    {"woman", "plays", "the", "piano"},
    {"kid", "throws", "red", "ball"},
    {"crowd", "claps", "loudly"},
    {"car", "drives", "down", "road"},
    {"bird", "lands", "on", "branch"},
    {"girl", "rides", "a", "bicycle"},
    {"player", "kicks", "soccer", "ball"},
    {"baby", "laughs", "happily"},
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct FrameSpan {
  int begin;
  int end;  // exclusive
};

double frame_iou(const FrameSpan& a, const FrameSpan& b) {
  const int inter = std::max(0, std::min(a.end, b.end) - std::max(a.begin, b.begin));
  const int uni = (a.end - a.begin) + (b.end - b.begin) - inter;
  return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

}  // namespace

void GenConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("gen config: " + m); };
  if (num_videos < 1) fail("num_videos must be >= 1");
  if (num_frames < 1) fail("num_frames must be >= 1");
  if (feature_dim < 1) fail("feature_dim must be >= 1");
  if (num_event_classes < 2 || num_event_classes > num_class_templates()) {
    fail("num_event_classes must be in [2, " + std::to_string(num_class_templates()) + "]");
  }
  if (min_events < 1 || max_events < min_events) fail("need 1 <= min_events <= max_events");
  if (min_event_frames < 1 || max_event_frames < min_event_frames) {
    fail("need 1 <= min_event_frames <= max_event_frames");
  }
  if (max_event_frames > num_frames) fail("max_event_frames exceeds num_frames");
  if (!(noise >= 0.0)) fail("noise must be >= 0");
  if (!(max_overlap >= 0.0 && max_overlap < 1.0)) fail("max_overlap must be in [0, 1)");
}

const std::vector<std::string>& class_template(int k) { return kTemplates.at(static_cast<std::size_t>(k)); }
int num_class_templates() { return static_cast<int>(kTemplates.size()); }

nd::RowVector token_vector(const std::string& word, int dim) {
  std::mt19937_64 rng(fnv1a(word));
  std::normal_distribution<double> n(0.0, 1.0);
  nd::RowVector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = n(rng);
  return v / v.norm();
}

nd::RowVector bag_of_tokens(const std::vector<std::string>& words, int dim) {
  nd::RowVector v = nd::RowVector::Zero(dim);
  for (const auto& w : words) v += token_vector(w, dim);
  const double norm = v.norm();
  return norm > 0.0 ? nd::RowVector(v / norm) : v;
}

nd::RowVector class_signature(int k, int dim) { return bag_of_tokens(class_template(k), dim); }

nd::RowVector background_signature(int dim) { return token_vector("<background>", dim); }

Dataset generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.feature_dim = cfg.feature_dim;
  for (int k = 0; k < cfg.num_event_classes; ++k)
    for (const auto& w : class_template(k)) ds.vocab.add(w);

  std::vector<nd::RowVector> signatures;
  for (int k = 0; k < cfg.num_event_classes; ++k) signatures.push_back(class_signature(k, cfg.feature_dim));
  const nd::RowVector background = background_signature(cfg.feature_dim);

  const int T = cfg.num_frames;
  for (int vi = 0; vi < cfg.num_videos; ++vi) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(vi)};
    std::mt19937_64 rng(seq);
    const int n_events = std::uniform_int_distribution<int>(cfg.min_events, cfg.max_events)(rng);

    std::vector<FrameSpan> spans;
    for (int attempt = 0; attempt < 50 && static_cast<int>(spans.size()) < n_events; ++attempt) {
      spans.clear();
      for (int e = 0; e < n_events; ++e) {
        bool placed = false;
        for (int tries = 0; tries < 200 && !placed; ++tries) {
          const int len = std::uniform_int_distribution<int>(cfg.min_event_frames, cfg.max_event_frames)(rng);
          const int begin = std::uniform_int_distribution<int>(0, T - len)(rng);
          const FrameSpan cand{begin, begin + len};
          placed = std::all_of(spans.begin(), spans.end(),
                               [&](const FrameSpan& s) { return frame_iou(s, cand) <= cfg.max_overlap; });
          if (placed) spans.push_back(cand);
        }
        if (!placed) break;
      }
    }
    if (static_cast<int>(spans.size()) < n_events) {
      throw std::invalid_argument("gen config: cannot pack " + std::to_string(n_events) + " events into " +
                                  std::to_string(T) + " frames");
    }
    std::sort(spans.begin(), spans.end(), [](const FrameSpan& a, const FrameSpan& b) {
      return a.begin != b.begin ? a.begin < b.begin : a.end < b.end;
    });

    std::uniform_int_distribution<int> pick_class(0, cfg.num_event_classes - 1);
    std::vector<int> classes;
    for (std::size_t e = 0; e < spans.size(); ++e) classes.push_back(pick_class(rng));

    VideoSample v;
    char id[32];
    std::snprintf(id, sizeof(id), "vid%05d", vi);
    v.id = id;
    v.features.resize(T, cfg.feature_dim);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int f = 0; f < T; ++f) {
      nd::RowVector base = nd::RowVector::Zero(cfg.feature_dim);
      int covering = 0;
      for (std::size_t e = 0; e < spans.size(); ++e) {
        if (f >= spans[e].begin && f < spans[e].end) {
          base += signatures[static_cast<std::size_t>(classes[e])];
          ++covering;
        }
      }
      base = covering > 0 ? nd::RowVector(base / covering) : background;
      for (int d = 0; d < cfg.feature_dim; ++d) base(d) += cfg.noise * noise(rng);
      v.features.row(f) = base;
    }
    for (std::size_t e = 0; e < spans.size(); ++e) {
      v.events.push_back(Event{TimeSpan(static_cast<double>(spans[e].begin) / T, static_cast<double>(spans[e].end) / T),
                               ds.vocab.encode(class_template(classes[e]))});
    }
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

int class_of_caption(const Vocab& vocab, const Caption& caption, int num_classes) {
  for (int k = 0; k < num_classes; ++k) {
    const auto& words = class_template(k);
    if (words.size() != caption.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < words.size() && same; ++i) same = vocab.token(caption[i]) == words[i];
    if (same) return k;
  }
  return -1;
}

}  // namespace tap

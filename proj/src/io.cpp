#include "tap/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "tap/errors.hpp"

namespace tap {
namespace {

using nlohmann::json;

json header(const std::string& kind) { return json{{"kind", kind}, {"version", kFileVersion}}; }

void check_header(const json& j, const std::string& kind) {
  if (!j.is_object()) throw SchemaError("expected a JSON object of kind " + kind);
  const std::string got = j.contains("kind") && j["kind"].is_string() ? j["kind"].get<std::string>() : "";
  if (got != kind) throw SchemaError("expected kind " + kind + ", found '" + got + "'");
  if (!j.contains("version") || j["version"] != kFileVersion) {
    throw SchemaError(kind + " version " + (j.contains("version") ? j["version"].dump() : "missing") +
                      ", expected " + std::to_string(kFileVersion));
  }
}

/// Runs `f`, turning json and domain errors into SchemaError with `what` as context.
template <typename F>
auto guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const SchemaError&) {
    throw;
  } catch (const json::exception& e) {
    throw SchemaError(what + ": " + e.what());
  } catch (const std::logic_error& e) {
    throw SchemaError(what + ": " + e.what());
  }
}

json caption_json(const Caption& c, const Vocab& vocab) {
  json out = json::array();
  for (int t : c) out.push_back(vocab.token(t));
  return out;
}

Caption caption_from(const json& j, const Vocab& vocab) {
  Caption c;
  for (const auto& w : j) {
    const int id = vocab.id(w.get<std::string>());
    if (Vocab::is_reserved(id)) throw SchemaError("caption contains reserved token " + w.get<std::string>());
    c.push_back(id);
  }
  return c;
}

}  // namespace

json dataset_to_json(const Dataset& data) {
  json j = header("tap-dataset");
  j["feature_dim"] = data.feature_dim;
  j["vocab"] = data.vocab.tokens();
  json videos = json::array();
  for (const auto& v : data.videos) {
    json rows = json::array();
    for (Eigen::Index f = 0; f < v.features.rows(); ++f) {
      json row = json::array();
      for (Eigen::Index k = 0; k < v.features.cols(); ++k) row.push_back(v.features(f, k));
      rows.push_back(std::move(row));
    }
    json events = json::array();
    for (const auto& e : v.events) {
      events.push_back({{"start", e.span.start()}, {"end", e.span.end()}, {"caption", caption_json(e.caption, data.vocab)}});
    }
    videos.push_back({{"id", v.id}, {"num_frames", v.num_frames()}, {"features", std::move(rows)}, {"events", std::move(events)}});
  }
  j["videos"] = std::move(videos);
  return j;
}

Dataset dataset_from_json(const json& j) {
  check_header(j, "tap-dataset");
  return guarded("dataset", [&] {
    Dataset d;
    d.feature_dim = j.at("feature_dim").get<int>();
    if (d.feature_dim < 1) throw SchemaError("dataset feature_dim must be >= 1");
    d.vocab = Vocab(j.at("vocab").get<std::vector<std::string>>());
    for (const auto& jv : j.at("videos")) {
      VideoSample v;
      v.id = jv.at("id").get<std::string>();
      const int frames = jv.at("num_frames").get<int>();
      const auto& rows = jv.at("features");
      if (frames < 1 || rows.size() != static_cast<std::size_t>(frames)) {
        throw SchemaError("video " + v.id + ": num_frames " + std::to_string(frames) + " but " +
                          std::to_string(rows.size()) + " feature rows");
      }
      v.features.resize(frames, d.feature_dim);
      for (int f = 0; f < frames; ++f) {
        const auto& row = rows[static_cast<std::size_t>(f)];
        if (row.size() != static_cast<std::size_t>(d.feature_dim)) {
          throw SchemaError("video " + v.id + " frame " + std::to_string(f) + " has " + std::to_string(row.size()) +
                            " features, expected " + std::to_string(d.feature_dim));
        }
        for (int k = 0; k < d.feature_dim; ++k) v.features(f, k) = row[static_cast<std::size_t>(k)].get<double>();
      }
      for (const auto& je : jv.at("events")) {
        v.events.push_back(Event{TimeSpan(je.at("start").get<double>(), je.at("end").get<double>()),
                                 caption_from(je.at("caption"), d.vocab)});
      }
      d.videos.push_back(std::move(v));
    }
    return d;
  });
}

json predictions_to_json(const std::vector<VideoPrediction>& preds, const Vocab& vocab, const std::string& decode) {
  json j = header("tap-predictions");
  j["decode"] = decode;
  json videos = json::array();
  for (const auto& p : preds) {
    json events = json::array();
    for (const auto& e : p.events) {
      events.push_back({{"start", e.span.start()},
                        {"end", e.span.end()},
                        {"caption", caption_json(e.caption, vocab)},
                        {"score", e.score},
                        {"s_cs", e.s_cs},
                        {"s_as", e.s_as}});
    }
    videos.push_back({{"video_id", p.video_id}, {"events", std::move(events)}});
  }
  j["predictions"] = std::move(videos);
  return j;
}

std::vector<VideoPrediction> predictions_from_json(const json& j, const Vocab& vocab) {
  check_header(j, "tap-predictions");
  return guarded("predictions", [&] {
    std::vector<VideoPrediction> out;
    for (const auto& jv : j.at("predictions")) {
      VideoPrediction p;
      p.video_id = jv.at("video_id").get<std::string>();
      for (const auto& je : jv.at("events")) {
        p.events.push_back(PredictedEvent{TimeSpan(je.at("start").get<double>(), je.at("end").get<double>()),
                                          caption_from(je.at("caption"), vocab), je.value("score", 0.0),
                                          je.value("s_cs", 0.0), je.value("s_as", 0.0)});
      }
      out.push_back(std::move(p));
    }
    return out;
  });
}

json report_to_json(const EvalReport& r) {
  json j = header("tap-report");
  j["kernel"] = r.kernel;
  j["dense_caption_normalization"] = r.dense_caption_normalization;
  j["metrics"] = r.metrics;
  json loc = json::array();
  for (const auto& t : r.localization_per_threshold) {
    loc.push_back({{"threshold", t.threshold}, {"recall", t.recall}, {"precision", t.precision}});
  }
  j["localization_per_threshold"] = std::move(loc);
  json dense = json::array();
  for (const auto& [t, s] : r.dense_caption_per_threshold) dense.push_back({{"threshold", t}, {"score", s}});
  j["dense_caption_per_threshold"] = std::move(dense);
  json ret = json::array();
  for (const auto& [t, s] : r.retrieval_per_threshold) ret.push_back({{"threshold", t}, {"recall", s}});
  j["retrieval_per_threshold"] = std::move(ret);
  j["samples"] = r.samples;
  j["excluded"] = r.excluded;
  return j;
}

std::string report_table(const EvalReport& r) {
  std::size_t width = 6;
  for (const auto& [k, v] : r.metrics) width = std::max(width, k.size());
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-*s  %9s\n", static_cast<int>(width), "metric", "value");
  out << line;
  for (const auto& [k, v] : r.metrics) {
    std::snprintf(line, sizeof(line), "%-*s  %9.3f\n", static_cast<int>(width), k.c_str(), v);
    out << line;
  }
  std::snprintf(line, sizeof(line), "%-*s  %9d\n", static_cast<int>(width), "samples", r.samples);
  out << line;
  std::snprintf(line, sizeof(line), "%-*s  %9d\n", static_cast<int>(width), "excluded", r.excluded);
  out << line;
  out << "kernel: " << r.kernel << '\n';
  return out.str();
}

json localizer_trace_to_json(const LocalizerTrace& t) {
  json j = header("tap-localizer-trace");
  j["initial_loss"] = t.initial_loss;
  json epochs = json::array();
  for (std::size_t e = 0; e < t.epoch_loss.size(); ++e) epochs.push_back({{"epoch", e}, {"loss", t.epoch_loss[e]}});
  j["epochs"] = std::move(epochs);
  return j;
}

json stage_b_trace_to_json(const StageBTrace& t) {
  json j = header("tap-captioner-trace");
  json epochs = json::array();
  for (std::size_t e = 0; e < t.caption_loss.size(); ++e) {
    epochs.push_back({{"epoch", e}, {"caption_loss", t.caption_loss[e]}, {"denoise_loss", t.denoise_loss[e]}});
  }
  j["epochs"] = std::move(epochs);
  return j;
}

json read_json(const std::string& path, const std::string& kind) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError(path + " is not valid JSON: " + e.what());
  }
  check_header(j, kind);
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path);
  out << text;
  if (!out) throw FileError("failed writing " + path);
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

Dataset load_dataset(const std::string& path) { return dataset_from_json(read_json(path, "tap-dataset")); }

void save_dataset(const std::string& path, const Dataset& data) { write_json(path, dataset_to_json(data)); }

}  // namespace tap

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tap/captioner.hpp"
#include "tap/dataset.hpp"
#include "tap/evalkit.hpp"
#include "tap/localizer.hpp"

namespace tap {

inline constexpr int kFileVersion = 1;

// Every file written here is a JSON object with "kind" and "version". Readers throw
// SchemaError when either differs or the body is malformed, FileError when the path
// cannot be opened.

nlohmann::json dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const nlohmann::json& j);

nlohmann::json predictions_to_json(const std::vector<VideoPrediction>& preds, const Vocab& vocab,
                                   const std::string& decode);
std::vector<VideoPrediction> predictions_from_json(const nlohmann::json& j, const Vocab& vocab);

nlohmann::json report_to_json(const EvalReport& r);
/// Metric names and values in aligned columns, one per line.
std::string report_table(const EvalReport& r);

nlohmann::json localizer_trace_to_json(const LocalizerTrace& t);
nlohmann::json stage_b_trace_to_json(const StageBTrace& t);

/// Reads a file and checks kind and version.
nlohmann::json read_json(const std::string& path, const std::string& kind);
/// Writes with two-space indent and a trailing newline.
void write_json(const std::string& path, const nlohmann::json& j);
void write_text(const std::string& path, const std::string& text);

Dataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const Dataset& data);

}  // namespace tap

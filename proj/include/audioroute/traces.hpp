#pragma once

#include "audioroute/core.hpp"

#include <map>
#include <string>
#include <vector>

namespace audioroute {

// Line-delimited trace interchange: one JSON object per line, holding the
// per-action correctness a real reasoner/tool pass recorded for a question.
//   {"id":..., "category":..., "features":[...] | "flags":[...], "options":n,
//    "acc_dir":0|1, "tools":{name:{"acc":0|1,"executed":bool}, ...}}
// Replayed instances are deterministic by construction: the recorded bits are
// the outcome, and tools with executed=false become execution failures.

struct TraceLineError {
    std::size_t line = 0;
    std::string message;
};

struct TraceLoadOptions {
    bool allow_empty = false;
    std::uint32_t feature_dim = 0;  // 0 = infer from the dictionary or records
};

struct TraceLoadResult {
    Dataset data;
    std::vector<TraceLineError> errors;
};

using FeatureDict = std::map<std::string, std::uint32_t>;

// Malformed lines are reported with their line numbers and skipped; loading
// only fails outright when nothing valid remains (unless allow_empty).
TraceLoadResult load_traces(const std::string& path, const FeatureDict& feature_dict,
                            const ToolRegistry& registry, const TraceLoadOptions& options = {});

// Canonical form: fixed key order, feature indices (never flags). load after
// save reproduces the dataset field for field.
void save_traces(const Dataset& data, const std::string& path);

// JSON object mapping flag name -> feature index. Names starting with
// "audio_" are treated as audio-derived for text-only masking; names of the
// form "keyword_<tool>" feed the keyword-heuristic baseline.
FeatureDict load_feature_dict(const std::string& path);

}  // namespace audioroute

#include "audioroute/traces.hpp"

#include "audioroute/world.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>

namespace audioroute {

namespace {

using ordered_json = nlohmann::ordered_json;

TaskInstance record_to_instance(const ordered_json& j, const FeatureDict& feature_dict,
                                const ToolRegistry& registry, std::uint32_t feature_dim) {
    TaskInstance inst;
    inst.id = j.at("id").get<std::string>();
    if (inst.id.empty()) throw InvalidSpecError("empty id");
    inst.category = j.value("category", "uncategorized");

    if (j.contains("features")) {
        inst.features = j.at("features").get<std::vector<std::uint32_t>>();
    } else if (j.contains("flags")) {
        for (const auto& flag : j.at("flags")) {
            const std::string name = flag.get<std::string>();
            auto it = feature_dict.find(name);
            if (it == feature_dict.end())
                throw InvalidSpecError("flag '" + name + "' not in the feature dictionary");
            inst.features.push_back(it->second);
        }
    }
    std::sort(inst.features.begin(), inst.features.end());
    inst.features.erase(std::unique(inst.features.begin(), inst.features.end()),
                        inst.features.end());
    for (auto f : inst.features)
        if (f >= feature_dim)
            throw InvalidSpecError("feature index " + std::to_string(f) + " >= feature_dim " +
                                   std::to_string(feature_dim));

    inst.option_count = j.at("options").get<std::uint32_t>();
    if (inst.option_count < 2) throw InvalidSpecError("options must be >= 2");

    const int acc_dir = j.at("acc_dir").get<int>();
    if (acc_dir != 0 && acc_dir != 1) throw InvalidSpecError("acc_dir must be 0 or 1");

    // Recorded bits replay exactly: a probability of 0 or 1 realizes to that
    // bit for every possible draw.
    inst.outcome.deterministic = true;
    inst.outcome.seed_salt = 0;
    inst.outcome.p_dir = static_cast<double>(acc_dir);

    if (j.contains("tools")) {
        for (const auto& [name, tj] : j.at("tools").items()) {
            if (!registry.contains(name))
                throw InvalidSpecError("tool '" + name + "' not in the registry");
            const bool executed = tj.value("executed", true);
            if (!executed) {
                if (tj.contains("acc"))
                    throw InvalidSpecError("tool '" + name + "': acc present but executed=false");
                continue;  // execution failure: no p_tool entry
            }
            const int acc = tj.at("acc").get<int>();
            if (acc != 0 && acc != 1) throw InvalidSpecError("tool '" + name + "': acc must be 0 or 1");
            inst.outcome.p_tool[name] = static_cast<double>(acc);
        }
    }
    return inst;
}

}  // namespace

TraceLoadResult load_traces(const std::string& path, const FeatureDict& feature_dict,
                            const ToolRegistry& registry, const TraceLoadOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("trace file '" + path + "' not found");

    std::uint32_t feature_dim = options.feature_dim;
    if (feature_dim == 0)
        for (const auto& [name, index] : feature_dict) {
            (void)name;
            feature_dim = std::max(feature_dim, index + 1);
        }

    // With no dictionary, size the space from the records themselves.
    std::vector<std::pair<std::size_t, std::string>> raw_lines;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty()) raw_lines.emplace_back(line_no, line);
    }
    if (options.feature_dim == 0 && feature_dict.empty()) {
        for (const auto& [no, text] : raw_lines) {
            (void)no;
            ordered_json j = ordered_json::parse(text, nullptr, false);
            if (j.is_discarded() || !j.contains("features")) continue;
            for (const auto& f : j["features"])
                if (f.is_number_unsigned())
                    feature_dim = std::max(feature_dim, f.get<std::uint32_t>() + 1);
        }
    }

    TraceLoadResult result;
    result.data.tools = registry;
    result.data.feature_dim = feature_dim;
    for (const auto& [name, index] : feature_dict) {
        if (name.rfind("audio_", 0) == 0) result.data.layout.audio_features.push_back(index);
        if (name.rfind("keyword_", 0) == 0) {
            const std::string tool = name.substr(8);
            if (registry.contains(tool)) result.data.layout.keyword_feature[tool] = index;
        }
    }

    for (const auto& [no, text] : raw_lines) {
        ordered_json j = ordered_json::parse(text, nullptr, false);
        if (j.is_discarded()) {
            result.errors.push_back({no, "not a JSON object"});
            continue;
        }
        try {
            result.data.instances.push_back(
                record_to_instance(j, feature_dict, registry, feature_dim));
        } catch (const std::exception& e) {
            result.errors.push_back({no, e.what()});
        }
    }

    if (result.data.instances.empty() && !options.allow_empty)
        throw NoValidRecordsError("no valid records in '" + path + "'");
    return result;
}

void save_traces(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write trace file '" + path + "'");

    for (const auto& inst : data.instances) {
        if (!inst.outcome.deterministic)
            throw RequiresDeterministicError("trace export needs deterministic instances");
        ordered_json j;
        j["id"] = inst.id;
        j["category"] = inst.category;
        j["features"] = inst.features;
        j["options"] = inst.option_count;
        RngStream unused(0);
        // Export the realized bits, so fractional-probability instances
        // replay with exactly the outcomes they had here.
        j["acc_dir"] = sample_outcome(inst, ActionId::direct(), unused).acc_dir;
        ordered_json tools = ordered_json::object();
        for (const auto& tool : data.tools.specs()) {
            auto it = inst.outcome.p_tool.find(tool.name);
            if (it == inst.outcome.p_tool.end()) {
                tools[tool.name] = ordered_json{{"executed", false}};
            } else {
                const Outcome outcome = sample_outcome(inst, ActionId::tool(tool.name), unused);
                tools[tool.name] =
                    ordered_json{{"acc", outcome.acc_tool.value_or(0)}, {"executed", true}};
            }
        }
        j["tools"] = tools;
        out << j.dump() << "\n";
    }
}

FeatureDict load_feature_dict(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("feature dictionary '" + path + "' not found");
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidSpecError(std::string("feature dictionary: ") + e.what());
    }
    if (!j.is_object()) throw InvalidSpecError("feature dictionary must be a JSON object");
    FeatureDict dict;
    for (const auto& [name, value] : j.items()) dict[name] = value.get<std::uint32_t>();
    return dict;
}

}  // namespace audioroute

#include "audioroute/world.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace audioroute {

namespace {

using ordered_json = nlohmann::ordered_json;

std::uint64_t outcome_hash(const TaskInstance& instance) {
    return mix64(instance.outcome.seed_salt, fnv1a64(instance.id));
}

int realized_bit(const TaskInstance& instance, double p) {
    return unit_from_hash(outcome_hash(instance)) < p ? 1 : 0;
}

std::vector<std::string> capability_order(const std::vector<ToolSpec>& tools) {
    std::vector<std::string> caps;
    for (const auto& tool : tools)
        for (const auto& tag : tool.capabilities)
            if (std::find(caps.begin(), caps.end(), tag) == caps.end()) caps.push_back(tag);
    return caps;
}

}  // namespace

void WorldSpec::validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (tools.empty()) throw InvalidSpecError("world.tools must be nonempty");
    for (const auto& tool : tools) {
        if (!valid_tool_token(tool.name))
            throw InvalidSpecError("world.tools: name '" + tool.name + "' violates token grammar");
        if (tool.capabilities.empty())
            throw InvalidSpecError("world.tools['" + tool.name + "'].capabilities must be nonempty");
    }
    if (num_instances == 0) throw InvalidSpecError("world.num_instances must be >= 1");
    if (categories.empty()) throw InvalidSpecError("world.categories must be nonempty");
    double weight_sum = 0.0;
    for (const auto& cat : categories) {
        if (cat.weight < 0.0) throw InvalidSpecError("world.categories['" + cat.name + "'].weight must be >= 0");
        weight_sum += cat.weight;
    }
    if (!(weight_sum > 0.0)) throw InvalidSpecError("world.categories: weights sum to zero");
    if (!in_unit(base_p_dir_lo) || !in_unit(base_p_dir_hi) || base_p_dir_lo > base_p_dir_hi)
        throw InvalidSpecError("world.base_p_dir must satisfy 0 <= lo <= hi <= 1");
    if (!in_unit(tool_gain)) throw InvalidSpecError("world.tool_gain must be in [0,1]");
    if (!in_unit(tool_harm)) throw InvalidSpecError("world.tool_harm must be in [0,1]");
    if (!in_unit(keyword_bias_rate)) throw InvalidSpecError("world.keyword_bias_rate must be in [0,1]");
    if (!in_unit(boundary_hallucination_rate))
        throw InvalidSpecError("world.boundary_hallucination_rate must be in [0,1]");
    if (keyword_bias_rate + boundary_hallucination_rate > 1.0)
        throw InvalidSpecError("world.keyword_bias_rate + world.boundary_hallucination_rate must be <= 1");
    const std::size_t needed = capability_order(tools).size() + tools.size() + categories.size();
    if (feature_dim < needed)
        throw InvalidSpecError("world.feature_dim must be >= capabilities + keywords + categories (" +
                               std::to_string(needed) + ")");
}

Dataset generate_world(const WorldSpec& spec) {
    spec.validate();

    Dataset data;
    data.feature_dim = spec.feature_dim;
    for (const auto& tool : spec.tools) data.tools.register_tool(tool);

    const std::vector<std::string> caps = capability_order(spec.tools);
    const std::uint32_t kw_base = static_cast<std::uint32_t>(caps.size());
    const std::uint32_t cat_base = kw_base + static_cast<std::uint32_t>(spec.tools.size());
    for (std::uint32_t c = 0; c < caps.size(); ++c) {
        data.layout.capability_feature[caps[c]] = c;
        data.layout.audio_features.push_back(c);
    }
    for (std::uint32_t t = 0; t < spec.tools.size(); ++t)
        data.layout.keyword_feature[spec.tools[t].name] = kw_base + t;
    for (std::uint32_t c = 0; c < spec.categories.size(); ++c)
        data.layout.category_feature[spec.categories[c].name] = cat_base + c;

    double weight_sum = 0.0;
    for (const auto& cat : spec.categories) weight_sum += cat.weight;

    data.instances.reserve(spec.num_instances);
    for (std::uint32_t n = 0; n < spec.num_instances; ++n) {
        RngStream rng = derive_stream(spec.seed, "instance", n);
        TaskInstance inst;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "inst_%06u", n);
        inst.id = idbuf;

        double pick = rng.uniform() * weight_sum;
        std::size_t cat_idx = spec.categories.size() - 1;
        for (std::size_t c = 0; c < spec.categories.size(); ++c) {
            pick -= spec.categories[c].weight;
            if (pick < 0.0) {
                cat_idx = c;
                break;
            }
        }
        inst.category = spec.categories[cat_idx].name;

        const std::size_t cap_idx = rng.below(caps.size());
        const std::string& cap = caps[cap_idx];
        const double p_dir =
            spec.base_p_dir_lo + rng.uniform() * (spec.base_p_dir_hi - spec.base_p_dir_lo);

        inst.outcome.p_dir = p_dir;
        inst.outcome.deterministic = spec.deterministic;
        inst.outcome.seed_salt = mix64(spec.seed, n);

        std::vector<std::size_t> matching, mismatched;
        for (std::size_t t = 0; t < spec.tools.size(); ++t) {
            const auto& tags = spec.tools[t].capabilities;
            const bool match = std::find(tags.begin(), tags.end(), cap) != tags.end();
            (match ? matching : mismatched).push_back(t);
            inst.outcome.p_tool[spec.tools[t].name] =
                match ? std::min(1.0, p_dir + spec.tool_gain) : std::max(0.0, p_dir - spec.tool_harm);
        }

        inst.features.push_back(static_cast<std::uint32_t>(cap_idx));
        inst.features.push_back(cat_base + static_cast<std::uint32_t>(cat_idx));

        // Surface keyword. Normally it names a capable tool; under the two
        // failure modes it points at (or also tempts toward) a mismatched one.
        const double mode = rng.uniform();
        if (mode < spec.keyword_bias_rate && !mismatched.empty()) {
            const std::size_t misleading = mismatched[rng.below(mismatched.size())];
            inst.features.push_back(kw_base + static_cast<std::uint32_t>(misleading));
        } else if (mode < spec.keyword_bias_rate + spec.boundary_hallucination_rate &&
                   !mismatched.empty()) {
            const std::size_t truthful = matching[rng.below(matching.size())];
            const std::size_t tempting = mismatched[rng.below(mismatched.size())];
            inst.features.push_back(kw_base + static_cast<std::uint32_t>(truthful));
            inst.features.push_back(kw_base + static_cast<std::uint32_t>(tempting));
        } else {
            const std::size_t truthful = matching[rng.below(matching.size())];
            inst.features.push_back(kw_base + static_cast<std::uint32_t>(truthful));
        }

        std::sort(inst.features.begin(), inst.features.end());
        inst.features.erase(std::unique(inst.features.begin(), inst.features.end()),
                            inst.features.end());
        data.instances.push_back(std::move(inst));
    }
    return data;
}

Outcome sample_outcome(const TaskInstance& instance, const ActionId& action, RngStream& rng) {
    if (action.kind == ActionKind::Decoy)
        throw InvalidSpecError("decoy actions have no task outcome");

    Outcome outcome;
    if (instance.outcome.deterministic) {
        outcome.acc_dir = realized_bit(instance, instance.outcome.p_dir);
        if (action.kind == ActionKind::Tool) {
            auto it = instance.outcome.p_tool.find(action.name);
            if (it != instance.outcome.p_tool.end())
                outcome.acc_tool = realized_bit(instance, it->second);
            // A missing entry models a tool that failed to produce a result.
        }
        return outcome;
    }

    outcome.acc_dir = rng.uniform() < instance.outcome.p_dir ? 1 : 0;
    if (action.kind == ActionKind::Tool) {
        auto it = instance.outcome.p_tool.find(action.name);
        if (it != instance.outcome.p_tool.end())
            outcome.acc_tool = rng.uniform() < it->second ? 1 : 0;
    }
    return outcome;
}

ActionId oracle_action(const TaskInstance& instance, const ToolRegistry& registry) {
    if (!instance.outcome.deterministic)
        throw RequiresDeterministicError("oracle routing needs deterministic outcome bits");
    RngStream unused(0);
    const Outcome direct = sample_outcome(instance, ActionId::direct(), unused);
    if (direct.acc_dir == 1) return ActionId::direct();  // ties prefer Direct
    for (const auto& tool : registry.specs()) {
        const Outcome with_tool = sample_outcome(instance, ActionId::tool(tool.name), unused);
        if (with_tool.acc_tool && *with_tool.acc_tool == 1) return ActionId::tool(tool.name);
    }
    return ActionId::direct();
}

OutcomeFn world_oracle() {
    return [](const TaskInstance& instance, const ActionId& action, RngStream& rng) {
        return sample_outcome(instance, action, rng);
    };
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kWorldFormat = "audioroute.world";
constexpr int kWorldVersion = 1;

const char* adapter_name(AdapterKind kind) {
    switch (kind) {
        case AdapterKind::Simulated: return "simulated";
        case AdapterKind::NativeDsp: return "native_dsp";
        case AdapterKind::Subprocess: return "subprocess";
    }
    return "simulated";
}

AdapterKind adapter_from_name(const std::string& name) {
    if (name == "simulated") return AdapterKind::Simulated;
    if (name == "native_dsp") return AdapterKind::NativeDsp;
    if (name == "subprocess") return AdapterKind::Subprocess;
    throw InvalidSpecError("unknown adapter kind '" + name + "'");
}

ordered_json tool_to_json(const ToolSpec& tool) {
    ordered_json j;
    j["name"] = tool.name;
    j["capabilities"] = tool.capabilities;
    if (!tool.description.empty()) j["description"] = tool.description;
    j["adapter"] = adapter_name(tool.adapter);
    if (tool.adapter == AdapterKind::Subprocess) {
        j["command"] = tool.command;
        j["timeout_ms"] = tool.timeout_ms;
    }
    return j;
}

ToolSpec tool_from_json(const ordered_json& j) {
    ToolSpec tool;
    tool.name = j.at("name").get<std::string>();
    if (j.contains("capabilities"))
        tool.capabilities = j.at("capabilities").get<std::vector<std::string>>();
    if (j.contains("description")) tool.description = j.at("description").get<std::string>();
    if (j.contains("adapter")) tool.adapter = adapter_from_name(j.at("adapter").get<std::string>());
    if (j.contains("command")) tool.command = j.at("command").get<std::string>();
    if (j.contains("timeout_ms")) tool.timeout_ms = j.at("timeout_ms").get<int>();
    return tool;
}

ordered_json spec_to_json(const WorldSpec& spec) {
    ordered_json j;
    j["feature_dim"] = spec.feature_dim;
    j["tools"] = ordered_json::array();
    for (const auto& tool : spec.tools) j["tools"].push_back(tool_to_json(tool));
    j["num_instances"] = spec.num_instances;
    j["categories"] = ordered_json::array();
    for (const auto& cat : spec.categories)
        j["categories"].push_back(ordered_json{{"name", cat.name}, {"weight", cat.weight}});
    j["base_p_dir"] = ordered_json::array({spec.base_p_dir_lo, spec.base_p_dir_hi});
    j["tool_gain"] = spec.tool_gain;
    j["tool_harm"] = spec.tool_harm;
    j["keyword_bias_rate"] = spec.keyword_bias_rate;
    j["boundary_hallucination_rate"] = spec.boundary_hallucination_rate;
    j["deterministic"] = spec.deterministic;
    j["seed"] = spec.seed;
    return j;
}

WorldSpec spec_from_json(const ordered_json& j) {
    WorldSpec spec;
    spec.feature_dim = j.at("feature_dim").get<std::uint32_t>();
    for (const auto& tj : j.at("tools")) spec.tools.push_back(tool_from_json(tj));
    spec.num_instances = j.at("num_instances").get<std::uint32_t>();
    for (const auto& cj : j.at("categories"))
        spec.categories.push_back({cj.at("name").get<std::string>(),
                                   cj.contains("weight") ? cj.at("weight").get<double>() : 1.0});
    const auto& base = j.at("base_p_dir");
    if (!base.is_array() || base.size() != 2)
        throw InvalidSpecError("world.base_p_dir must be a [lo, hi] pair");
    spec.base_p_dir_lo = base[0].get<double>();
    spec.base_p_dir_hi = base[1].get<double>();
    spec.tool_gain = j.at("tool_gain").get<double>();
    spec.tool_harm = j.at("tool_harm").get<double>();
    spec.keyword_bias_rate = j.value("keyword_bias_rate", 0.0);
    spec.boundary_hallucination_rate = j.value("boundary_hallucination_rate", 0.0);
    spec.deterministic = j.value("deterministic", true);
    spec.seed = j.value("seed", std::uint64_t{0});
    return spec;
}

ordered_json layout_to_json(const FeatureLayout& layout) {
    ordered_json j;
    j["capability_feature"] = layout.capability_feature;
    j["keyword_feature"] = layout.keyword_feature;
    j["category_feature"] = layout.category_feature;
    j["audio_features"] = layout.audio_features;
    return j;
}

FeatureLayout layout_from_json(const ordered_json& j) {
    FeatureLayout layout;
    if (j.contains("capability_feature"))
        layout.capability_feature = j.at("capability_feature").get<std::map<std::string, std::uint32_t>>();
    if (j.contains("keyword_feature"))
        layout.keyword_feature = j.at("keyword_feature").get<std::map<std::string, std::uint32_t>>();
    if (j.contains("category_feature"))
        layout.category_feature = j.at("category_feature").get<std::map<std::string, std::uint32_t>>();
    if (j.contains("audio_features"))
        layout.audio_features = j.at("audio_features").get<std::vector<std::uint32_t>>();
    return layout;
}

}  // namespace

void save_world(const Dataset& data, const WorldSpec& spec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write world file '" + path + "'");

    ordered_json header;
    header["format"] = kWorldFormat;
    header["version"] = kWorldVersion;
    header["spec"] = spec_to_json(spec);
    header["layout"] = layout_to_json(data.layout);
    out << header.dump() << "\n";

    RngStream unused(0);
    for (const auto& inst : data.instances) {
        ordered_json j;
        j["id"] = inst.id;
        j["category"] = inst.category;
        j["features"] = inst.features;
        j["options"] = inst.option_count;
        ordered_json oc;
        oc["p_dir"] = inst.outcome.p_dir;
        oc["p_tool"] = inst.outcome.p_tool;
        oc["deterministic"] = inst.outcome.deterministic;
        oc["seed_salt"] = inst.outcome.seed_salt;
        j["outcome"] = oc;
        if (inst.outcome.deterministic) {
            ordered_json bits;
            bits["dir"] = sample_outcome(inst, ActionId::direct(), unused).acc_dir;
            ordered_json tool_bits;
            for (const auto& [name, p] : inst.outcome.p_tool) {
                (void)p;
                tool_bits[name] = *sample_outcome(inst, ActionId::tool(name), unused).acc_tool;
            }
            bits["tools"] = tool_bits;
            j["bits"] = bits;
        }
        out << j.dump() << "\n";
    }
}

LoadedWorld load_world(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("world file '" + path + "' not found");

    std::string line;
    if (!std::getline(in, line)) throw InvalidSpecError("world file is empty");
    ordered_json header = ordered_json::parse(line, nullptr, true);
    if (header.value("format", "") != kWorldFormat)
        throw InvalidSpecError("world file: unknown format");
    if (header.value("version", 0) != kWorldVersion)
        throw InvalidSpecError("world file: unsupported version");

    LoadedWorld world;
    world.spec = spec_from_json(header.at("spec"));
    world.data.feature_dim = world.spec.feature_dim;
    world.data.layout = layout_from_json(header.at("layout"));
    for (const auto& tool : world.spec.tools) world.data.tools.register_tool(tool);

    RngStream unused(0);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j = ordered_json::parse(line);
        TaskInstance inst;
        inst.id = j.at("id").get<std::string>();
        inst.category = j.at("category").get<std::string>();
        inst.features = j.at("features").get<std::vector<std::uint32_t>>();
        inst.option_count = j.at("options").get<std::uint32_t>();
        const auto& oc = j.at("outcome");
        inst.outcome.p_dir = oc.at("p_dir").get<double>();
        inst.outcome.p_tool = oc.at("p_tool").get<std::map<std::string, double>>();
        inst.outcome.deterministic = oc.at("deterministic").get<bool>();
        inst.outcome.seed_salt = oc.at("seed_salt").get<std::uint64_t>();
        if (j.contains("bits")) {
            const int expected = j["bits"].at("dir").get<int>();
            const int actual = sample_outcome(inst, ActionId::direct(), unused).acc_dir;
            if (expected != actual)
                throw InvalidSpecError("world file: stored bits disagree with outcome spec at line " +
                                       std::to_string(line_no));
        }
        world.data.instances.push_back(std::move(inst));
    }
    return world;
}

WorldSpec load_world_spec(const std::string& json_path) {
    std::ifstream in(json_path, std::ios::binary);
    if (!in) throw MissingArtifactError("world spec '" + json_path + "' not found");
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidSpecError(std::string("world spec: ") + e.what());
    }
    try {
        return spec_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidSpecError(std::string("world spec: ") + e.what());
    }
}

}  // namespace audioroute

#pragma once

#include "audioroute/core.hpp"
#include "audioroute/grpo.hpp"
#include "audioroute/rng.hpp"

#include <string>
#include <vector>

namespace audioroute {

struct CategoryWeight {
    std::string name;
    double weight = 1.0;
};

// Generator parameters for a synthetic task population. Two failure-mode
// knobs inject surface cues that disagree with a task's functional needs:
// keyword_bias_rate swaps the true tool keyword for a mismatched one, and
// boundary_hallucination_rate adds a tempting keyword from a tool that cannot
// cover the required capability.
struct WorldSpec {
    std::uint32_t feature_dim = 16;
    std::vector<ToolSpec> tools;
    std::uint32_t num_instances = 1000;
    std::vector<CategoryWeight> categories;
    double base_p_dir_lo = 0.3;
    double base_p_dir_hi = 0.5;
    double tool_gain = 0.45;  // added to p_dir for capability-matched tools
    double tool_harm = 0.2;   // subtracted from p_dir for mismatched tools
    double keyword_bias_rate = 0.3;
    double boundary_hallucination_rate = 0.2;
    bool deterministic = true;
    std::uint64_t seed = 0;

    void validate() const;  // throws InvalidSpecError naming the offending field
};

// Pure function of the spec (seed included): instances, registry, layout.
Dataset generate_world(const WorldSpec& spec);

// Correctness bits for one decision. Deterministic instances derive the bits
// from (id, seed_salt) and never touch the rng; stochastic ones draw
// Bernoulli(p_dir) then Bernoulli(p_tool). The direct counterfactual is
// returned alongside every tool outcome.
Outcome sample_outcome(const TaskInstance& instance, const ActionId& action, RngStream& rng);

// Correctness-maximizing action from the realized bits; ties prefer Direct,
// then the lowest tool index. Deterministic instances only.
ActionId oracle_action(const TaskInstance& instance, const ToolRegistry& registry);

// sample_outcome wrapped for the training loop. Frozen by construction.
OutcomeFn world_oracle();

// World container file: one JSON header line (spec + layout), then one JSON
// line per instance with its precomputed bits. Round-trips bitwise.
void save_world(const Dataset& data, const WorldSpec& spec, const std::string& path);

struct LoadedWorld {
    Dataset data;
    WorldSpec spec;
};

LoadedWorld load_world(const std::string& path);

WorldSpec load_world_spec(const std::string& json_path);

}  // namespace audioroute

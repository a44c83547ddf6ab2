#pragma once

#include "audioroute/core.hpp"

namespace audioroute {

// Reward constants. A tool call is scored against the direct counterfactual
// on the same instance; the large symmetric values reward only genuine
// marginal benefit, and the small negative value taxes redundant calls.
struct RewardConfig {
    double tool_gain = 5.0;            // tool correct, direct wrong
    double tool_harm = -5.0;           // tool wrong, direct correct
    double redundancy_penalty = -0.1;  // tool and direct agree
    double otherwise_value = 0.0;      // tool invoked but produced no result
    double dir_correct = 1.0;
    double dir_wrong = -1.0;
    double format_ok = 1.0;            // warm-up: valid action emitted
    double format_bad = -1.0;          // warm-up: decoy emitted
};

inline double relative_outcome_reward(const RewardConfig& cfg, const ActionId& action,
                                      int acc_dir, std::optional<int> acc_tool) {
    switch (action.kind) {
        case ActionKind::Direct:
            return acc_dir ? cfg.dir_correct : cfg.dir_wrong;
        case ActionKind::Decoy:
            return cfg.format_bad;
        case ActionKind::Tool:
            if (!acc_tool.has_value()) return cfg.otherwise_value;
            if (*acc_tool == 1 && acc_dir == 0) return cfg.tool_gain;
            if (*acc_tool == 0 && acc_dir == 1) return cfg.tool_harm;
            return cfg.redundancy_penalty;
    }
    return cfg.otherwise_value;
}

inline double format_reward(const RewardConfig& cfg, const ActionId& action) {
    return action.kind == ActionKind::Decoy ? cfg.format_bad : cfg.format_ok;
}

}  // namespace audioroute

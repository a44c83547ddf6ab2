#pragma once

#include "audioroute/core.hpp"
#include "audioroute/rng.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace audioroute {

// Featurized softmax policy over the full action space. Weights are a dense
// (F+1) x A matrix, row F being the bias row; an instance's logit for action
// a is (bias_a + sum of rows of its active unmasked features) / temperature.
struct PolicyParams {
    std::uint32_t feature_dim = 0;
    std::vector<ActionId> actions;
    double temperature = 1.0;
    std::vector<std::uint8_t> masked;  // length feature_dim, 1 = row contributes nothing
    std::vector<double> weights;       // (feature_dim + 1) * actions.size(), row-major

    static PolicyParams zeros(std::uint32_t feature_dim, std::vector<ActionId> actions);

    std::size_t action_count() const { return actions.size(); }
    double at(std::uint32_t row, std::size_t a) const { return weights[row * actions.size() + a]; }
    double& at(std::uint32_t row, std::size_t a) { return weights[row * actions.size() + a]; }

    bool operator==(const PolicyParams&) const = default;
};

std::vector<double> logits(const PolicyParams& params, const TaskInstance& instance);

// Numerically stable log-softmax of the logits.
std::vector<double> log_action_distribution(const PolicyParams& params, const TaskInstance& instance);

// exp of the log-softmax; entries positive, sums to 1 within 1e-12.
std::vector<double> action_distribution(const PolicyParams& params, const TaskInstance& instance);

struct SampledAction {
    std::size_t index = 0;
    ActionId action;
    double logprob = 0.0;
};

SampledAction sample_action(const PolicyParams& params, const TaskInstance& instance, RngStream& rng);

// Argmax of the logits; ties go to the lowest action index, so total
// ignorance routes to Direct.
ActionId greedy_action(const PolicyParams& params, const TaskInstance& instance);

// Versioned text checkpoint. Doubles are written in shortest round-trip form,
// so save/load reproduces the weights bitwise and re-saving is byte-stable.
void save_policy(const PolicyParams& params, const std::string& path);
PolicyParams load_policy(const std::string& path);

std::string policy_to_text(const PolicyParams& params);
PolicyParams policy_from_text(const std::string& text);

}  // namespace audioroute

#pragma once

#include "audioroute/core.hpp"
#include "audioroute/policy.hpp"
#include "audioroute/reward.hpp"
#include "audioroute/rng.hpp"

#include <functional>
#include <span>
#include <vector>

namespace audioroute {

// Group-relative policy optimization over single-step rollouts.
struct GrpoConfig {
    int group_size = 8;
    double clip_eps = 0.2;
    double kl_beta = 0.01;
    // Step sizes for the linear-softmax scorer. Logits start at zero and
    // advantages are unit-scale, so steps far larger than LM finetuning
    // rates are appropriate; see lm_router_preset for the LM-scale value.
    // The warm-up runs hotter: once decoys are rare they are rarely sampled,
    // so each remaining correction has to move their logits further.
    double learning_rate = 0.5;
    double warmup_learning_rate = 3.0;
    int epochs = 1;
    double std_guard = 1e-8;
    int warmup_steps = 50;
    // Instance groups averaged into one update. Single-group updates at this
    // step size can lock onto Direct before the tools are ever explored.
    int update_batch = 8;
    std::uint64_t seed = 0;

    // Rates used when the scorer is an LM finetuned with an adapter rather
    // than this linear policy. Kept as a named preset for trace replays.
    static GrpoConfig lm_router_preset() {
        GrpoConfig cfg;
        cfg.learning_rate = 5e-5;
        cfg.warmup_learning_rate = 5e-5;
        return cfg;
    }

    void validate() const;
};

// G rollouts for one instance sampled under one behavior snapshot.
struct GroupBatch {
    TaskInstance instance;
    std::vector<Rollout> rollouts;
};

// (r_i - mean) / sample std; all zeros when the group std is under the guard.
std::vector<double> compute_advantages(std::span<const double> rewards, double std_guard);

// Sum over actions of pi(a) * ln(pi(a) / pi_ref(a)), computed exactly over
// the discrete action set.
double exact_kl(const PolicyParams& params, const PolicyParams& ref_params,
                const TaskInstance& instance);

// (1/G) sum_i min(rho_i A_i, clip(rho_i) A_i) - beta * KL(params || ref),
// with rho_i the ratio of current to behavior probability of rollout i.
double surrogate_objective(const GroupBatch& group, const PolicyParams& params,
                           const PolicyParams& ref_params, const GrpoConfig& cfg);

// Analytic gradient of the mean surrogate over the batches, laid out like
// PolicyParams::weights.
std::vector<double> surrogate_gradient(std::span<const GroupBatch> batches,
                                       const PolicyParams& params,
                                       const PolicyParams& ref_params,
                                       const GrpoConfig& cfg);

// One ascent step on the mean surrogate. Throws NonFiniteGradientError if any
// gradient entry is non-finite.
PolicyParams grpo_update(std::span<const GroupBatch> batches, const PolicyParams& params,
                         const PolicyParams& ref_params, const GrpoConfig& cfg);

// Format-reward warm-up: GRPO steps on synthesized instances where the reward
// depends only on action validity. Never consults task outcomes.
PolicyParams warmup_format(PolicyParams params, std::span<const ActionId> actions,
                           const GrpoConfig& cfg, const RewardConfig& reward_cfg,
                           RngStream& rng);

// ---------------------------------------------------------------------------
// Training driver
// ---------------------------------------------------------------------------

using OutcomeFn = std::function<Outcome(const TaskInstance&, const ActionId&, RngStream&)>;

struct TrainLogEntry {
    int step = 0;
    double mean_reward = 0.0;
    double mean_kl = 0.0;
    double tool_rate = 0.0;
    double decoy_rate = 0.0;
};

std::string train_log_line(const TrainLogEntry& entry);  // one JSON object per line

struct TrainOptions {
    int decoy_count = 4;
    bool text_only = false;
    int workers = 1;
};

struct TrainResult {
    PolicyParams params;
    PolicyParams reference;  // post-warm-up snapshot used for the KL term
    std::vector<TrainLogEntry> log;
};

// Warm-up followed by cfg.epochs passes over the dataset: per instance,
// sample G actions, realize outcomes through the oracle, score with the
// relative outcome reward, and take one GRPO step. The oracle is never
// mutated. Tool failures surface as an absent acc bit, never as an abort.
TrainResult train(const Dataset& data, const GrpoConfig& cfg, const RewardConfig& reward_cfg,
                  const OutcomeFn& oracle, const TrainOptions& options = {});

}  // namespace audioroute

#include "audioroute/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace audioroute {

namespace {

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void check_same_space(const PolicyParams& a, const PolicyParams& b) {
    if (a.actions != b.actions || a.feature_dim != b.feature_dim)
        throw InvalidSpecError("policy and reference must share one action space");
}

// Rows an instance activates: active unmasked features plus the bias row.
std::vector<std::uint32_t> active_rows(const PolicyParams& params, const TaskInstance& instance) {
    std::vector<std::uint32_t> rows;
    rows.reserve(instance.features.size() + 1);
    for (auto f : instance.features)
        if (!params.masked[f]) rows.push_back(f);
    rows.push_back(params.feature_dim);
    return rows;
}

// Per-group objective and, when grad != nullptr, its gradient with respect to
// the logits accumulated into *grad (length A, caller-scaled afterwards).
double group_surrogate(const GroupBatch& group, const PolicyParams& params,
                       const PolicyParams& ref_params, const GrpoConfig& cfg,
                       std::vector<double>* grad_logits) {
    const std::size_t A = params.action_count();
    const std::size_t G = group.rollouts.size();
    if (G < 2) throw InvalidSpecError("group must hold at least 2 rollouts");

    std::vector<double> rewards(G);
    for (std::size_t i = 0; i < G; ++i) rewards[i] = group.rollouts[i].reward;
    const std::vector<double> adv = compute_advantages(rewards, cfg.std_guard);

    const std::vector<double> logp = log_action_distribution(params, group.instance);
    const std::vector<double> logp_ref = log_action_distribution(ref_params, group.instance);

    std::vector<double> pi(A);
    for (std::size_t a = 0; a < A; ++a) pi[a] = std::exp(logp[a]);

    double kl = 0.0;
    for (std::size_t a = 0; a < A; ++a) kl += pi[a] * (logp[a] - logp_ref[a]);

    auto action_index = [&](const ActionId& action) {
        for (std::size_t a = 0; a < A; ++a)
            if (params.actions[a] == action) return a;
        throw UnknownToolError("rollout action " + to_string(action) + " not in action space");
    };

    double clipped_sum = 0.0;
    std::vector<double> coeff(A, 0.0);  // d(mean clipped term)/d logp[a] contributions
    for (std::size_t i = 0; i < G; ++i) {
        const Rollout& r = group.rollouts[i];
        const std::size_t a = action_index(r.action);
        const double rho = std::exp(logp[a] - r.behavior_logprob);
        const double unclipped = rho * adv[i];
        const double clipped = std::clamp(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv[i];
        clipped_sum += std::min(unclipped, clipped);
        if (grad_logits && unclipped <= clipped) coeff[a] += adv[i] * rho;
    }
    const double inv_g = 1.0 / static_cast<double>(G);
    const double value = clipped_sum * inv_g - cfg.kl_beta * kl;

    if (grad_logits) {
        // d/dz_b of sum_i A_i rho_i: A_i rho_i (delta_{a_i b} - pi_b).
        // d/dz_b of KL: pi_b (logp_b - logp_ref_b - KL).
        double coeff_total = 0.0;
        for (std::size_t a = 0; a < A; ++a) coeff_total += coeff[a];
        for (std::size_t b = 0; b < A; ++b) {
            double g = (coeff[b] - pi[b] * coeff_total) * inv_g;
            g -= cfg.kl_beta * pi[b] * (logp[b] - logp_ref[b] - kl);
            (*grad_logits)[b] += g;
        }
    }
    return value;
}

}  // namespace

void GrpoConfig::validate() const {
    if (group_size < 2) throw InvalidSpecError("grpo.group_size must be >= 2");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw InvalidSpecError("grpo.clip_eps must be in (0,1)");
    if (kl_beta < 0.0) throw InvalidSpecError("grpo.kl_beta must be >= 0");
    if (!(learning_rate > 0.0)) throw InvalidSpecError("grpo.learning_rate must be > 0");
    if (!(warmup_learning_rate > 0.0)) throw InvalidSpecError("grpo.warmup_learning_rate must be > 0");
    if (!(std_guard > 0.0)) throw InvalidSpecError("grpo.std_guard must be > 0");
    if (epochs < 0) throw InvalidSpecError("grpo.epochs must be >= 0");
    if (warmup_steps < 0) throw InvalidSpecError("grpo.warmup_steps must be >= 0");
    if (update_batch < 1) throw InvalidSpecError("grpo.update_batch must be >= 1");
}

std::vector<double> compute_advantages(std::span<const double> rewards, double std_guard) {
    const std::size_t n = rewards.size();
    if (n < 2) throw InvalidSpecError("advantage groups need at least 2 rewards");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double r : rewards) ss += (r - mean) * (r - mean);
    const double stddev = std::sqrt(ss / static_cast<double>(n - 1));
    std::vector<double> adv(n, 0.0);
    if (stddev < std_guard) return adv;
    for (std::size_t i = 0; i < n; ++i) adv[i] = (rewards[i] - mean) / stddev;
    return adv;
}

double exact_kl(const PolicyParams& params, const PolicyParams& ref_params,
                const TaskInstance& instance) {
    check_same_space(params, ref_params);
    const std::vector<double> logp = log_action_distribution(params, instance);
    const std::vector<double> logp_ref = log_action_distribution(ref_params, instance);
    double kl = 0.0;
    for (std::size_t a = 0; a < logp.size(); ++a) kl += std::exp(logp[a]) * (logp[a] - logp_ref[a]);
    return kl;
}

double surrogate_objective(const GroupBatch& group, const PolicyParams& params,
                           const PolicyParams& ref_params, const GrpoConfig& cfg) {
    check_same_space(params, ref_params);
    return group_surrogate(group, params, ref_params, cfg, nullptr);
}

std::vector<double> surrogate_gradient(std::span<const GroupBatch> batches,
                                       const PolicyParams& params,
                                       const PolicyParams& ref_params, const GrpoConfig& cfg) {
    check_same_space(params, ref_params);
    if (batches.empty()) throw InvalidSpecError("gradient needs at least one batch");
    const std::size_t A = params.action_count();
    std::vector<double> grad(params.weights.size(), 0.0);
    const double batch_scale = 1.0 / static_cast<double>(batches.size());
    const double inv_tau = 1.0 / params.temperature;
    std::vector<double> grad_logits(A);
    for (const GroupBatch& group : batches) {
        std::fill(grad_logits.begin(), grad_logits.end(), 0.0);
        group_surrogate(group, params, ref_params, cfg, &grad_logits);
        const double scale = batch_scale * inv_tau;
        for (auto row : active_rows(params, group.instance)) {
            double* out = grad.data() + static_cast<std::size_t>(row) * A;
            for (std::size_t b = 0; b < A; ++b) out[b] += scale * grad_logits[b];
        }
    }
    return grad;
}

PolicyParams grpo_update(std::span<const GroupBatch> batches, const PolicyParams& params,
                         const PolicyParams& ref_params, const GrpoConfig& cfg) {
    const std::vector<double> grad = surrogate_gradient(batches, params, ref_params, cfg);
    for (double g : grad)
        if (!std::isfinite(g)) throw NonFiniteGradientError("non-finite surrogate gradient entry");
    PolicyParams next = params;
    for (std::size_t i = 0; i < grad.size(); ++i) next.weights[i] += cfg.learning_rate * grad[i];
    return next;
}

namespace {

// Rollouts for one instance against a fixed snapshot. Each rollout draws from
// its own derived stream, so any worker count produces identical groups.
GroupBatch sample_group(const PolicyParams& snapshot, const TaskInstance& instance,
                        const GrpoConfig& cfg, const RewardConfig& reward_cfg,
                        const OutcomeFn* oracle, std::uint64_t stream_tag_a,
                        std::uint64_t stream_tag_b, int workers) {
    const std::size_t G = static_cast<std::size_t>(cfg.group_size);
    GroupBatch group{instance, std::vector<Rollout>(G)};

    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            RngStream rng = derive_stream(cfg.seed, "rollout", stream_tag_a, stream_tag_b, i);
            const SampledAction sampled = sample_action(snapshot, instance, rng);
            Rollout r;
            r.instance_id = instance.id;
            r.action = sampled.action;
            r.behavior_logprob = sampled.logprob;
            if (oracle) {
                // Decoys never reach a tool; realize only the direct bit.
                const ActionId query = sampled.action.kind == ActionKind::Decoy
                                           ? ActionId::direct()
                                           : sampled.action;
                const Outcome outcome = (*oracle)(instance, query, rng);
                r.acc_dir = outcome.acc_dir;
                r.acc_tool = sampled.action.kind == ActionKind::Tool ? outcome.acc_tool : std::nullopt;
                r.reward = relative_outcome_reward(reward_cfg, r.action, r.acc_dir, r.acc_tool);
            } else {
                r.reward = format_reward(reward_cfg, r.action);
            }
            group.rollouts[i] = std::move(r);
        }
    };

    const int W = std::min<int>(workers, static_cast<int>(G));
    if (W <= 1) {
        run_range(0, G);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(W));
        const std::size_t chunk = (G + static_cast<std::size_t>(W) - 1) / static_cast<std::size_t>(W);
        for (int w = 0; w < W; ++w) {
            const std::size_t lo = static_cast<std::size_t>(w) * chunk;
            const std::size_t hi = std::min(G, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(run_range, lo, hi);
        }
        for (auto& t : pool) t.join();
    }
    return group;
}

TaskInstance synthesize_warmup_instance(std::uint32_t feature_dim, std::uint64_t salt,
                                        std::uint64_t step) {
    RngStream rng = derive_stream(salt, "warmup-instance", step);
    TaskInstance inst;
    inst.id = "warmup_" + std::to_string(step);
    inst.category = "warmup";
    for (std::uint32_t f = 0; f < feature_dim; ++f)
        if (rng.uniform() < 0.25) inst.features.push_back(f);
    inst.option_count = 2;
    return inst;
}

}  // namespace

PolicyParams warmup_format(PolicyParams params, std::span<const ActionId> actions,
                           const GrpoConfig& cfg, const RewardConfig& reward_cfg,
                           RngStream& rng) {
    cfg.validate();
    if (params.actions != std::vector<ActionId>(actions.begin(), actions.end()))
        throw InvalidSpecError("warm-up action space does not match policy actions");
    const std::uint64_t salt = rng.next_u64();
    for (int step = 0; step < cfg.warmup_steps; ++step) {
        const TaskInstance inst =
            synthesize_warmup_instance(params.feature_dim, salt, static_cast<std::uint64_t>(step));
        GrpoConfig step_cfg = cfg;
        step_cfg.seed = mix64(salt, static_cast<std::uint64_t>(step));
        step_cfg.learning_rate = cfg.warmup_learning_rate;
        // The KL reference is defined as the post-warm-up snapshot, so the
        // warm-up itself anchors each step to its own behavior policy.
        const GroupBatch group = sample_group(params, inst, step_cfg, reward_cfg, nullptr,
                                              0, static_cast<std::uint64_t>(step), 1);
        const PolicyParams ref = params;
        params = grpo_update(std::span(&group, 1), params, ref, step_cfg);
    }
    return params;
}

std::string train_log_line(const TrainLogEntry& entry) {
    std::ostringstream os;
    os << "{\"step\":" << entry.step
       << ",\"mean_reward\":" << format_double(entry.mean_reward)
       << ",\"mean_kl\":" << format_double(entry.mean_kl)
       << ",\"tool_rate\":" << format_double(entry.tool_rate)
       << ",\"decoy_rate\":" << format_double(entry.decoy_rate) << "}";
    return os.str();
}

TrainResult train(const Dataset& data, const GrpoConfig& cfg, const RewardConfig& reward_cfg,
                  const OutcomeFn& oracle, const TrainOptions& options) {
    cfg.validate();
    if (data.instances.empty()) throw EmptyDatasetError("training dataset is empty");
    if (options.decoy_count < 0) throw InvalidSpecError("decoy_count must be >= 0");

    const std::vector<ActionId> actions = action_space(data.tools, options.decoy_count);
    PolicyParams params = PolicyParams::zeros(data.feature_dim, actions);
    if (options.text_only)
        for (auto f : data.layout.audio_features)
            if (f < params.feature_dim) params.masked[f] = 1;

    if (options.decoy_count >= 1 && cfg.warmup_steps > 0) {
        RngStream warm_rng = derive_stream(cfg.seed, "warmup");
        params = warmup_format(std::move(params), actions, cfg, reward_cfg, warm_rng);
    }
    const PolicyParams reference = params;

    TrainResult result{params, reference, {}};
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Deterministic Fisher-Yates pass order.
        std::vector<std::size_t> order(data.instances.size());
        std::iota(order.begin(), order.end(), 0);
        RngStream order_rng = derive_stream(cfg.seed, "order", static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[order_rng.below(i)]);

        const std::size_t batch_size = static_cast<std::size_t>(cfg.update_batch);
        for (std::size_t base = 0; base < order.size(); base += batch_size) {
            const std::size_t count = std::min(batch_size, order.size() - base);

            // All groups in the batch sample against the pre-update snapshot.
            std::vector<GroupBatch> batches(count);
            auto sample_range = [&](std::size_t lo, std::size_t hi, int group_workers) {
                for (std::size_t k = lo; k < hi; ++k)
                    batches[k] = sample_group(result.params, data.instances[order[base + k]], cfg,
                                              reward_cfg, &oracle, static_cast<std::uint64_t>(epoch),
                                              base + k, group_workers);
            };
            const int W = std::max(1, options.workers);
            if (W == 1 || count == 1) {
                sample_range(0, count, W);
            } else {
                std::vector<std::thread> pool;
                const std::size_t chunk = (count + static_cast<std::size_t>(W) - 1) /
                                          static_cast<std::size_t>(W);
                for (int w = 0; w < W; ++w) {
                    const std::size_t lo = static_cast<std::size_t>(w) * chunk;
                    const std::size_t hi = std::min(count, lo + chunk);
                    if (lo >= hi) break;
                    pool.emplace_back(sample_range, lo, hi, 1);
                }
                for (auto& t : pool) t.join();
            }

            result.params = grpo_update(batches, result.params, reference, cfg);

            TrainLogEntry entry;
            entry.step = step++;
            double reward_sum = 0.0, kl_sum = 0.0;
            int tool_count = 0, decoy_count = 0, rollouts = 0;
            for (const GroupBatch& group : batches) {
                for (const Rollout& r : group.rollouts) {
                    reward_sum += r.reward;
                    tool_count += r.action.kind == ActionKind::Tool;
                    decoy_count += r.action.kind == ActionKind::Decoy;
                    ++rollouts;
                }
                kl_sum += exact_kl(result.params, reference, group.instance);
            }
            entry.mean_reward = reward_sum / rollouts;
            entry.mean_kl = kl_sum / static_cast<double>(count);
            entry.tool_rate = static_cast<double>(tool_count) / rollouts;
            entry.decoy_rate = static_cast<double>(decoy_count) / rollouts;
            result.log.push_back(entry);
        }
    }
    result.reference = reference;
    return result;
}

}  // namespace audioroute

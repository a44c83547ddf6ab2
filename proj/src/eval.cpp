#include "audioroute/eval.hpp"

#include "audioroute/world.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace audioroute {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

RouterStrategy RouterStrategy::random(std::uint64_t seed) {
    RouterStrategy s;
    s.kind = Kind::Random;
    s.seed = seed;
    return s;
}

RouterStrategy RouterStrategy::always_direct() {
    return {};
}

RouterStrategy RouterStrategy::always_tool(std::string name) {
    RouterStrategy s;
    s.kind = Kind::AlwaysTool;
    s.tool_name = std::move(name);
    return s;
}

RouterStrategy RouterStrategy::keyword_heuristic(std::map<std::string, std::uint32_t> keyword_feature) {
    RouterStrategy s;
    s.kind = Kind::KeywordHeuristic;
    s.keyword_feature = std::move(keyword_feature);
    return s;
}

RouterStrategy RouterStrategy::oracle() {
    RouterStrategy s;
    s.kind = Kind::Oracle;
    return s;
}

RouterStrategy RouterStrategy::learned(PolicyParams params) {
    RouterStrategy s;
    s.kind = Kind::Learned;
    s.params = std::move(params);
    return s;
}

std::string RouterStrategy::label() const {
    switch (kind) {
        case Kind::Random: return "random";
        case Kind::AlwaysDirect: return "always_direct";
        case Kind::AlwaysTool: return "always_tool:" + tool_name;
        case Kind::KeywordHeuristic: return "keyword_heuristic";
        case Kind::Oracle: return "oracle";
        case Kind::Learned: return "learned";
    }
    return "always_direct";
}

ActionId route(const RouterStrategy& strategy, const TaskInstance& instance,
               const ToolRegistry& registry, RngStream& rng) {
    switch (strategy.kind) {
        case RouterStrategy::Kind::Random: {
            // Uniform over Direct plus the registered tools; decoys excluded.
            const std::uint64_t pick = rng.below(registry.size() + 1);
            if (pick == 0) return ActionId::direct();
            return ActionId::tool(registry.specs()[pick - 1].name);
        }
        case RouterStrategy::Kind::AlwaysDirect:
            return ActionId::direct();
        case RouterStrategy::Kind::AlwaysTool:
            if (!registry.contains(strategy.tool_name))
                throw UnknownToolError("always_tool: '" + strategy.tool_name + "' not registered");
            return ActionId::tool(strategy.tool_name);
        case RouterStrategy::Kind::KeywordHeuristic: {
            // Lowest active keyword feature wins; no keyword means Direct.
            std::string best_tool;
            std::uint32_t best_index = 0;
            for (const auto& [tool, index] : strategy.keyword_feature) {
                if (!std::binary_search(instance.features.begin(), instance.features.end(), index))
                    continue;
                if (best_tool.empty() || index < best_index) {
                    best_tool = tool;
                    best_index = index;
                }
            }
            return best_tool.empty() ? ActionId::direct() : ActionId::tool(best_tool);
        }
        case RouterStrategy::Kind::Oracle:
            return oracle_action(instance, registry);
        case RouterStrategy::Kind::Learned:
            return greedy_action(strategy.params, instance);
    }
    return ActionId::direct();
}

namespace {

struct InstanceResult {
    int chosen_acc = 0;
    int dir_acc = 0;
    bool tool_call = false;
    bool beneficial_call = false;
    bool benefit_possible = false;
};

InstanceResult judge_instance(const RouterStrategy& strategy, const TaskInstance& instance,
                              const ToolRegistry& registry) {
    RngStream rng = derive_stream(strategy.seed, "route", fnv1a64(instance.id));
    const ActionId action = route(strategy, instance, registry, rng);

    RngStream unused(0);
    InstanceResult r;
    r.dir_acc = sample_outcome(instance, ActionId::direct(), unused).acc_dir;
    if (action.kind == ActionKind::Tool) {
        r.tool_call = true;
        const Outcome outcome = sample_outcome(instance, action, unused);
        r.chosen_acc = outcome.acc_tool.value_or(0);
        r.beneficial_call = outcome.acc_tool.value_or(0) == 1 && r.dir_acc == 0;
    } else if (action.kind == ActionKind::Direct) {
        r.chosen_acc = r.dir_acc;
    }  // decoys score zero

    if (r.dir_acc == 0) {
        for (const auto& tool : registry.specs()) {
            const Outcome outcome = sample_outcome(instance, ActionId::tool(tool.name), unused);
            if (outcome.acc_tool.value_or(0) == 1) {
                r.benefit_possible = true;
                break;
            }
        }
    }
    return r;
}

}  // namespace

Metrics evaluate(const RouterStrategy& strategy, const Dataset& data, int workers) {
    if (data.instances.empty()) throw EmptyDatasetError("evaluation dataset is empty");
    for (const auto& inst : data.instances)
        if (!inst.outcome.deterministic)
            throw RequiresDeterministicError("evaluation needs deterministic outcome bits");

    const std::size_t n = data.instances.size();
    std::vector<InstanceResult> results(n);
    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
            results[i] = judge_instance(strategy, data.instances[i], data.tools);
    };
    const int W = std::max(1, workers);
    if (W == 1 || n < 2) {
        run_range(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + static_cast<std::size_t>(W) - 1) / static_cast<std::size_t>(W);
        for (int w = 0; w < W; ++w) {
            const std::size_t lo = static_cast<std::size_t>(w) * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(run_range, lo, hi);
        }
        for (auto& t : pool) t.join();
    }

    Metrics m;
    m.n = n;
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_cat;  // correct, total
    for (std::size_t i = 0; i < n; ++i) {
        const InstanceResult& r = results[i];
        m.correct += static_cast<std::size_t>(r.chosen_acc);
        m.dir_correct += static_cast<std::size_t>(r.dir_acc);
        m.tool_calls += r.tool_call;
        m.beneficial_calls += r.beneficial_call;
        m.benefit_possible += r.benefit_possible;
        m.benefit_taken += r.benefit_possible && r.beneficial_call;
        auto& [cat_correct, cat_total] = per_cat[data.instances[i].category];
        cat_correct += static_cast<std::size_t>(r.chosen_acc);
        cat_total += 1;
    }

    const double dn = static_cast<double>(n);
    m.accuracy = static_cast<double>(m.correct) / dn;
    m.tool_rate = static_cast<double>(m.tool_calls) / dn;
    m.tool_precision = m.tool_calls == 0
                           ? 1.0
                           : static_cast<double>(m.beneficial_calls) / static_cast<double>(m.tool_calls);
    m.tool_recall = m.benefit_possible == 0
                        ? 1.0
                        : static_cast<double>(m.benefit_taken) / static_cast<double>(m.benefit_possible);
    m.net_gain = static_cast<double>(static_cast<long long>(m.correct) -
                                     static_cast<long long>(m.dir_correct)) /
                 dn;
    for (const auto& [cat, counts] : per_cat)
        m.per_category[cat] = static_cast<double>(counts.first) / static_cast<double>(counts.second);
    return m;
}

std::string metrics_to_json(const Metrics& metrics, int indent) {
    ordered_json j;
    j["accuracy"] = metrics.accuracy;
    j["tool_rate"] = metrics.tool_rate;
    j["tool_precision"] = metrics.tool_precision;
    j["tool_recall"] = metrics.tool_recall;
    j["net_gain"] = metrics.net_gain;
    j["per_category"] = metrics.per_category;
    j["n"] = metrics.n;
    return j.dump(indent);
}

Comparison compare(std::span<const RouterStrategy> strategies, const Dataset& data, int workers) {
    if (strategies.size() < 2) throw InvalidSpecError("compare needs at least 2 strategies");
    if (data.instances.empty()) throw EmptyDatasetError("comparison dataset is empty");

    Comparison comparison;
    for (const auto& strategy : strategies)
        comparison.rows.push_back({strategy.label(), evaluate(strategy, data, workers)});
    for (std::size_t i = 0; i < comparison.rows.size(); ++i)
        for (std::size_t j = i + 1; j < comparison.rows.size(); ++j)
            comparison.deltas.push_back({comparison.rows[i].label, comparison.rows[j].label,
                                         comparison.rows[i].metrics.accuracy -
                                             comparison.rows[j].metrics.accuracy});
    return comparison;
}

std::string comparison_to_json(const Comparison& comparison, int indent) {
    ordered_json j;
    j["rows"] = ordered_json::array();
    for (const auto& row : comparison.rows) {
        ordered_json rj = ordered_json::parse(metrics_to_json(row.metrics, -1));
        rj["strategy"] = row.label;
        j["rows"].push_back(rj);
    }
    j["accuracy_deltas"] = ordered_json::array();
    for (const auto& delta : comparison.deltas)
        j["accuracy_deltas"].push_back(
            ordered_json{{"first", delta.first}, {"second", delta.second}, {"delta", delta.delta}});
    return j.dump(indent);
}

std::string comparison_to_csv(const Comparison& comparison) {
    std::ostringstream os;
    os << "strategy,accuracy,tool_rate,tool_precision,tool_recall,net_gain\n";
    for (const auto& row : comparison.rows)
        os << row.label << ',' << format_double(row.metrics.accuracy) << ','
           << format_double(row.metrics.tool_rate) << ','
           << format_double(row.metrics.tool_precision) << ','
           << format_double(row.metrics.tool_recall) << ','
           << format_double(row.metrics.net_gain) << "\n";
    return os.str();
}

SplitDataset split_dataset(const Dataset& data, double heldout_fraction) {
    if (heldout_fraction < 0.0 || heldout_fraction >= 1.0)
        throw InvalidSpecError("heldout_fraction must be in [0,1)");
    std::vector<std::size_t> order(data.instances.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return data.instances[a].id < data.instances[b].id;
    });

    const std::size_t heldout_count =
        static_cast<std::size_t>(std::llround(heldout_fraction * static_cast<double>(order.size())));
    const std::size_t train_count = order.size() - heldout_count;

    SplitDataset split;
    split.train.tools = data.tools;
    split.train.feature_dim = data.feature_dim;
    split.train.layout = data.layout;
    split.heldout.tools = data.tools;
    split.heldout.feature_dim = data.feature_dim;
    split.heldout.layout = data.layout;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < train_count ? split.train : split.heldout).instances.push_back(data.instances[order[i]]);
    return split;
}

std::vector<CurvePoint> data_efficiency_curve(const TrainFn& train_fn, const Dataset& data,
                                              std::span<const std::size_t> budgets, int workers) {
    const SplitDataset split = split_dataset(data);
    for (std::size_t i = 1; i < budgets.size(); ++i)
        if (budgets[i] < budgets[i - 1]) throw InvalidSpecError("budgets must be ascending");
    if (!budgets.empty() && budgets.back() > split.train.instances.size())
        throw InvalidSpecError("budget exceeds the train split (" +
                               std::to_string(split.train.instances.size()) + " instances)");

    std::vector<CurvePoint> points;
    for (std::size_t budget : budgets) {
        Dataset subset;
        subset.tools = split.train.tools;
        subset.feature_dim = split.train.feature_dim;
        subset.layout = split.train.layout;
        subset.instances.assign(split.train.instances.begin(),
                                split.train.instances.begin() + static_cast<std::ptrdiff_t>(budget));

        const PolicyParams params = train_fn(subset);
        const Metrics metrics = evaluate(RouterStrategy::learned(params), split.heldout, workers);
        points.push_back({budget, metrics.accuracy, metrics.tool_rate, metrics.tool_precision});
    }
    return points;
}

std::string curve_to_csv(std::span<const CurvePoint> points) {
    std::ostringstream os;
    os << "budget,accuracy,tool_rate,tool_precision\n";
    for (const auto& point : points)
        os << point.budget << ',' << format_double(point.accuracy) << ','
           << format_double(point.tool_rate) << ',' << format_double(point.tool_precision) << "\n";
    return os.str();
}

}  // namespace audioroute

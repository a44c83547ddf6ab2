#pragma once

#include "audioroute/core.hpp"
#include "audioroute/policy.hpp"
#include "audioroute/rng.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace audioroute {

// Routing strategies under comparison. The keyword heuristic follows the
// surface keyword layout without looking at outcomes; the oracle reads the
// realized bits and upper-bounds everything.
struct RouterStrategy {
    enum class Kind { Random, AlwaysDirect, AlwaysTool, KeywordHeuristic, Oracle, Learned };

    Kind kind = Kind::AlwaysDirect;
    std::string tool_name;                                   // AlwaysTool
    std::map<std::string, std::uint32_t> keyword_feature;    // KeywordHeuristic
    PolicyParams params;                                     // Learned
    std::uint64_t seed = 0;                                  // Random

    static RouterStrategy random(std::uint64_t seed);
    static RouterStrategy always_direct();
    static RouterStrategy always_tool(std::string name);
    static RouterStrategy keyword_heuristic(std::map<std::string, std::uint32_t> keyword_feature);
    static RouterStrategy oracle();
    static RouterStrategy learned(PolicyParams params);

    std::string label() const;
};

ActionId route(const RouterStrategy& strategy, const TaskInstance& instance,
               const ToolRegistry& registry, RngStream& rng);

struct Metrics {
    double accuracy = 0.0;
    double tool_rate = 0.0;
    double tool_precision = 1.0;  // 1.0 by convention when no tool was called
    double tool_recall = 1.0;     // 1.0 by convention when no tool could help
    double net_gain = 0.0;        // mean (acc_chosen - acc_dir)
    std::map<std::string, double> per_category;

    // Exact integer counts behind the rates; division happens once at the end
    // so the accuracy/net_gain identity holds at the integer level.
    std::size_t n = 0;
    std::size_t correct = 0;
    std::size_t dir_correct = 0;
    std::size_t tool_calls = 0;
    std::size_t beneficial_calls = 0;    // tool called, acc_tool=1 and acc_dir=0
    std::size_t benefit_possible = 0;    // instances where some tool is strictly beneficial
    std::size_t benefit_taken = 0;
};

std::string metrics_to_json(const Metrics& metrics, int indent = 2);

// Deterministic instances only; the counterfactual bits drive every field.
Metrics evaluate(const RouterStrategy& strategy, const Dataset& data, int workers = 1);

struct ComparisonRow {
    std::string label;
    Metrics metrics;
};

struct AccuracyDelta {
    std::string first;
    std::string second;
    double delta = 0.0;  // first minus second
};

struct Comparison {
    std::vector<ComparisonRow> rows;       // input order
    std::vector<AccuracyDelta> deltas;     // all ordered pairs i < j
};

Comparison compare(std::span<const RouterStrategy> strategies, const Dataset& data, int workers = 1);
std::string comparison_to_json(const Comparison& comparison, int indent = 2);
std::string comparison_to_csv(const Comparison& comparison);

// Last heldout_fraction of the dataset by id order becomes the held-out split.
struct SplitDataset {
    Dataset train;
    Dataset heldout;
};

SplitDataset split_dataset(const Dataset& data, double heldout_fraction = 0.2);

struct CurvePoint {
    std::size_t budget = 0;
    double accuracy = 0.0;
    double tool_rate = 0.0;
    double tool_precision = 1.0;
};

using TrainFn = std::function<PolicyParams(const Dataset&)>;

// Greedy held-out accuracy of a fresh policy trained on each budget-sized
// prefix of the train split. Budget 0 evaluates the untrained policy; the
// caller supplies the untrained shape through train_fn on an empty slice.
std::vector<CurvePoint> data_efficiency_curve(const TrainFn& train_fn, const Dataset& data,
                                              std::span<const std::size_t> budgets,
                                              int workers = 1);

std::string curve_to_csv(std::span<const CurvePoint> points);

}  // namespace audioroute

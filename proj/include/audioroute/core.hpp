#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace audioroute {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DuplicateNameError : Error { using Error::Error; };
struct UnknownToolError : Error { using Error::Error; };
struct InvalidSpecError : Error { using Error::Error; };
struct ToolCallFormatError : Error { using Error::Error; };
struct NotAToolActionError : Error { using Error::Error; };
struct NonFiniteGradientError : Error { using Error::Error; };
struct RequiresDeterministicError : Error { using Error::Error; };
struct EmptyDatasetError : Error { using Error::Error; };
struct NoValidRecordsError : Error { using Error::Error; };
struct MissingArtifactError : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

enum class ActionKind { Direct, Tool, Decoy };

// A routing choice: answer directly, call a registered tool, or emit a
// well-formed but unregistered tool name (a decoy).
struct ActionId {
    ActionKind kind = ActionKind::Direct;
    std::string name;  // empty for Direct

    static ActionId direct() { return {ActionKind::Direct, {}}; }
    static ActionId tool(std::string n) { return {ActionKind::Tool, std::move(n)}; }
    static ActionId decoy(std::string n) { return {ActionKind::Decoy, std::move(n)}; }

    bool operator==(const ActionId&) const = default;
};

// "Direct", "Tool(name)", "Decoy(name)"
std::string to_string(const ActionId& action);

// Tool name grammar: [a-z][a-z0-9_]*
bool valid_tool_token(std::string_view token);

// ---------------------------------------------------------------------------
// Tasks and outcomes
// ---------------------------------------------------------------------------

// Correctness model for one instance. In deterministic mode all actions share
// one uniform draw u(instance_id, seed_salt); the bit for action a is
// u < p_a. Common draws make the direct counterfactual exact for every tool
// decision and remove comparison noise between actions.
struct OutcomeSpec {
    double p_dir = 0.0;
    std::map<std::string, double> p_tool;  // missing name = tool execution failure
    bool deterministic = true;
    std::uint64_t seed_salt = 0;

    bool operator==(const OutcomeSpec&) const = default;
};

struct TaskInstance {
    std::string id;
    std::string category;
    std::vector<std::uint32_t> features;  // active indices, sorted ascending
    std::uint32_t option_count = 4;
    OutcomeSpec outcome;

    bool operator==(const TaskInstance&) const = default;
};

// Realized correctness bits for one (instance, action) decision.
struct Outcome {
    int acc_dir = 0;
    std::optional<int> acc_tool;  // present iff a tool ran
};

// ---------------------------------------------------------------------------
// Tools
// ---------------------------------------------------------------------------

enum class AdapterKind { Simulated, NativeDsp, Subprocess };

struct ToolSpec {
    std::string name;
    std::vector<std::string> capabilities;
    std::string description;
    AdapterKind adapter = AdapterKind::Simulated;
    std::string command;       // subprocess adapter only
    int timeout_ms = 5000;     // subprocess adapter only
    // Simulated adapter script: either a canned flat result or a canned error.
    std::map<std::string, double> scripted_result;
    std::string scripted_error;
};

// Insertion-ordered registry; the position of a tool fixes its action index.
class ToolRegistry {
public:
    void register_tool(ToolSpec spec);
    const ToolSpec* lookup(std::string_view name) const;
    bool contains(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;  // throws UnknownToolError
    std::size_t size() const { return specs_.size(); }
    const std::vector<ToolSpec>& specs() const { return specs_; }

private:
    std::vector<ToolSpec> specs_;
    std::unordered_map<std::string, std::size_t> index_;
};

// [Direct, tool_1..tool_K, decoy_0..decoy_{D-1}] in stable order.
std::vector<ActionId> action_space(const ToolRegistry& registry, int decoy_count);

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

struct Rollout {
    std::string instance_id;
    ActionId action;
    int acc_dir = 0;
    std::optional<int> acc_tool;  // present iff action is a tool that executed
    double reward = 0.0;
    double behavior_logprob = 0.0;
};

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

// Where generator features live in the index space. Strategies that act on
// surface cues (keyword heuristic) and text-only masking read this; learned
// policies never do.
struct FeatureLayout {
    std::map<std::string, std::uint32_t> capability_feature;  // tag -> index
    std::map<std::string, std::uint32_t> keyword_feature;     // tool -> index
    std::map<std::string, std::uint32_t> category_feature;    // tag -> index
    std::vector<std::uint32_t> audio_features;  // masked in text-only mode

    bool operator==(const FeatureLayout&) const = default;
};

struct Dataset {
    ToolRegistry tools;
    std::uint32_t feature_dim = 0;
    std::vector<TaskInstance> instances;
    FeatureLayout layout;
};

}  // namespace audioroute

#include "audioroute/core.hpp"

namespace audioroute {

std::string to_string(const ActionId& action) {
    switch (action.kind) {
        case ActionKind::Direct: return "Direct";
        case ActionKind::Tool: return "Tool(" + action.name + ")";
        case ActionKind::Decoy: return "Decoy(" + action.name + ")";
    }
    return "Direct";
}

bool valid_tool_token(std::string_view token) {
    if (token.empty()) return false;
    if (token.front() < 'a' || token.front() > 'z') return false;
    for (char c : token) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
        if (!ok) return false;
    }
    return true;
}

void ToolRegistry::register_tool(ToolSpec spec) {
    if (!valid_tool_token(spec.name))
        throw InvalidSpecError("tool name '" + spec.name + "' violates token grammar [a-z][a-z0-9_]*");
    if (index_.count(spec.name))
        throw DuplicateNameError("tool '" + spec.name + "' already registered");
    index_.emplace(spec.name, specs_.size());
    specs_.push_back(std::move(spec));
}

const ToolSpec* ToolRegistry::lookup(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &specs_[it->second];
}

bool ToolRegistry::contains(std::string_view name) const {
    return index_.count(std::string(name)) > 0;
}

std::size_t ToolRegistry::index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
        throw UnknownToolError("tool '" + std::string(name) + "' not registered");
    return it->second;
}

std::vector<ActionId> action_space(const ToolRegistry& registry, int decoy_count) {
    if (decoy_count < 0) throw InvalidSpecError("decoy_count must be >= 0");
    std::vector<ActionId> actions;
    actions.reserve(registry.size() + 1 + static_cast<std::size_t>(decoy_count));
    actions.push_back(ActionId::direct());
    for (const auto& spec : registry.specs()) actions.push_back(ActionId::tool(spec.name));
    int made = 0;
    for (int j = 0; made < decoy_count; ++j) {
        std::string name = "decoy_" + std::to_string(j);
        if (registry.contains(name)) continue;  // keep the decoy invariant
        actions.push_back(ActionId::decoy(std::move(name)));
        ++made;
    }
    return actions;
}

}  // namespace audioroute

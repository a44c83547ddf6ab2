#pragma once

#include "audioroute/core.hpp"

#include <json.hpp>

#include <string>
#include <string_view>

namespace audioroute {

// Call syntax: optional surrounding whitespace, the literal <tool_call> tag,
// whitespace, one tool-name token, whitespace, the closing tag. A well-formed
// call with an unregistered name is a decoy, not a syntax error: it is the
// "capability that does not exist" case, which downstream rewards treat
// differently from malformed text.
ActionId parse_tool_call(std::string_view text, const ToolRegistry& registry);

// Canonical single-space form; parse(serialize(a)) == a for registered tools.
std::string serialize_tool_call(const ActionId& action);

// Unified result envelope. ok results carry a flat map of key -> number,
// string, or one-level list; errors carry a message instead.
struct ToolResult {
    std::string tool;
    bool ok = false;
    nlohmann::ordered_json result;  // flat object, populated iff ok
    std::string message;            // populated iff !ok
    double latency_ms = 0.0;

    static ToolResult success(std::string tool, nlohmann::ordered_json result);
    static ToolResult failure(std::string tool, std::string message);

    nlohmann::ordered_json to_json() const;
};

// True when j is an object whose values are numbers, strings, or arrays of
// numbers/strings (no deeper nesting).
bool flat_envelope(const nlohmann::json& j);

struct ToolRequest {
    std::string audio_path;
    nlohmann::json params = nlohmann::json::object();
};

// Dispatch by adapter kind. Total for registered names: adapter faults come
// back as ok=false results. Unregistered names throw UnknownToolError.
ToolResult invoke(const ToolRegistry& registry, const std::string& name, const ToolRequest& request);

// Line protocol for external tool processes: one JSON request object on the
// child's stdin, one JSON response line on its stdout.
//   request:  {"tool": name, "audio_path": path-or-null, "params": {...}}
//   response: {"status":"ok","result":{...}} | {"status":"error","message":...}
// Nonzero exit, timeout, or a malformed line all become error results.
ToolResult invoke_subprocess(const ToolSpec& spec, const ToolRequest& request);

// Registry manifest file (JSON): {"format": ..., "version": 1, "tools": [...]}.
ToolRegistry load_manifest(const std::string& path);
void save_manifest(const ToolRegistry& registry, const std::string& path);

// The standard audio tool set: speech transcription, sound classification and
// chord recognition reachable over the subprocess protocol, plus native
// feature extraction and sliding-window duration/temporal analysis.
ToolRegistry default_registry();

}  // namespace audioroute

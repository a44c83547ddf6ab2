#include "audioroute/toolbus.hpp"

#include "audioroute/dsp.hpp"

#include <cctype>
#include <chrono>
#include <csignal>
#include <cstring>
#include <fstream>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

namespace audioroute {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string_view strip(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool eat_whitespace(std::string_view& s) {
    std::size_t n = 0;
    while (n < s.size() && std::isspace(static_cast<unsigned char>(s[n]))) ++n;
    s.remove_prefix(n);
    return n > 0;
}

}  // namespace

ActionId parse_tool_call(std::string_view text, const ToolRegistry& registry) {
    constexpr std::string_view open_tag = "<tool_call>";
    constexpr std::string_view close_tag = "</tool_call>";

    std::string_view s = strip(text);
    if (s.substr(0, open_tag.size()) != open_tag)
        throw ToolCallFormatError("missing <tool_call> tag");
    s.remove_prefix(open_tag.size());
    if (!eat_whitespace(s)) throw ToolCallFormatError("missing whitespace after <tool_call>");

    std::size_t name_len = 0;
    while (name_len < s.size() && !std::isspace(static_cast<unsigned char>(s[name_len]))) ++name_len;
    const std::string name(s.substr(0, name_len));
    s.remove_prefix(name_len);
    if (name.empty()) throw ToolCallFormatError("empty tool name");
    if (!valid_tool_token(name))
        throw ToolCallFormatError("tool name '" + name + "' violates token grammar");

    if (!eat_whitespace(s)) throw ToolCallFormatError("missing whitespace before </tool_call>");
    if (s.substr(0, close_tag.size()) != close_tag)
        throw ToolCallFormatError("missing </tool_call> tag");
    s.remove_prefix(close_tag.size());
    if (!s.empty()) throw ToolCallFormatError("trailing text after </tool_call>");

    return registry.contains(name) ? ActionId::tool(name) : ActionId::decoy(name);
}

std::string serialize_tool_call(const ActionId& action) {
    if (action.kind != ActionKind::Tool)
        throw NotAToolActionError("cannot serialize " + to_string(action) + " as a tool call");
    return "<tool_call> " + action.name + " </tool_call>";
}

ToolResult ToolResult::success(std::string tool, ordered_json result) {
    ToolResult r;
    r.tool = std::move(tool);
    r.ok = true;
    r.result = std::move(result);
    return r;
}

ToolResult ToolResult::failure(std::string tool, std::string message) {
    ToolResult r;
    r.tool = std::move(tool);
    r.ok = false;
    r.message = std::move(message);
    return r;
}

ordered_json ToolResult::to_json() const {
    ordered_json j;
    j["tool"] = tool;
    j["status"] = ok ? "ok" : "error";
    if (ok)
        j["result"] = result;
    else
        j["message"] = message;
    j["latency_ms"] = latency_ms;
    return j;
}

bool flat_envelope(const nlohmann::json& j) {
    if (!j.is_object()) return false;
    for (const auto& [key, value] : j.items()) {
        (void)key;
        if (value.is_number() || value.is_string()) continue;
        if (value.is_array()) {
            bool flat = true;
            for (const auto& item : value)
                flat = flat && (item.is_number() || item.is_string());
            if (flat) continue;
        }
        return false;
    }
    return true;
}

namespace {

ToolResult invoke_simulated(const ToolSpec& spec) {
    if (!spec.scripted_error.empty()) return ToolResult::failure(spec.name, spec.scripted_error);
    ordered_json result;
    for (const auto& [key, value] : spec.scripted_result) result[key] = value;
    return ToolResult::success(spec.name, std::move(result));
}

ToolResult invoke_native(const ToolSpec& spec, const ToolRequest& request) {
    if (spec.name == "audio_features") return audio_features_tool(request);
    if (spec.name == "duration_analysis") return duration_analysis_tool(request);
    if (spec.name == "temporal_analysis") return temporal_analysis_tool(request);
    return ToolResult::failure(spec.name, "no native implementation for '" + spec.name + "'");
}

struct Pipe {
    int fds[2] = {-1, -1};
    ~Pipe() {
        close_read();
        close_write();
    }
    bool open() { return pipe(fds) == 0; }
    void close_read() {
        if (fds[0] >= 0) close(fds[0]);
        fds[0] = -1;
    }
    void close_write() {
        if (fds[1] >= 0) close(fds[1]);
        fds[1] = -1;
    }
};

}  // namespace

ToolResult invoke_subprocess(const ToolSpec& spec, const ToolRequest& request) {
    if (spec.command.empty())
        return ToolResult::failure(spec.name, "no command configured for subprocess tool");

    nlohmann::json req;
    req["tool"] = spec.name;
    req["audio_path"] = request.audio_path.empty() ? nlohmann::json() : nlohmann::json(request.audio_path);
    req["params"] = request.params;
    const std::string request_line = req.dump() + "\n";

    Pipe to_child, from_child;
    if (!to_child.open() || !from_child.open())
        return ToolResult::failure(spec.name, "pipe creation failed");

    signal(SIGPIPE, SIG_IGN);

    const pid_t pid = fork();
    if (pid < 0) return ToolResult::failure(spec.name, "fork failed");
    if (pid == 0) {
        setpgid(0, 0);
        dup2(to_child.fds[0], STDIN_FILENO);
        dup2(from_child.fds[1], STDOUT_FILENO);
        close(to_child.fds[0]);
        close(to_child.fds[1]);
        close(from_child.fds[0]);
        close(from_child.fds[1]);
        execl("/bin/sh", "sh", "-c", spec.command.c_str(), nullptr);
        _exit(127);
    }

    to_child.close_read();
    from_child.close_write();

    bool write_ok = true;
    std::size_t written = 0;
    while (written < request_line.size()) {
        const ssize_t n =
            write(to_child.fds[1], request_line.data() + written, request_line.size() - written);
        if (n <= 0) {
            write_ok = false;
            break;
        }
        written += static_cast<std::size_t>(n);
    }
    to_child.close_write();

    std::string response;
    bool timed_out = false;
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::milliseconds(spec.timeout_ms);
    while (true) {
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                                   deadline - std::chrono::steady_clock::now())
                                   .count();
        if (remaining <= 0) {
            timed_out = true;
            break;
        }
        pollfd pfd{from_child.fds[0], POLLIN, 0};
        const int pr = poll(&pfd, 1, static_cast<int>(remaining));
        if (pr == 0) {
            timed_out = true;
            break;
        }
        if (pr < 0) {
            if (errno == EINTR) continue;
            break;
        }
        char buf[4096];
        const ssize_t n = read(from_child.fds[0], buf, sizeof(buf));
        if (n <= 0) break;  // child closed stdout
        response.append(buf, static_cast<std::size_t>(n));
        if (response.find('\n') != std::string::npos) break;
    }
    from_child.close_read();

    int status = 0;
    if (timed_out) {
        kill(-pid, SIGKILL);
        waitpid(pid, &status, 0);
        return ToolResult::failure(spec.name,
                                   "timeout after " + std::to_string(spec.timeout_ms) + " ms");
    }
    waitpid(pid, &status, 0);

    if (!write_ok) return ToolResult::failure(spec.name, "child closed stdin before the request");
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
        return ToolResult::failure(spec.name,
                                   "child exited with status " +
                                       std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));

    const std::size_t eol = response.find('\n');
    const std::string line = eol == std::string::npos ? response : response.substr(0, eol);
    ordered_json parsed = ordered_json::parse(line, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("status"))
        return ToolResult::failure(spec.name, "malformed response line");

    const std::string st = parsed.value("status", "");
    if (st == "ok") {
        if (!parsed.contains("result") || !flat_envelope(parsed["result"]))
            return ToolResult::failure(spec.name, "result is not a flat envelope");
        return ToolResult::success(spec.name, parsed["result"]);
    }
    if (st == "error")
        return ToolResult::failure(spec.name, parsed.value("message", "unspecified tool error"));
    return ToolResult::failure(spec.name, "unknown response status '" + st + "'");
}

ToolResult invoke(const ToolRegistry& registry, const std::string& name, const ToolRequest& request) {
    const ToolSpec* spec = registry.lookup(name);
    if (!spec) throw UnknownToolError("tool '" + name + "' not registered");

    const auto start = std::chrono::steady_clock::now();
    ToolResult result;
    try {
        switch (spec->adapter) {
            case AdapterKind::Simulated: result = invoke_simulated(*spec); break;
            case AdapterKind::NativeDsp: result = invoke_native(*spec, request); break;
            case AdapterKind::Subprocess: result = invoke_subprocess(*spec, request); break;
        }
    } catch (const std::exception& e) {
        result = ToolResult::failure(name, e.what());
    }
    result.latency_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    return result;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kManifestFormat = "audioroute.tools";

const char* adapter_label(AdapterKind kind) {
    switch (kind) {
        case AdapterKind::Simulated: return "simulated";
        case AdapterKind::NativeDsp: return "native_dsp";
        case AdapterKind::Subprocess: return "subprocess";
    }
    return "simulated";
}

}  // namespace

ToolRegistry load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("tool manifest '" + path + "' not found");
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidSpecError(std::string("tool manifest: ") + e.what());
    }
    if (j.value("format", "") != kManifestFormat)
        throw InvalidSpecError("tool manifest: unknown format");

    ToolRegistry registry;
    for (const auto& tj : j.at("tools")) {
        ToolSpec tool;
        tool.name = tj.at("name").get<std::string>();
        if (tj.contains("capabilities"))
            tool.capabilities = tj.at("capabilities").get<std::vector<std::string>>();
        if (tj.contains("description")) tool.description = tj.at("description").get<std::string>();
        const std::string adapter = tj.value("adapter", "simulated");
        if (adapter == "simulated") tool.adapter = AdapterKind::Simulated;
        else if (adapter == "native_dsp") tool.adapter = AdapterKind::NativeDsp;
        else if (adapter == "subprocess") tool.adapter = AdapterKind::Subprocess;
        else throw InvalidSpecError("tool manifest: unknown adapter '" + adapter + "'");
        tool.command = tj.value("command", "");
        tool.timeout_ms = tj.value("timeout_ms", 5000);
        registry.register_tool(std::move(tool));
    }
    return registry;
}

void save_manifest(const ToolRegistry& registry, const std::string& path) {
    ordered_json j;
    j["format"] = kManifestFormat;
    j["version"] = 1;
    j["tools"] = ordered_json::array();
    for (const auto& tool : registry.specs()) {
        ordered_json tj;
        tj["name"] = tool.name;
        tj["capabilities"] = tool.capabilities;
        if (!tool.description.empty()) tj["description"] = tool.description;
        tj["adapter"] = adapter_label(tool.adapter);
        if (tool.adapter == AdapterKind::Subprocess) {
            tj["command"] = tool.command;
            tj["timeout_ms"] = tool.timeout_ms;
        }
        j["tools"].push_back(tj);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write tool manifest '" + path + "'");
    out << j.dump(2) << "\n";
}

ToolRegistry default_registry() {
    ToolRegistry registry;
    auto add = [&](const char* name, std::vector<std::string> caps, const char* desc,
                   AdapterKind adapter) {
        ToolSpec tool;
        tool.name = name;
        tool.capabilities = std::move(caps);
        tool.description = desc;
        tool.adapter = adapter;
        registry.register_tool(std::move(tool));
    };
    add("transcribe", {"speech"}, "speech recognition over the subprocess protocol",
        AdapterKind::Subprocess);
    add("sound_classify", {"sound_event"}, "sound event classification over the subprocess protocol",
        AdapterKind::Subprocess);
    add("duration_analysis", {"duration"}, "active-duration summary from energy windows",
        AdapterKind::NativeDsp);
    add("temporal_analysis", {"temporal"}, "activity timeline from energy windows",
        AdapterKind::NativeDsp);
    add("chord_recognition", {"harmony"}, "chord recognition over the subprocess protocol",
        AdapterKind::Subprocess);
    add("audio_features", {"music_features"}, "tempo, pitch and timbre estimates",
        AdapterKind::NativeDsp);
    return registry;
}

}  // namespace audioroute

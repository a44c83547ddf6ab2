// Reference child process for the line-delimited tool protocol. Reads one
// JSON request from stdin and answers on stdout. Modes (first argv) drive the
// behaviors the adapter must survive:
//   echo     answer ok with the request fields reflected back
//   sleep    stall longer than any sane timeout, then answer
//   fail     exit nonzero without answering
//   garbage  print a non-JSON line
//   nested   answer ok with an illegally nested result
//   features run native audio feature extraction on the request's audio_path

#include "audioroute/dsp.hpp"
#include "audioroute/toolbus.hpp"

#include <json.hpp>

#include <chrono>
#include <iostream>
#include <string>
#include <thread>

int main(int argc, char** argv) {
    const std::string mode = argc > 1 ? argv[1] : "echo";

    std::string line;
    if (!std::getline(std::cin, line)) return 1;
    nlohmann::json request = nlohmann::json::parse(line, nullptr, false);
    if (request.is_discarded()) {
        std::cout << R"({"status":"error","message":"bad request line"})" << "\n";
        return 0;
    }

    if (mode == "sleep") {
        std::this_thread::sleep_for(std::chrono::seconds(30));
    } else if (mode == "fail") {
        return 3;
    } else if (mode == "garbage") {
        std::cout << "this is not json\n";
        return 0;
    } else if (mode == "nested") {
        std::cout << R"({"status":"ok","result":{"outer":{"inner":1}}})" << "\n";
        return 0;
    } else if (mode == "features") {
        audioroute::ToolRequest tool_request;
        if (request.contains("audio_path") && request["audio_path"].is_string())
            tool_request.audio_path = request["audio_path"].get<std::string>();
        const audioroute::ToolResult result = audioroute::audio_features_tool(tool_request);
        nlohmann::ordered_json response;
        response["status"] = result.ok ? "ok" : "error";
        if (result.ok)
            response["result"] = result.result;
        else
            response["message"] = result.message;
        std::cout << response.dump() << "\n";
        return 0;
    }

    nlohmann::ordered_json response;
    response["status"] = "ok";
    nlohmann::ordered_json result;
    result["tool"] = request.value("tool", "");
    result["audio_path"] = request["audio_path"].is_string()
                               ? request["audio_path"].get<std::string>()
                               : std::string("null");
    result["param_count"] = static_cast<int>(request.value("params", nlohmann::json::object()).size());
    response["result"] = result;
    std::cout << response.dump() << "\n";
    return 0;
}

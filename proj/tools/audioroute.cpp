#include "audioroute/dsp.hpp"
#include "audioroute/eval.hpp"
#include "audioroute/grpo.hpp"
#include "audioroute/toolbus.hpp"
#include "audioroute/traces.hpp"
#include "audioroute/world.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

namespace fs = std::filesystem;
using audioroute::Dataset;
using audioroute::GrpoConfig;
using audioroute::RewardConfig;
using audioroute::RouterStrategy;
using ordered_json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitMissingArtifact = 4;

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw audioroute::Error("cannot write '" + path + "'");
    out << content;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
    std::string world_file;
    std::string world_spec_file;
    std::string trace_file;
    std::string feature_dict_file;
    std::string manifest_file;
    GrpoConfig grpo;
    RewardConfig reward;
    bool text_only = false;
    int decoys = 4;
    std::string output_dir = "run_out";
    bool seed_set = false;
};

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw audioroute::MissingArtifactError("config '" + path + "' not found");
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw audioroute::InvalidSpecError(std::string("config: ") + e.what());
    }

    RunConfig cfg;
    if (!j.contains("source") || !j["source"].is_object())
        throw audioroute::InvalidSpecError("config.source must be an object");
    const auto& source = j["source"];
    int sources = 0;
    if (source.contains("world")) {
        cfg.world_file = source["world"].get<std::string>();
        ++sources;
    }
    if (source.contains("world_spec")) {
        cfg.world_spec_file = source["world_spec"].get<std::string>();
        ++sources;
    }
    if (source.contains("traces")) {
        cfg.trace_file = source["traces"].get<std::string>();
        cfg.feature_dict_file = source.value("feature_dict", "");
        cfg.manifest_file = source.value("manifest", "");
        ++sources;
    }
    if (sources != 1)
        throw audioroute::InvalidSpecError("config.source must name exactly one of world, world_spec, traces");

    if (j.contains("grpo")) {
        const auto& g = j["grpo"];
        cfg.grpo.group_size = g.value("group_size", cfg.grpo.group_size);
        cfg.grpo.clip_eps = g.value("clip_eps", cfg.grpo.clip_eps);
        cfg.grpo.kl_beta = g.value("kl_beta", cfg.grpo.kl_beta);
        cfg.grpo.learning_rate = g.value("learning_rate", cfg.grpo.learning_rate);
        cfg.grpo.warmup_learning_rate = g.value("warmup_learning_rate", cfg.grpo.warmup_learning_rate);
        cfg.grpo.update_batch = g.value("update_batch", cfg.grpo.update_batch);
        cfg.grpo.epochs = g.value("epochs", cfg.grpo.epochs);
        cfg.grpo.std_guard = g.value("std_guard", cfg.grpo.std_guard);
        cfg.grpo.warmup_steps = g.value("warmup_steps", cfg.grpo.warmup_steps);
    }
    if (j.contains("reward")) {
        const auto& r = j["reward"];
        cfg.reward.tool_gain = r.value("tool_gain", cfg.reward.tool_gain);
        cfg.reward.tool_harm = r.value("tool_harm", cfg.reward.tool_harm);
        cfg.reward.redundancy_penalty = r.value("redundancy_penalty", cfg.reward.redundancy_penalty);
        cfg.reward.otherwise_value = r.value("otherwise_value", cfg.reward.otherwise_value);
        cfg.reward.dir_correct = r.value("dir_correct", cfg.reward.dir_correct);
        cfg.reward.dir_wrong = r.value("dir_wrong", cfg.reward.dir_wrong);
        cfg.reward.format_ok = r.value("format_ok", cfg.reward.format_ok);
        cfg.reward.format_bad = r.value("format_bad", cfg.reward.format_bad);
    }

    const std::string mode = j.value("router_mode", "multimodal");
    if (mode == "text_only") cfg.text_only = true;
    else if (mode != "multimodal")
        throw audioroute::InvalidSpecError("config.router_mode must be multimodal or text_only");

    cfg.decoys = j.value("decoys", cfg.decoys);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    if (j.contains("seed")) {
        cfg.grpo.seed = j["seed"].get<std::uint64_t>();
        cfg.seed_set = true;
    }
    return cfg;
}

Dataset load_config_dataset(const RunConfig& cfg) {
    if (!cfg.world_file.empty()) return audioroute::load_world(cfg.world_file).data;
    if (!cfg.world_spec_file.empty())
        return audioroute::generate_world(audioroute::load_world_spec(cfg.world_spec_file));
    audioroute::ToolRegistry registry = cfg.manifest_file.empty()
                                            ? audioroute::default_registry()
                                            : audioroute::load_manifest(cfg.manifest_file);
    audioroute::FeatureDict dict;
    if (!cfg.feature_dict_file.empty()) dict = audioroute::load_feature_dict(cfg.feature_dict_file);
    auto loaded = audioroute::load_traces(cfg.trace_file, dict, registry);
    for (const auto& err : loaded.errors)
        std::cerr << "trace line " << err.line << ": " << err.message << "\n";
    return std::move(loaded.data);
}

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

RouterStrategy make_strategy(const std::string& name, const Dataset& data,
                             const std::string& checkpoint, std::uint64_t seed) {
    if (name == "random") return RouterStrategy::random(seed);
    if (name == "always_direct") return RouterStrategy::always_direct();
    if (name.rfind("always_tool:", 0) == 0) {
        const std::string tool = name.substr(12);
        if (!data.tools.contains(tool))
            throw audioroute::InvalidSpecError("always_tool: '" + tool + "' not registered");
        return RouterStrategy::always_tool(tool);
    }
    if (name == "keyword_heuristic") {
        if (data.layout.keyword_feature.empty())
            throw audioroute::InvalidSpecError("keyword_heuristic needs a keyword feature layout");
        return RouterStrategy::keyword_heuristic(data.layout.keyword_feature);
    }
    if (name == "oracle") return RouterStrategy::oracle();
    if (name == "learned") {
        if (checkpoint.empty())
            throw audioroute::InvalidSpecError("strategy 'learned' needs --checkpoint");
        return RouterStrategy::learned(audioroute::load_policy(checkpoint));
    }
    throw audioroute::InvalidSpecError("unknown strategy '" + name + "'");
}

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream is(text);
    while (std::getline(is, part, ','))
        if (!part.empty()) parts.push_back(part);
    return parts;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_world_gen(const std::string& spec_path, const std::string& out_path) {
    const audioroute::WorldSpec spec = audioroute::load_world_spec(spec_path);
    spec.validate();
    const Dataset data = audioroute::generate_world(spec);
    audioroute::save_world(data, spec, out_path);

    const audioroute::Metrics oracle = audioroute::evaluate(RouterStrategy::oracle(), data);
    const audioroute::Metrics direct = audioroute::evaluate(RouterStrategy::always_direct(), data);
    std::cout << "world: " << data.instances.size() << " instances, "
              << data.tools.size() << " tools -> " << out_path << "\n";
    std::cout << "oracle accuracy " << oracle.accuracy << ", always_direct accuracy "
              << direct.accuracy << "\n";
    return kExitOk;
}

int cmd_train(const RunConfig& cfg, int workers) {
    const Dataset data = load_config_dataset(cfg);
    const audioroute::SplitDataset split = audioroute::split_dataset(data);

    audioroute::TrainOptions options;
    options.decoy_count = cfg.decoys;
    options.text_only = cfg.text_only;
    options.workers = workers;
    const audioroute::TrainResult result =
        audioroute::train(split.train, cfg.grpo, cfg.reward, audioroute::world_oracle(), options);

    fs::create_directories(cfg.output_dir);
    audioroute::save_policy(result.params, cfg.output_dir + "/policy.txt");

    std::ostringstream log;
    for (const auto& entry : result.log) log << audioroute::train_log_line(entry) << "\n";
    write_file(cfg.output_dir + "/train_log.jsonl", log.str());

    const audioroute::Metrics metrics =
        audioroute::evaluate(RouterStrategy::learned(result.params), split.heldout, workers);
    ordered_json report;
    report["router_mode"] = cfg.text_only ? "text_only" : "multimodal";
    report["seed"] = cfg.grpo.seed;
    report["train_instances"] = split.train.instances.size();
    report["heldout_instances"] = split.heldout.instances.size();
    report["decoys"] = cfg.decoys;
    report["strategy"] = "learned";
    report["metrics"] = ordered_json::parse(audioroute::metrics_to_json(metrics, -1));
    write_file(cfg.output_dir + "/metrics.json", report.dump(2) + "\n");

    std::cout << "trained " << split.train.instances.size() << " instances ("
              << (cfg.text_only ? "text_only" : "multimodal") << ", seed " << cfg.grpo.seed
              << ")\n";
    std::cout << "held-out accuracy " << metrics.accuracy << ", tool rate " << metrics.tool_rate
              << " -> " << cfg.output_dir << "\n";
    return kExitOk;
}

Dataset load_eval_dataset(const std::string& world_file, const std::string& trace_file,
                          const std::string& dict_file, const std::string& manifest_file) {
    if (!world_file.empty()) return audioroute::load_world(world_file).data;
    if (trace_file.empty())
        throw audioroute::InvalidSpecError("provide --data (world file) or --traces");
    audioroute::ToolRegistry registry = manifest_file.empty()
                                            ? audioroute::default_registry()
                                            : audioroute::load_manifest(manifest_file);
    audioroute::FeatureDict dict;
    if (!dict_file.empty()) dict = audioroute::load_feature_dict(dict_file);
    auto loaded = audioroute::load_traces(trace_file, dict, registry);
    for (const auto& err : loaded.errors)
        std::cerr << "trace line " << err.line << ": " << err.message << "\n";
    return std::move(loaded.data);
}

int cmd_eval(const Dataset& data, const std::string& strategy_name, const std::string& checkpoint,
             std::uint64_t seed, int workers, const std::string& out_path) {
    const RouterStrategy strategy = make_strategy(strategy_name, data, checkpoint, seed);
    const audioroute::Metrics metrics = audioroute::evaluate(strategy, data, workers);
    ordered_json report;
    report["strategy"] = strategy.label();
    report["seed"] = seed;
    report["metrics"] = ordered_json::parse(audioroute::metrics_to_json(metrics, -1));
    const std::string text = report.dump(2) + "\n";
    if (!out_path.empty()) write_file(out_path, text);
    std::cout << text;
    return kExitOk;
}

int cmd_compare(const Dataset& data, const std::vector<std::string>& names,
                const std::string& checkpoint, std::uint64_t seed, int workers,
                const std::string& out_json, const std::string& out_csv) {
    std::vector<RouterStrategy> strategies;
    for (const auto& name : names)
        strategies.push_back(make_strategy(name, data, checkpoint, seed));
    const audioroute::Comparison comparison = audioroute::compare(strategies, data, workers);

    const std::string json_text = audioroute::comparison_to_json(comparison) + "\n";
    if (!out_json.empty()) write_file(out_json, json_text);
    if (!out_csv.empty()) write_file(out_csv, audioroute::comparison_to_csv(comparison));

    std::cout << "strategy                accuracy  tool_rate  net_gain\n";
    for (const auto& row : comparison.rows) {
        char line[128];
        std::snprintf(line, sizeof(line), "%-22s %9.4f %10.4f %9.4f\n", row.label.c_str(),
                      row.metrics.accuracy, row.metrics.tool_rate, row.metrics.net_gain);
        std::cout << line;
    }
    return kExitOk;
}

int cmd_curve(const RunConfig& cfg, const std::vector<std::size_t>& budgets, int workers,
              const std::string& out_path) {
    const Dataset data = load_config_dataset(cfg);

    audioroute::TrainFn train_fn = [&](const Dataset& subset) {
        if (subset.instances.empty()) {
            const auto actions = audioroute::action_space(subset.tools, cfg.decoys);
            audioroute::PolicyParams params =
                audioroute::PolicyParams::zeros(subset.feature_dim, actions);
            if (cfg.text_only)
                for (auto f : subset.layout.audio_features)
                    if (f < params.feature_dim) params.masked[f] = 1;
            return params;
        }
        audioroute::TrainOptions options;
        options.decoy_count = cfg.decoys;
        options.text_only = cfg.text_only;
        options.workers = workers;
        return audioroute::train(subset, cfg.grpo, cfg.reward, audioroute::world_oracle(), options)
            .params;
    };

    const auto points = audioroute::data_efficiency_curve(train_fn, data, budgets, workers);
    const std::string csv = audioroute::curve_to_csv(points);
    if (!out_path.empty()) write_file(out_path, csv);
    std::cout << csv;
    return kExitOk;
}

int cmd_tool(const std::string& name, const std::string& audio_or_text,
             const std::string& manifest_file) {
    const audioroute::ToolRegistry registry = manifest_file.empty()
                                                  ? audioroute::default_registry()
                                                  : audioroute::load_manifest(manifest_file);
    if (name == "parse") {
        // Parser exposure: classify a raw tool-call string.
        const audioroute::ActionId action = audioroute::parse_tool_call(audio_or_text, registry);
        std::cout << audioroute::to_string(action) << "\n";
        return kExitOk;
    }
    if (!registry.contains(name)) throw audioroute::UnknownToolError("tool '" + name + "' not registered");
    audioroute::ToolRequest request;
    request.audio_path = audio_or_text;
    const audioroute::ToolResult result = audioroute::invoke(registry, name, request);
    std::cout << result.to_json().dump(2) << "\n";
    return kExitOk;  // an error envelope is data, not a CLI failure
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"audioroute: learned routing between direct answers and audio tools"};
    app.require_subcommand(1);

    // world-gen
    auto* world_gen = app.add_subcommand("world-gen", "generate a synthetic task world");
    std::string wg_spec, wg_out;
    world_gen->add_option("--spec", wg_spec, "world spec JSON")->required();
    world_gen->add_option("--out", wg_out, "output world file")->required();

    // train
    auto* train = app.add_subcommand("train", "warm up and train the routing policy");
    std::string tr_config;
    std::optional<std::uint64_t> tr_seed;
    int tr_workers = 1;
    std::string tr_out;
    train->add_option("--config", tr_config, "run config JSON")->required();
    train->add_option("--seed", tr_seed, "seed override")->envname("AUDIOROUTE_SEED");
    train->add_option("--workers", tr_workers, "rollout/eval parallelism")->envname("AUDIOROUTE_WORKERS");
    train->add_option("--out", tr_out, "output directory override");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate one routing strategy");
    std::string ev_data, ev_traces, ev_dict, ev_manifest, ev_strategy, ev_checkpoint, ev_out;
    std::uint64_t ev_seed = 0;
    int ev_workers = 1;
    eval_cmd->add_option("--data", ev_data, "world file");
    eval_cmd->add_option("--traces", ev_traces, "trace file");
    eval_cmd->add_option("--feature-dict", ev_dict, "feature dictionary for traces");
    eval_cmd->add_option("--manifest", ev_manifest, "tool manifest for traces");
    eval_cmd->add_option("--strategy", ev_strategy, "strategy name")->required();
    eval_cmd->add_option("--checkpoint", ev_checkpoint, "policy checkpoint for 'learned'");
    eval_cmd->add_option("--seed", ev_seed, "seed for the random strategy")->envname("AUDIOROUTE_SEED");
    eval_cmd->add_option("--workers", ev_workers, "eval parallelism")->envname("AUDIOROUTE_WORKERS");
    eval_cmd->add_option("--out", ev_out, "metrics report path");

    // compare
    auto* compare_cmd = app.add_subcommand("compare", "compare routing strategies");
    std::string cp_data, cp_traces, cp_dict, cp_manifest, cp_strategies, cp_checkpoint;
    std::string cp_out_json, cp_out_csv;
    std::uint64_t cp_seed = 0;
    int cp_workers = 1;
    compare_cmd->add_option("--data", cp_data, "world file");
    compare_cmd->add_option("--traces", cp_traces, "trace file");
    compare_cmd->add_option("--feature-dict", cp_dict, "feature dictionary for traces");
    compare_cmd->add_option("--manifest", cp_manifest, "tool manifest for traces");
    compare_cmd->add_option("--strategies", cp_strategies, "comma-separated strategy names")->required();
    compare_cmd->add_option("--checkpoint", cp_checkpoint, "policy checkpoint for 'learned'");
    compare_cmd->add_option("--seed", cp_seed, "seed for the random strategy")->envname("AUDIOROUTE_SEED");
    compare_cmd->add_option("--workers", cp_workers, "eval parallelism")->envname("AUDIOROUTE_WORKERS");
    compare_cmd->add_option("--out-json", cp_out_json, "comparison report path");
    compare_cmd->add_option("--out-csv", cp_out_csv, "comparison CSV path");

    // curve
    auto* curve_cmd = app.add_subcommand("curve", "data-efficiency curve");
    std::string cv_config, cv_budgets, cv_out;
    std::optional<std::uint64_t> cv_seed;
    int cv_workers = 1;
    curve_cmd->add_option("--config", cv_config, "run config JSON")->required();
    curve_cmd->add_option("--budgets", cv_budgets, "comma-separated training budgets")->required();
    curve_cmd->add_option("--seed", cv_seed, "seed override")->envname("AUDIOROUTE_SEED");
    curve_cmd->add_option("--workers", cv_workers, "parallelism")->envname("AUDIOROUTE_WORKERS");
    curve_cmd->add_option("--out", cv_out, "output CSV path");

    // tool
    auto* tool_cmd = app.add_subcommand("tool", "invoke a tool (or 'parse' a tool call)");
    std::string tl_name, tl_arg, tl_manifest;
    tool_cmd->add_option("name", tl_name, "tool name, or 'parse'")->required();
    tool_cmd->add_option("arg", tl_arg, "audio path (or call text for 'parse')");
    tool_cmd->add_option("--tools", tl_manifest, "tool manifest JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (world_gen->parsed()) return cmd_world_gen(wg_spec, wg_out);
        if (train->parsed()) {
            RunConfig cfg = load_run_config(tr_config);
            if (tr_seed) {
                cfg.grpo.seed = *tr_seed;
                cfg.seed_set = true;
            }
            if (!cfg.seed_set)
                throw audioroute::InvalidSpecError("config.seed (or --seed) is required");
            if (!tr_out.empty()) cfg.output_dir = tr_out;
            return cmd_train(cfg, tr_workers);
        }
        if (eval_cmd->parsed()) {
            const Dataset data = load_eval_dataset(ev_data, ev_traces, ev_dict, ev_manifest);
            return cmd_eval(data, ev_strategy, ev_checkpoint, ev_seed, ev_workers, ev_out);
        }
        if (compare_cmd->parsed()) {
            const Dataset data = load_eval_dataset(cp_data, cp_traces, cp_dict, cp_manifest);
            return cmd_compare(data, split_csv(cp_strategies), cp_checkpoint, cp_seed, cp_workers,
                               cp_out_json, cp_out_csv);
        }
        if (curve_cmd->parsed()) {
            RunConfig cfg = load_run_config(cv_config);
            if (cv_seed) {
                cfg.grpo.seed = *cv_seed;
                cfg.seed_set = true;
            }
            if (!cfg.seed_set)
                throw audioroute::InvalidSpecError("config.seed (or --seed) is required");
            std::vector<std::size_t> budgets;
            for (const auto& part : split_csv(cv_budgets))
                budgets.push_back(std::stoull(part));
            return cmd_curve(cfg, budgets, cv_workers, cv_out);
        }
        if (tool_cmd->parsed()) return cmd_tool(tl_name, tl_arg, tl_manifest);
    } catch (const audioroute::MissingArtifactError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissingArtifact;
    } catch (const audioroute::InvalidSpecError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const audioroute::ToolCallFormatError& e) {
        std::cerr << "FormatError: " << e.what() << "\n";
        return kExitUsage;
    } catch (const audioroute::UnknownToolError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

#include "audioroute/policy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace audioroute {

namespace {

constexpr std::string_view kPolicyMagic = "audioroute.policy.v1";

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const char* what) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw InvalidSpecError(std::string("checkpoint: bad double in ") + what);
    return v;
}

void check_instance(const PolicyParams& params, const TaskInstance& instance) {
    for (auto f : instance.features)
        if (f >= params.feature_dim)
            throw InvalidSpecError("instance '" + instance.id + "' feature index " +
                                   std::to_string(f) + " >= feature_dim " +
                                   std::to_string(params.feature_dim));
}

}  // namespace

PolicyParams PolicyParams::zeros(std::uint32_t feature_dim, std::vector<ActionId> actions) {
    PolicyParams p;
    p.feature_dim = feature_dim;
    p.actions = std::move(actions);
    p.temperature = 1.0;
    p.masked.assign(feature_dim, 0);
    p.weights.assign(static_cast<std::size_t>(feature_dim + 1) * p.actions.size(), 0.0);
    return p;
}

std::vector<double> logits(const PolicyParams& params, const TaskInstance& instance) {
    check_instance(params, instance);
    const std::size_t A = params.action_count();
    std::vector<double> z(A);
    const double* bias = params.weights.data() + static_cast<std::size_t>(params.feature_dim) * A;
    for (std::size_t a = 0; a < A; ++a) z[a] = bias[a];
    for (auto f : instance.features) {
        if (params.masked[f]) continue;
        const double* row = params.weights.data() + static_cast<std::size_t>(f) * A;
        for (std::size_t a = 0; a < A; ++a) z[a] += row[a];
    }
    const double inv_tau = 1.0 / params.temperature;
    for (auto& v : z) v *= inv_tau;
    return z;
}

std::vector<double> log_action_distribution(const PolicyParams& params, const TaskInstance& instance) {
    std::vector<double> z = logits(params, instance);
    double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double log_norm = zmax + std::log(sum);
    for (auto& v : z) v -= log_norm;
    return z;
}

std::vector<double> action_distribution(const PolicyParams& params, const TaskInstance& instance) {
    std::vector<double> p = log_action_distribution(params, instance);
    for (auto& v : p) v = std::exp(v);
    return p;
}

SampledAction sample_action(const PolicyParams& params, const TaskInstance& instance, RngStream& rng) {
    std::vector<double> logp = log_action_distribution(params, instance);
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t chosen = logp.size() - 1;  // guard against rounding at the top end
    for (std::size_t a = 0; a < logp.size(); ++a) {
        cum += std::exp(logp[a]);
        if (u < cum) {
            chosen = a;
            break;
        }
    }
    return {chosen, params.actions[chosen], logp[chosen]};
}

ActionId greedy_action(const PolicyParams& params, const TaskInstance& instance) {
    std::vector<double> z = logits(params, instance);
    std::size_t best = 0;
    for (std::size_t a = 1; a < z.size(); ++a)
        if (z[a] > z[best]) best = a;
    return params.actions[best];
}

std::string policy_to_text(const PolicyParams& params) {
    std::ostringstream out;
    const std::size_t A = params.action_count();
    out << kPolicyMagic << "\n";
    out << "feature_dim " << params.feature_dim << "\n";
    out << "action_count " << A << "\n";
    out << "temperature " << format_double(params.temperature) << "\n";
    out << "mask ";
    for (auto m : params.masked) out << (m ? '1' : '0');
    out << "\n";
    for (const auto& a : params.actions) {
        switch (a.kind) {
            case ActionKind::Direct: out << "action direct\n"; break;
            case ActionKind::Tool: out << "action tool " << a.name << "\n"; break;
            case ActionKind::Decoy: out << "action decoy " << a.name << "\n"; break;
        }
    }
    for (std::uint32_t r = 0; r <= params.feature_dim; ++r) {
        out << "row " << r;
        for (std::size_t a = 0; a < A; ++a) out << ' ' << format_double(params.at(r, a));
        out << "\n";
    }
    out << "end\n";
    return out.str();
}

PolicyParams policy_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    auto next_line = [&](const char* what) {
        if (!std::getline(in, line))
            throw InvalidSpecError(std::string("checkpoint: truncated before ") + what);
        return line;
    };

    if (next_line("header") != kPolicyMagic)
        throw InvalidSpecError("checkpoint: unknown format header '" + line + "'");

    auto expect_field = [&](const char* key) {
        next_line(key);
        std::string prefix = std::string(key) + " ";
        if (line.rfind(prefix, 0) != 0)
            throw InvalidSpecError(std::string("checkpoint: expected '") + key + "' line");
        return line.substr(prefix.size());
    };

    PolicyParams p;
    p.feature_dim = static_cast<std::uint32_t>(std::stoul(expect_field("feature_dim")));
    const std::size_t A = std::stoul(expect_field("action_count"));
    p.temperature = parse_double(expect_field("temperature"), "temperature");
    std::string mask = expect_field("mask");
    if (mask.size() != p.feature_dim)
        throw InvalidSpecError("checkpoint: mask length does not match feature_dim");
    p.masked.resize(p.feature_dim);
    for (std::uint32_t i = 0; i < p.feature_dim; ++i) {
        if (mask[i] != '0' && mask[i] != '1')
            throw InvalidSpecError("checkpoint: mask must be 0/1");
        p.masked[i] = mask[i] == '1';
    }
    p.actions.reserve(A);
    for (std::size_t i = 0; i < A; ++i) {
        std::istringstream ls(next_line("action"));
        std::string tag, kind, name;
        ls >> tag >> kind;
        if (tag != "action") throw InvalidSpecError("checkpoint: expected 'action' line");
        if (kind == "direct") {
            p.actions.push_back(ActionId::direct());
        } else if (kind == "tool" || kind == "decoy") {
            ls >> name;
            if (!valid_tool_token(name)) throw InvalidSpecError("checkpoint: bad action name");
            p.actions.push_back(kind == "tool" ? ActionId::tool(name) : ActionId::decoy(name));
        } else {
            throw InvalidSpecError("checkpoint: unknown action kind '" + kind + "'");
        }
    }
    p.weights.assign(static_cast<std::size_t>(p.feature_dim + 1) * A, 0.0);
    for (std::uint32_t r = 0; r <= p.feature_dim; ++r) {
        std::istringstream ls(next_line("row"));
        std::string tag;
        std::uint32_t idx = 0;
        ls >> tag >> idx;
        if (tag != "row" || idx != r) throw InvalidSpecError("checkpoint: row lines out of order");
        std::string tok;
        for (std::size_t a = 0; a < A; ++a) {
            if (!(ls >> tok)) throw InvalidSpecError("checkpoint: short weight row");
            p.at(r, a) = parse_double(tok, "weights");
        }
        if (ls >> tok) throw InvalidSpecError("checkpoint: extra values in weight row");
    }
    if (next_line("end") != "end") throw InvalidSpecError("checkpoint: missing end marker");
    return p;
}

void save_policy(const PolicyParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint '" + path + "'");
    out << policy_to_text(params);
}

PolicyParams load_policy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("checkpoint '" + path + "' not found");
    std::ostringstream buf;
    buf << in.rdbuf();
    return policy_from_text(buf.str());
}

}  // namespace audioroute

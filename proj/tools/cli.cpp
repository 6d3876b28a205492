// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stlite/container.hpp"
#include "stlite/cost_model.hpp"
#include "stlite/diagnostics.hpp"
#include "stlite/error.hpp"
#include "stlite/policy.hpp"
#include "stlite/retention_map.hpp"
#include "stlite/scoring.hpp"
#include "stlite/simulator.hpp"

namespace stlite::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CompressArgs {
    std::string input, output, policy = "st-lite";
    BudgetConfig config;
    bool no_css = false, no_tsg = false, emit_maps = false;
};

struct SimulateArgs {
    std::string scenario, out, emit_cache, policies = "st-lite,snapkv,random", betas = "0.05,0.1,0.2,0.4";
    std::optional<std::uint64_t> seed;
    std::size_t layers = 1;
    BudgetConfig config;
    bool no_css = false, no_tsg = false;
};

struct DiagnoseArgs {
    std::string input, out;
    double coverage = kDefaultCoverage, epsilon = kDefaultUniformityEpsilon;
    std::size_t mc_trials = 10000, delta = 32;
    std::uint64_t seed = 0;
    bool from_cache = false;
};

struct ReportArgs {
    std::string input, out;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + p.string());
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        if (!out.flush()) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + p.string() + ": " + ec.message());
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

PolicyKind policy_or_throw(const std::string& name) {
    const auto kind = parse_policy(name);
    if (!kind) throw ValidationError("unknown policy \"" + name + "\"");
    return *kind;
}

std::vector<double> parse_betas(const std::string& s) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) {
        std::size_t used = 0;
        double b = 0.0;
        try {
            b = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw ValidationError("invalid beta \"" + item + "\"");
        out.push_back(b);
    }
    if (out.empty()) throw ValidationError("at least one beta is required");
    return out;
}

// Linear-interpolation quartiles: min, q1, median, q3, max.
ordered_json quartiles(std::vector<double> v) {
    if (v.empty()) return nullptr;
    std::sort(v.begin(), v.end());
    ordered_json q = ordered_json::array();
    for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const double pos = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        q.push_back(v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]));
    }
    return q;
}

ordered_json layer_ledger(const LayerCache& cache, const EvictionResult& r) {
    ordered_json j;
    j["layer_index"] = cache.layer_index();
    j["seq_len"] = r.seq_len;
    j["budget"] = r.budget;
    j["kept_indices"] = r.kept_indices;
    j["tau_red"] = r.tau_red ? ordered_json(*r.tau_red) : ordered_json(nullptr);
    j["quartiles"] = {{"a_base", quartiles(r.scores.a_base)},
                      {"phi_space", quartiles(r.scores.phi_space)},
                      {"s_final", quartiles(r.scores.s_final)}};
    ordered_json rho = ordered_json::array();
    for (const auto& x : r.scores.rho) rho.push_back(x ? ordered_json(*x) : ordered_json(nullptr));
    j["scores"] = {{"a_base", r.scores.a_base},
                   {"phi_space", r.scores.phi_space},
                   {"rho", rho},
                   {"m_time", r.scores.m_time},
                   {"s_final", r.scores.s_final}};
    return j;
}

int cmd_compress(const CompressArgs& a, std::ostream& out, std::ostream& err) {
    const PolicyKind kind = policy_or_throw(a.policy);
    BudgetConfig cfg = a.config;
    cfg.enable_css = !a.no_css;
    cfg.enable_tsg = !a.no_tsg;
    cfg.validate();
    const auto caches = load_cache(a.input);
    const auto results = compress_layers(kind, caches, cfg);

    std::vector<LayerCache> compressed;
    compressed.reserve(caches.size());
    ordered_json ledger;
    ledger["policy"] = std::string(to_string(kind));
    ledger["beta"] = cfg.beta;
    ledger["delta"] = cfg.delta;
    ledger["enable_css"] = cfg.enable_css;
    ledger["enable_tsg"] = cfg.enable_tsg;
    ledger["normalize_terms"] = cfg.normalize_terms;
    ledger["pool_votes"] = cfg.pool_votes;
    ledger["seed"] = cfg.seed;
    ledger["layers"] = ordered_json::array();
    for (std::size_t l = 0; l < caches.size(); ++l) {
        compressed.push_back(apply_eviction(caches[l], results[l]));
        ledger["layers"].push_back(layer_ledger(caches[l], results[l]));
    }
    const fs::path dst(a.output);
    save_cache(compressed, dst);
    write_file(dst / "ledger.json", ledger.dump(2) + "\n");

    if (a.emit_maps) {
        fs::create_directories(dst / "maps");
        for (std::size_t l = 0; l < caches.size(); ++l) {
            for (const auto& lay : caches[l].layouts()) {
                const auto name = "layer" + std::to_string(caches[l].layer_index()) + "_frame" +
                                  std::to_string(lay.frame_index) + ".pgm";
                if (lay.pruned) {
                    err << "skipping map " << name << ": input frame is already pruned\n";
                    continue;
                }
                emit_retention_map(results[l], lay, dst / "maps" / name);
            }
        }
    }
    for (std::size_t l = 0; l < caches.size(); ++l) {
        out << "layer " << caches[l].layer_index() << ": kept " << results[l].kept_indices.size() << "/"
            << caches[l].seq_len() << "\n";
    }
    return kExitOk;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    StreamScenario scenario =
        a.scenario.empty() ? StreamScenario::default_scenario() : scenario_from_json(read_file(a.scenario));
    if (a.seed) scenario.seed = *a.seed;
    scenario.validate();
    std::vector<PolicyKind> policies;
    for (const auto& name : split_list(a.policies)) policies.push_back(policy_or_throw(name));
    if (policies.empty()) throw ValidationError("at least one policy is required");
    const auto betas = parse_betas(a.betas);
    BudgetConfig cfg = a.config;
    cfg.enable_css = !a.no_css;
    cfg.enable_tsg = !a.no_tsg;
    cfg.seed = scenario.seed;
    for (double b : betas) {
        BudgetConfig probe = cfg;
        probe.beta = b;
        probe.validate();
    }
    cfg.validate();

    const auto rows = run_experiment(scenario, policies, betas, cfg);
    if (!a.out.empty()) {
        std::string jsonl;
        for (const auto& r : rows) jsonl += report_row_json(r) + "\n";
        write_file(a.out, jsonl);
    }
    if (!a.emit_cache.empty()) {
        if (a.layers == 0) throw ValidationError("--layers must be >= 1");
        save_cache(generate_layers(scenario, a.layers), a.emit_cache);
    }
    out << format_report_table(rows);
    return kExitOk;
}

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out) {
    std::vector<Matrix> attns;
    if (a.from_cache) {
        for (const auto& c : load_cache(a.input)) attns.push_back(window_attention_map(c, a.delta));
    } else {
        attns = load_attention_dump(a.input);
    }
    const SparsityProfile p = sparsity_profile(attns, a.coverage, a.epsilon);
    std::size_t violations = 0;
    for (const auto& m : attns) violations += gap_bound_violations(m);
    const std::size_t mc_violations = gap_bound_monte_carlo(a.mc_trials, a.seed);

    ordered_json j;
    j["num_layers"] = attns.size();
    j["coverage"] = a.coverage;
    j["epsilon"] = p.epsilon;
    j["per_layer_sparsity"] = p.per_layer_sparsity;
    j["max_layer_step"] = p.max_layer_step;
    j["is_uniform"] = p.is_uniform;
    j["gap_bound_violations"] = violations;
    j["monte_carlo"] = {{"trials", a.mc_trials}, {"seed", a.seed}, {"violations", mc_violations}};
    const std::string text = j.dump(2) + "\n";
    if (a.out.empty()) {
        out << text;
    } else {
        write_file(a.out, text);
    }
    return kExitOk;
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
    const auto entries = parse_latency_json(read_file(a.input));
    const std::string table = format_speedup_table(speedup_report(entries));
    if (!a.out.empty()) write_file(a.out, table);
    out << table;
    return kExitOk;
}

void add_budget_flags(CLI::App* cmd, BudgetConfig& cfg, bool& no_css, bool& no_tsg) {
    cmd->add_option("--beta", cfg.beta, "Kept fraction in (0, 1]")->capture_default_str();
    cmd->add_option("--delta", cfg.delta, "Observation window length")->capture_default_str();
    cmd->add_flag("--no-css", no_css, "Disable the spatial saliency term");
    cmd->add_flag("--no-tsg", no_tsg, "Disable the trajectory redundancy gate");
    cmd->add_flag("--normalize", cfg.normalize_terms, "Min-max scale attention and saliency before summing");
    cmd->add_flag("--pool-votes", cfg.pool_votes, "Max-pool attention votes (kernel 7) before ranking");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"stlite: KV-cache compression for GUI-agent token streams"};
    app.name("stlite");
    app.require_subcommand(1);

    CompressArgs ca;
    auto* compress = app.add_subcommand("compress", "Compress a cache container");
    compress->add_option("input,--in", ca.input, "Input container directory")->required();
    compress->add_option("output,--out", ca.output, "Output container directory")->required();
    compress->add_option("--policy", ca.policy, "Eviction policy")->capture_default_str();
    add_budget_flags(compress, ca.config, ca.no_css, ca.no_tsg);
    compress->add_option("--seed", ca.config.seed, "Seed for randomized policies")->capture_default_str();
    compress->add_flag("--emit-maps", ca.emit_maps, "Write PGM retention maps under OUT/maps");

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "Run the synthetic retention experiment");
    simulate->add_option("--scenario", sa.scenario, "Scenario JSON (default: built-in scenario)");
    simulate->add_option("--policies", sa.policies, "Comma-separated policies")->capture_default_str();
    simulate->add_option("--betas", sa.betas, "Comma-separated budgets")->capture_default_str();
    simulate->add_option("--seed", sa.seed, "Override the scenario seed");
    add_budget_flags(simulate, sa.config, sa.no_css, sa.no_tsg);
    simulate->add_option("--out", sa.out, "Write report rows as JSON lines");
    simulate->add_option("--emit-cache", sa.emit_cache, "Also write the simulated cache as a container");
    simulate->add_option("--layers", sa.layers, "Layers in the emitted cache")->capture_default_str();

    DiagnoseArgs da;
    auto* diagnose = app.add_subcommand("diagnose", "Profile attention sparsity and check the softmax gap bound");
    diagnose->add_option("input,--in", da.input, "Attention dump directory")->required();
    diagnose->add_option("--out", da.out, "Write the JSON profile here instead of stdout");
    diagnose->add_option("--coverage", da.coverage, "Attention mass the top entries must cover")->capture_default_str();
    diagnose->add_option("--epsilon", da.epsilon, "Uniformity threshold on layer-to-layer change")->capture_default_str();
    diagnose->add_option("--mc-trials", da.mc_trials, "Random score vectors for the bound check")->capture_default_str();
    diagnose->add_option("--seed", da.seed, "Seed of the bound check")->capture_default_str();
    diagnose->add_flag("--from-cache", da.from_cache, "Input is a cache container; derive window attention maps");
    diagnose->add_option("--delta", da.delta, "Window length used with --from-cache")->capture_default_str();

    ReportArgs ra;
    auto* report = app.add_subcommand("report", "Speedup table from measured latency components");
    report->add_option("input,--in", ra.input, "Latency JSON file")->required();
    report->add_option("--out", ra.out, "Also write the table to this file");

    try {
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }

    try {
        if (compress->parsed()) return cmd_compress(ca, out, err);
        if (simulate->parsed()) return cmd_simulate(sa, out);
        if (diagnose->parsed()) return cmd_diagnose(da, out);
        return cmd_report(ra, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
}

}  // namespace stlite::cli

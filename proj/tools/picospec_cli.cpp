// Copyright 2026 The picospec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "picospec/analytics.hpp"
#include "picospec/bench.hpp"
#include "picospec/pipeline.hpp"
#include "picospec/scenario.hpp"
#include "picospec/socket_runner.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace picospec;

struct CommonOpts {
    std::string scenario_path;
    std::string mode_override;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::uint64_t> max_tokens_override;
};

ScenarioConfig load_scenario(const CommonOpts& opts) {
    if (!std::filesystem::exists(opts.scenario_path)) {
        throw Error(Errc::BadScenario, "scenario file not found: " + opts.scenario_path);
    }
    ScenarioConfig cfg = ScenarioConfig::load_file(opts.scenario_path);
    if (!opts.mode_override.empty()) cfg.mode = mode_from_name(opts.mode_override);
    if (opts.seed_override) {
        // One CLI seed fans out to the per-stream seeds deterministically.
        const std::uint64_t s = *opts.seed_override;
        cfg.session.seeds.edge_draft = mix64(s + 1);
        cfg.session.seeds.cloud_accept = mix64(s + 2);
        cfg.session.seeds.edge_resample = mix64(s + 3);
        cfg.session.seeds.network = mix64(s + 4);
    }
    if (opts.max_tokens_override) cfg.max_tokens = *opts.max_tokens_override;
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool seed_and_tokens = true) {
    cmd->add_option("--scenario", opts.scenario_path, "Scenario JSON file")->required();
    cmd->add_option("--mode", opts.mode_override,
                    "Override pipeline mode: sync, async, no-fastverify, no-splitrej");
    if (seed_and_tokens) {
        std::uint64_t dummy;
        (void)dummy;
        cmd->add_option_function<std::uint64_t>(
            "--seed", [&opts](const std::uint64_t& v) { opts.seed_override = v; },
            "Override all stream seeds from one value");
        cmd->add_option_function<std::uint64_t>(
            "--max-tokens", [&opts](const std::uint64_t& v) { opts.max_tokens_override = v; },
            "Override the generated-token budget");
    }
}

nlohmann::json aggregate(const std::vector<nlohmann::json>& rows) {
    nlohmann::json mean, stddev;
    for (auto it = rows.front().begin(); it != rows.front().end(); ++it) {
        double sum = 0.0, sq = 0.0;
        for (const auto& r : rows) {
            const double v = r.at(it.key()).get<double>();
            sum += v;
            sq += v * v;
        }
        const double n = static_cast<double>(rows.size());
        const double m = sum / n;
        mean[it.key()] = m;
        stddev[it.key()] = rows.size() > 1 ? std::sqrt(std::max(0.0, sq / n - m * m)) : 0.0;
    }
    return {{"repeats", rows.size()}, {"mean", mean}, {"stddev", stddev}};
}

int cmd_simulate(const CommonOpts& opts, const std::string& out_path,
                 const std::string& transcript_path, const std::string& format,
                 std::size_t repeats) {
    ScenarioConfig cfg = load_scenario(opts);
    std::vector<nlohmann::json> rows;
    RunResult last;
    for (std::size_t r = 0; r < repeats; ++r) {
        ScenarioConfig run_cfg = cfg;
        if (r > 0) {
            run_cfg.session.seeds.edge_draft = mix64(cfg.session.seeds.edge_draft + r);
            run_cfg.session.seeds.cloud_accept = mix64(cfg.session.seeds.cloud_accept + r);
            run_cfg.session.seeds.edge_resample = mix64(cfg.session.seeds.edge_resample + r);
            run_cfg.session.seeds.network = mix64(cfg.session.seeds.network + r);
        }
        last = run_scenario(run_cfg);
        rows.push_back(bench::metrics_to_json(last.metrics));
    }

    nlohmann::json out;
    const double alpha = bench::estimate_alpha(cfg);
    out["scenario_digest"] = cfg.digest();
    out["mode"] = mode_name(cfg.mode);
    out["metrics"] = rows.size() == 1 ? rows.front() : aggregate(rows);
    out["predictions"] = bench::predictions_to_json(bench::derive_params(cfg, alpha));

    std::string text;
    if (format == "json") {
        text = out.dump(2) + "\n";
    } else if (format == "csv") {
        std::ostringstream csv;
        const auto& m = rows.back();
        std::string header, row;
        for (auto it = m.begin(); it != m.end(); ++it) {
            header += (header.empty() ? "" : ",") + it.key();
            row += (row.empty() ? "" : ",") + bench::fmt(it.value().get<double>());
        }
        csv << header << "\n" << row << "\n";
        text = csv.str();
    } else {
        std::cerr << "unknown format: " << format << "\n";
        return 2;
    }

    if (out_path.empty()) {
        std::cout << text;
    } else {
        std::ofstream f(out_path);
        if (!f) {
            std::cerr << "cannot write " << out_path << "\n";
            return 1;
        }
        f << text;
    }
    if (!transcript_path.empty()) {
        bench::write_transcript(transcript_path, last.config_digest, last.transcript);
    }
    return 0;
}

int cmd_analyze(double alpha, double gamma, double t_draft, double t_rtt, double t_verify,
                double t_pre) {
    if (alpha < 0.0 || alpha > 1.0) {
        std::cerr << "usage error: alpha must lie in [0, 1]\n";
        return 2;
    }
    analytics::PerfParams p{alpha, gamma, t_draft, t_verify, t_rtt, t_pre};
    p.validate();
    const double el = analytics::expected_accept_length(alpha, gamma);
    const double l_sync = analytics::sync_latency(t_draft, t_rtt, t_verify);
    const double et_async = analytics::async_expected_latency(p);
    const double s = analytics::speedup(p);
    const double s_limit = analytics::speedup_limit(p);
    const bool at_limit = std::abs(s - s_limit) < 1e-9;
    std::printf("%-18s %.6g\n", "EL", el);
    std::printf("%-18s %.6g ms\n", "L_sync", l_sync);
    std::printf("%-18s %.6g tokens/s\n", "R_sync", analytics::sync_throughput(p) * 1000.0);
    std::printf("%-18s %.6g ms\n", "E[T_async]", et_async);
    std::printf("%-18s %.6g tokens/s\n", "R_async", analytics::async_throughput(p) * 1000.0);
    std::printf("%-18s %.6g%s\n", "S", s, at_limit ? "  (at upper bound)" : "");
    std::printf("%-18s %.6g\n", "S_limit", s_limit);
    std::printf("%-18s %.6g ms\n", "T_bubble",
                analytics::bubble_time(t_rtt, t_verify, t_draft, t_pre));
    return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& dim, const std::string& values_csv,
              const std::string& out_path) {
    ScenarioConfig cfg = load_scenario(opts);
    std::vector<double> values;
    std::stringstream ss(values_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) values.push_back(std::stod(item));
    }
    const std::string csv = bench::sweep_csv(cfg, dim, values);
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        std::ofstream f(out_path);
        if (!f) {
            std::cerr << "cannot write " << out_path << "\n";
            return 1;
        }
        f << csv;
    }
    return 0;
}

int cmd_serve(const CommonOpts& opts, const std::string& role, const std::string& addr,
              const std::string& transcript_path, const std::string& port_file) {
    ScenarioConfig cfg = load_scenario(opts);
    auto [host, port] = parse_address(addr);
    std::vector<TokenId> committed;
    if (role == "cloud") {
        SocketListener listener = SocketListener::bind_listen(host, port);
        std::printf("listening on %s:%u\n", host.c_str(), listener.port());
        std::fflush(stdout);
        if (!port_file.empty()) {
            std::ofstream pf(port_file);
            pf << listener.port() << "\n";
        }
        committed = run_cloud_role(cfg, listener.accept_one());
    } else if (role == "edge") {
        committed = run_edge_role(cfg, SocketConnection::connect_to(host, port));
    } else {
        std::cerr << "usage error: role must be edge or cloud\n";
        return 2;
    }
    std::printf("%s committed %zu tokens\n", role.c_str(), committed.size() - cfg.prompt.size());
    if (!transcript_path.empty()) {
        std::vector<TokenId> transcript(committed.begin() +
                                            static_cast<std::ptrdiff_t>(cfg.prompt.size()),
                                        committed.end());
        bench::write_transcript(transcript_path, cfg.digest(), transcript);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic desk-scale harness for the picospec edge-cloud "
                 "collaborative speculative decoding protocol"};
    app.require_subcommand(1);

    CommonOpts sim_opts;
    std::string sim_out, sim_transcript, sim_format = "json";
    std::size_t sim_repeats = 1;
    auto* sim = app.add_subcommand("simulate", "Run the discrete-event pipeline on a scenario");
    add_common(sim, sim_opts);
    sim->add_option("--out", sim_out, "Write metrics to this file instead of stdout");
    sim->add_option("--transcript", sim_transcript, "Write the committed transcript here");
    sim->add_option("--format", sim_format, "Output format: json or csv");
    sim->add_option("--repeats", sim_repeats, "Aggregate mean/stddev over this many seeded runs");

    double an_alpha = 0.8, an_gamma = 4, an_t_draft = 100, an_t_rtt = 60, an_t_verify = 30,
           an_t_pre = 0;
    auto* an = app.add_subcommand("analyze", "Print the closed-form performance model");
    an->add_option("--alpha", an_alpha, "Token acceptance rate in [0, 1]");
    an->add_option("--gamma", an_gamma, "Speculative step size");
    an->add_option("--t-draft", an_t_draft, "Edge time to draft gamma tokens (ms)");
    an->add_option("--t-rtt", an_t_rtt, "Network round-trip time (ms)");
    an->add_option("--t-verify", an_t_verify, "Cloud time to verify gamma tokens (ms)");
    an->add_option("--t-pre", an_t_pre, "Pre-verify lead time (ms)");

    CommonOpts sweep_opts;
    std::string sweep_dim, sweep_values, sweep_out;
    auto* sw = app.add_subcommand("sweep", "Sweep one dimension and emit CSV");
    add_common(sw, sweep_opts);
    sw->add_option("--dim", sweep_dim, "Dimension: gamma, K, rtt, lambda")->required();
    sw->add_option("--values", sweep_values, "Comma-separated sweep values")->required();
    sw->add_option("--out", sweep_out, "Write CSV to this file instead of stdout");

    CommonOpts serve_opts;
    std::string serve_role, serve_addr, serve_transcript, serve_port_file;
    auto* sv = app.add_subcommand("serve", "Run one role of the two-process socket demo");
    add_common(sv, serve_opts);
    sv->add_option("--role", serve_role, "edge or cloud")->required();
    sv->add_option("--addr", serve_addr, "host:port (cloud may use port 0)")->required();
    sv->add_option("--transcript", serve_transcript, "Write the committed transcript here");
    sv->add_option("--port-file", serve_port_file, "Cloud: write the bound port to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) {
            return cmd_simulate(sim_opts, sim_out, sim_transcript, sim_format, sim_repeats);
        }
        if (an->parsed()) {
            return cmd_analyze(an_alpha, an_gamma, an_t_draft, an_t_rtt, an_t_verify, an_t_pre);
        }
        if (sw->parsed()) {
            return cmd_sweep(sweep_opts, sweep_dim, sweep_values, sweep_out);
        }
        if (sv->parsed()) {
            return cmd_serve(serve_opts, serve_role, serve_addr, serve_transcript,
                             serve_port_file);
        }
    } catch (const picospec::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == picospec::Errc::BadScenario ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

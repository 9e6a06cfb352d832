/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <elstream/harness.hpp>

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInternal = 3;

struct SweepRange {
    std::uint64_t from = 1;
    std::uint64_t to = 1;
};

SweepRange parse_range(const std::string& text) {
    auto dots = text.find("..");
    if (dots == std::string::npos) {
        throw elstream::ConfigError("range must look like a..b: '" + text + "'");
    }
    SweepRange r;
    r.from = std::stoull(text.substr(0, dots));
    r.to = std::stoull(text.substr(dots + 2));
    return r;
}

int cmd_run(const std::string& scenario_path, std::uint64_t seed_override, bool has_seed,
            const std::string& report_path, const std::string& trace_path) {
    elstream::register_builtin_logics();
    elstream::Scenario scenario = elstream::load_scenario(scenario_path);
    if (has_seed) scenario.seed = seed_override;
    std::vector<std::string> trace;
    elstream::RunReport report =
        elstream::run_scenario(scenario, nullptr, nullptr, trace_path.empty() ? nullptr : &trace);
    std::cout << elstream::render_report(report);
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        out << elstream::render_report(report, /*machine=*/true);
    }
    if (!trace_path.empty()) {
        std::ofstream out(trace_path);
        for (const auto& line : trace) out << line << '\n';
    }
    return report.pass ? kExitPass : kExitFail;
}

int cmd_oracle(const std::string& scenario_path, const std::string& out_path) {
    elstream::register_builtin_logics();
    elstream::Scenario scenario = elstream::load_scenario(scenario_path);
    std::vector<elstream::Event> log = elstream::oracle_run(scenario);
    elstream::write_event_log(out_path, log);
    std::cout << "oracle log: " << log.size() << " events -> " << out_path << '\n';
    return kExitPass;
}

int cmd_diff(const std::string& path_a, const std::string& path_b) {
    auto a = elstream::read_event_log(path_a);
    auto b = elstream::read_event_log(path_b);
    std::int64_t d = elstream::diff_events(a, b);
    if (d < 0) {
        std::cout << "equal (" << a.size() << " events)\n";
        return kExitPass;
    }
    std::cout << "first divergence at index " << d << " (" << a.size() << " vs " << b.size()
              << " events)\n";
    return kExitFail;
}

int cmd_sweep(const std::string& scenario_path, const std::string& range_text,
              std::uint64_t stride) {
    elstream::register_builtin_logics();
    elstream::Scenario scenario = elstream::load_scenario(scenario_path);
    SweepRange range = parse_range(range_text);
    auto results = elstream::sweep_migrations(scenario, range.from, range.to, stride);
    std::size_t failures = 0;
    for (const auto& r : results) {
        std::cout << "migrate-at " << r.trigger_step << ": " << (r.pass ? "pass" : "fail");
        if (!r.pass) {
            std::cout << " (" << r.reason << ")";
            ++failures;
        }
        std::cout << '\n';
    }
    std::cout << results.size() - failures << "/" << results.size() << " trigger points pass\n";
    return failures == 0 ? kExitPass : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"elastic stream processing scenario harness"};
    app.require_subcommand(1);

    std::string scenario_path, report_path, trace_path, out_path, path_a, path_b, range_text;
    std::uint64_t seed = 0, stride = 1;

    auto* run = app.add_subcommand("run", "run a scenario and diff against the oracle");
    run->add_option("scenario", scenario_path)->required();
    auto* seed_opt = run->add_option("--seed", seed, "override the scenario seed");
    run->add_option("--report", report_path, "write a machine-readable report");
    run->add_option("--trace", trace_path, "write the delivery trace");

    auto* oracle = app.add_subcommand("oracle", "write the reference output log");
    oracle->add_option("scenario", scenario_path)->required();
    oracle->add_option("--out", out_path)->default_val("oracle.log");

    auto* diff = app.add_subcommand("diff", "byte-compare two event logs");
    diff->add_option("log_a", path_a)->required();
    diff->add_option("log_b", path_b)->required();

    auto* sweep = app.add_subcommand("sweep", "run once per migration trigger point");
    sweep->add_option("scenario", scenario_path)->required();
    sweep->add_option("--migrate-at", range_text, "trigger range a..b")->required();
    sweep->add_option("--stride", stride, "step between trigger points");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return cmd_run(scenario_path, seed, seed_opt->count() > 0, report_path, trace_path);
        }
        if (oracle->parsed()) return cmd_oracle(scenario_path, out_path);
        if (diff->parsed()) return cmd_diff(path_a, path_b);
        if (sweep->parsed()) return cmd_sweep(scenario_path, range_text, stride);
    } catch (const elstream::ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << '\n';
        return kExitConfig;
    } catch (const elstream::Error& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kExitInternal;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kExitInternal;
    }
    return kExitConfig;
}

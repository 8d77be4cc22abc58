// csfverify: runs scenario documents and writes JSON reports.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "csf/builtin_scenarios.hpp"
#include "csf/scenario.hpp"

namespace {

csf::ScenarioDocument load(const std::string& arg) {
    if (std::filesystem::exists(arg)) return csf::load_scenario(arg);
    std::string name = arg;
    if (name.size() > 4 && name.ends_with(".scn")) name.resize(name.size() - 4);
    for (const auto& b : csf::builtin_scenarios())
        if (b.name == name) return csf::load_scenario_text(b.text, "builtin:" + std::string(b.name) + ".scn");
    throw csf::ScenarioError(arg + ": no such file or built-in scenario");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Verify contact structures on symplectic fibrations from scenario documents"};
    app.require_subcommand(1);

    std::string scenario, out, task;
    csf::RunSettings settings;
    int grid = 0, t_samples = 0;
    double threshold = 0.0;

    auto* verify = app.add_subcommand("verify", "Run every task of a scenario file (or built-in name)");
    verify->add_option("scenario", scenario, "Scenario file (.scn) or built-in name")->required();
    auto* grid_opt = verify->add_option("--grid", grid, "Points per axis for every grid")->check(CLI::PositiveNumber);
    auto* thr_opt = verify->add_option("--threshold", threshold, "Positivity threshold")->check(CLI::NonNegativeNumber);
    auto* ts_opt = verify->add_option("--t-samples", t_samples, "Samples of the family parameter")->check(CLI::Range(2, 100000));
    verify->add_option("--seed", settings.seed, "Seed for random-point checks")->capture_default_str();
    verify->add_option("--out", out, "Write the JSON report here (default: stdout)");

    app.add_subcommand("list-builtins", "List the built-in scenarios");
    auto* explain = app.add_subcommand("explain", "Describe what a task computes");
    explain->add_option("task", task, "Task name")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("list-builtins")) {
            for (const auto& b : csf::builtin_scenarios()) std::cout << b.name << ".scn\n";
            return 0;
        }
        if (app.got_subcommand("explain")) {
            std::cout << csf::explain_task(task) << "\n";
            return 0;
        }
        if (*grid_opt) settings.grid = grid;
        if (*thr_opt) settings.threshold = threshold;
        if (*ts_opt) settings.t_samples = t_samples;
        const csf::ScenarioDocument doc = load(scenario);
        const csf::RunReport report = csf::run_suite(doc, settings);
        if (out.empty()) {
            std::cout << csf::serialize_report(csf::to_json(report));
        } else {
            csf::emit_report(report, out);
        }
        for (const auto& t : report.tasks)
            std::cerr << "[" << csf::to_string(t.status) << "] " << t.index << " " << t.task << " " << t.target
                      << (t.message.empty() ? "" : ": " + t.message) << "\n";
        return report.ok() ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

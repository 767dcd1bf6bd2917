#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fot/backend.hpp"
#include "fot/forest.hpp"
#include "fot/harness.hpp"
#include "fot/prompts.hpp"
#include "fot/rational.hpp"
#include "fot/tasks.hpp"
#include "fot/types.hpp"

namespace {

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stoi(tok));
    return out;
}

fot::TraceSink stderr_trace() {
    return [](const std::string& line) { std::cerr << line << "\n"; };
}

void cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
             const std::string& backend_override, const std::string& out_override,
             bool quiet) {
    fot::ExperimentConfig cfg = fot::load_experiment_config(config_path);
    if (seed) cfg.forest.seed = *seed;
    if (!backend_override.empty()) cfg.backend_kind = backend_override;
    if (!out_override.empty()) cfg.out_dir = out_override;

    std::vector<fot::Problem> problems;
    if (!cfg.problems_path.empty()) {
        problems = fot::load_problems(cfg.problems_path);
    } else if (cfg.task == fot::TaskKind::Game24) {
        // Stand-in set: the published 95-problem list is unavailable, so a
        // fixed-seed sample of solvable multisets substitutes for it.
        problems = fot::generate_game24_set(95, 0);
        if (!quiet) std::cerr << "no task.problems configured; using the built-in stand-in set\n";
    } else {
        throw fot::ConfigError("task.problems is required for math runs");
    }

    fot::KnowledgeBase kb;
    if (!cfg.kb_path.empty()) kb = fot::ingest_kb(cfg.kb_path);
    const fot::PromptPack pack = fot::PromptPack::load(cfg.prompt_dir);
    auto backend = fot::make_backend(cfg, problems);

    fot::RunnerOptions opts;
    opts.results_path = (std::filesystem::path(cfg.out_dir) / "results.jsonl").string();
    if (!quiet) opts.trace = stderr_trace();

    const fot::BenchmarkSummary summary =
        fot::run_benchmark(problems, cfg.forest, kb, *backend, pack, opts);
    fot::emit_report(summary.records, cfg.out_dir);

    const fot::BackendStats stats = backend->stats();
    std::cout << "problems:          " << summary.records.size() << "\n"
              << "accuracy:          " << summary.accuracy << "\n"
              << "mean invocations:  " << summary.mean_invocations << "\n"
              << "backend calls:     " << stats.invocations << " (tokens in " << stats.tokens_in
              << ", out " << stats.tokens_out << ")\n"
              << "report dir:        " << cfg.out_dir << "\n";
}

struct SolveArgs {
    std::string input;
    std::string task = "game24";
    std::string backend = "oracle";
    std::string truth;
    std::string base_url;
    std::string model = "gpt-4o-mini";
    double success = 1.0;
    int n_trees = 4;
    int beam_width = 2;
    int max_depth = 3;
    int rollouts = 4;
    double threshold = 0.5;
    std::string decision = "cged";
    bool no_sparse = false;
    bool no_early = false;
    std::uint64_t seed = 0;
    std::string prompt_dir;
};

void cmd_solve(const SolveArgs& a) {
    fot::Problem problem;
    problem.id = "adhoc";
    const auto kind = fot::task_kind_from_string(a.task);
    if (!kind) throw fot::ConfigError("unknown task kind: " + a.task);
    problem.task = *kind;
    problem.input = a.input;
    if (!a.truth.empty()) problem.ground_truth = a.truth;
    problem.validate();

    fot::ForestConfig cfg;
    cfg.n_trees = a.n_trees;
    cfg.beam_width = a.beam_width;
    cfg.max_depth = a.max_depth;
    cfg.rollouts = a.rollouts;
    cfg.correction_threshold = a.threshold;
    const auto d = fot::decision_from_string(a.decision);
    if (!d) throw fot::ConfigError("unknown decision strategy: " + a.decision);
    cfg.decision = *d;
    cfg.sparse_activation = !a.no_sparse;
    cfg.early_termination = !a.no_early;
    cfg.seed = a.seed;
    cfg.validate();

    std::unique_ptr<fot::Backend> backend;
    if (a.backend == "oracle") {
        fot::OracleBehavior b = fot::OracleBehavior::uniform(a.success, a.seed);
        b.ans_format = cfg.ans_format;
        if (problem.task == fot::TaskKind::MathWord && problem.ground_truth)
            b.math_truth[problem.input] = *problem.ground_truth;
        backend = fot::make_oracle_backend(problem.task, b);
    } else if (a.backend == "http") {
        fot::HttpBackendConfig hc;
        hc.base_url = a.base_url;
        hc.model = a.model;
        hc.validate();
        backend = std::make_unique<fot::HttpBackend>(hc);
    } else {
        throw fot::ConfigError("solve supports oracle or http backends");
    }

    const fot::PromptPack pack = fot::PromptPack::load(a.prompt_dir);
    const fot::KnowledgeBase kb;
    const fot::ForestResult result = fot::run_forest(
        problem, cfg, kb, *backend, pack,
        [](const std::string& line) { std::cout << line << "\n"; });

    std::cout << "\nresult set size: " << result.result_set.size() << "\n";
    if (result.final) {
        std::cout << "final answer:    " << result.final->answer << "\n";
        if (problem.task == fot::TaskKind::Game24) {
            const bool ok = fot::check_expression_24(result.final->answer,
                                                     fot::parse_numbers24(problem.input));
            std::cout << "verified:        " << (ok ? "yes" : "no") << "\n";
        }
    } else {
        std::cout << "final answer:    (none: every tree deactivated)\n";
    }
    std::cout << "invocations:     " << result.total_invocations << " (generation "
              << result.breakdown.generation << ", scoring " << result.breakdown.scoring
              << ", correction " << result.breakdown.correction << ", decision "
              << result.breakdown.decision << ")\n";
}

void cmd_sim(double p, const std::string& n_csv, int trials, std::uint64_t seed,
             const std::string& decision, const std::string& out_csv) {
    fot::ScalingSimConfig cfg;
    cfg.per_tree_success = p;
    cfg.n_trees_sweep = parse_int_list(n_csv);
    cfg.trials = trials;
    cfg.seed = seed;
    const auto d = fot::decision_from_string(decision);
    if (!d) throw fot::ConfigError("unknown decision strategy: " + decision);
    cfg.decision = *d;

    const auto rows = fot::simulate_scaling(cfg);
    std::cout << "n_trees  empirical  expected\n";
    std::string csv = "n_trees,empirical_success,expected_success\n";
    for (const auto& row : rows) {
        char line[96];
        std::snprintf(line, sizeof(line), "%7d  %9.6f  %8.6f\n", row.n,
                      row.empirical_success, row.expected_success);
        std::cout << line;
        char rec[96];
        std::snprintf(rec, sizeof(rec), "%d,%.6f,%.6f\n", row.n, row.empirical_success,
                      row.expected_success);
        csv += rec;
    }
    if (!out_csv.empty()) {
        std::ofstream f(out_csv, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write: " + out_csv);
        f << csv;
        std::cout << "wrote " << out_csv << "\n";
    }
}

void cmd_report(const std::string& results_path, const std::string& out_dir) {
    const auto records = fot::read_records(results_path);
    fot::emit_report(records, out_dir);
    std::cout << "wrote report for " << records.size() << " records to " << out_dir << "\n";
}

void cmd_gen24(int count, std::uint64_t seed, const std::string& out_path) {
    const auto problems = fot::generate_game24_set(count, seed);
    std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write: " + out_path);
    for (const auto& p : problems) {
        const nlohmann::json j{{"id", p.id}, {"input", p.input}, {"task", to_string(p.task)}};
        f << j.dump() << "\n";
    }
    std::cout << "wrote " << problems.size() << " problems to " << out_path
              << " (stand-in sample of solvable 1..13 multisets)\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"forest-of-thought reasoning engine"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run a benchmark from an experiment config");
    std::string run_config;
    std::optional<std::uint64_t> run_seed;
    std::string run_backend, run_out;
    bool run_quiet = false;
    run->add_option("--config", run_config, "experiment JSON file")->required();
    run->add_option("--seed", run_seed, "override forest.seed");
    run->add_option("--backend", run_backend, "override backend kind")
        ->check(CLI::IsMember({"http", "scripted", "oracle"}));
    run->add_option("--out", run_out, "override output directory");
    run->add_flag("--quiet", run_quiet, "suppress per-problem progress");

    auto* solve = app.add_subcommand("solve", "solve one problem and print the trace");
    SolveArgs sa;
    solve->add_option("--input", sa.input, "problem input (Game24: four numbers)")->required();
    solve->add_option("--task", sa.task, "game24 or math");
    solve->add_option("--backend", sa.backend, "oracle or http")
        ->check(CLI::IsMember({"oracle", "http"}));
    solve->add_option("--truth", sa.truth, "ground truth for the math oracle");
    solve->add_option("--base-url", sa.base_url, "HTTP backend base URL");
    solve->add_option("--model", sa.model, "HTTP backend model name");
    solve->add_option("--success", sa.success, "oracle success probability");
    solve->add_option("--n", sa.n_trees, "number of trees");
    solve->add_option("--beam", sa.beam_width, "beam width");
    solve->add_option("--depth", sa.max_depth, "max tree depth");
    solve->add_option("--rollouts", sa.rollouts, "math rollouts per tree");
    solve->add_option("--threshold", sa.threshold, "correction threshold");
    solve->add_option("--decision", sa.decision, "majority, expert or cged");
    solve->add_flag("--no-sparse", sa.no_sparse, "disable sparse activation");
    solve->add_flag("--no-early", sa.no_early, "disable early termination");
    solve->add_option("--seed", sa.seed, "run seed");
    solve->add_option("--prompt-dir", sa.prompt_dir, "prompt assets directory");

    auto* sim = app.add_subcommand("sim", "seeded scaling-law simulation");
    double sim_p = 0.5;
    std::string sim_n = "1,2,4,8";
    int sim_trials = 10000;
    std::uint64_t sim_seed = 0;
    std::string sim_decision = "cged", sim_out;
    sim->add_option("--p", sim_p, "per-tree success probability");
    sim->add_option("--n", sim_n, "comma-separated tree counts");
    sim->add_option("--trials", sim_trials, "Monte Carlo trials");
    sim->add_option("--seed", sim_seed, "simulation seed");
    sim->add_option("--decision", sim_decision, "decision strategy label");
    sim->add_option("--out", sim_out, "also write a CSV here");

    auto* report = app.add_subcommand("report", "regenerate summaries from results");
    std::string rep_results, rep_out;
    report->add_option("--results", rep_results, "results.jsonl path")->required();
    report->add_option("--out", rep_out, "output directory")->required();

    auto* gen24 = app.add_subcommand("gen24", "emit the stand-in Game24 problem set");
    int gen_count = 95;
    std::uint64_t gen_seed = 0;
    std::string gen_out = "problems_g24.jsonl";
    gen24->add_option("--count", gen_count, "number of problems");
    gen24->add_option("--seed", gen_seed, "sampling seed");
    gen24->add_option("--out", gen_out, "output JSONL path");

    try {
        CLI11_PARSE(app, argc, argv);
        if (run->parsed()) cmd_run(run_config, run_seed, run_backend, run_out, run_quiet);
        if (solve->parsed()) cmd_solve(sa);
        if (sim->parsed()) cmd_sim(sim_p, sim_n, sim_trials, sim_seed, sim_decision, sim_out);
        if (report->parsed()) cmd_report(rep_results, rep_out);
        if (gen24->parsed()) cmd_gen24(gen_count, gen_seed, gen_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

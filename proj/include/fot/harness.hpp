#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fot/backend.hpp"
#include "fot/forest.hpp"
#include "fot/http_backend.hpp"
#include "fot/oracle_backend.hpp"
#include "fot/types.hpp"

namespace fot {

/// One benchmark row. Wall time is kept in memory for live reporting but is
/// never persisted, so identical runs serialize to identical bytes.
struct RunRecord {
    std::string problem_id;
    std::string answer;  // empty when the forest produced nothing
    int correct = 0;
    std::vector<int> activation;                      // per completed tree, launch order
    std::vector<std::uint64_t> per_tree_invocations;  // search-stage calls per completed tree
    std::uint64_t total_invocations = 0;              // all stages, matches backend accounting
    InvocationBreakdown breakdown;
    std::string decision_used;
    bool early_terminated = false;
    bool expert_fallback = false;
    int n_trees = 0;
    std::string error;  // nonempty when the problem failed and was recorded as incorrect
    std::string config_fingerprint;
    double wall_time_s = 0.0;  // in-memory only
};

struct BenchmarkSummary {
    std::vector<RunRecord> records;  // resumed records first, then fresh ones in problem order
    double accuracy = 0.0;
    double mean_invocations = 0.0;
};

struct RunnerOptions {
    std::string results_path;  // append-only JSONL; empty disables persistence
    bool resume = true;        // skip problem ids already present in results_path
    int problem_parallelism = 1;
    TraceSink trace;  // per-problem progress lines
};

/// Stable hex fingerprint of the run configuration (forest settings plus the
/// backend name), used to key summary rows across mixed results files.
std::string config_fingerprint(const ForestConfig& cfg, const std::string& backend_name);

std::string record_to_jsonl(const RunRecord& r);
RunRecord record_from_jsonl(const std::string& line);
std::vector<RunRecord> read_records(const std::string& path);

/// Runs the forest once per problem and grades against the task oracle
/// (Game24: expression check; math: numeric equivalence with ground truth).
/// Per-problem failures become incorrect records with an error note; the run
/// continues. Each problem derives its seed from cfg.seed and its index, so
/// resumed or reordered runs reproduce the same per-problem behavior.
BenchmarkSummary run_benchmark(const std::vector<Problem>& problems, const ForestConfig& cfg,
                               const KnowledgeBase& kb, Backend& backend, const PromptPack& pack,
                               const RunnerOptions& opts = {});

struct ScalingSimConfig {
    double per_tree_success = 0.5;
    std::vector<int> n_trees_sweep{1, 2, 4, 8};
    int trials = 10000;
    DecisionStrategy decision = DecisionStrategy::CGED;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ScalingRow {
    int n = 0;
    double empirical_success = 0.0;
    double expected_success = 0.0;  // 1 - (1-p)^n
};

/// Monte Carlo model of forest scaling: each tree is an independent
/// Bernoulli(p) success and a run succeeds when any tree does, matching
/// early termination over oracle-checkable output. Each trial draws one
/// uniform per tree up to max(n) so every n in the sweep shares the same
/// underlying draws.
std::vector<ScalingRow> simulate_scaling(const ScalingSimConfig& cfg);

/// Writes summary.csv (one row per config fingerprint), records.jsonl, and
/// success_vs_n.csv under out_dir. Throws before writing anything if the
/// directory is unwritable. Identical records produce identical bytes.
void emit_report(const std::vector<RunRecord>& records, const std::string& out_dir);

/// Stand-in evaluation set: enumerates every solvable 4-multiset over 1..13
/// and samples `count` of them under the seed. The published 95-problem list
/// is not available, so this generator is the documented substitute.
std::vector<Problem> generate_game24_set(int count, std::uint64_t seed);

/// One experiment file: sections backend / forest / correction / decision /
/// task, plus output and prompt directories.
struct ExperimentConfig {
    ForestConfig forest;
    TaskKind task = TaskKind::Game24;
    std::string backend_kind = "oracle";  // oracle | scripted | http

    OracleBehavior oracle;        // backend_kind == oracle
    HttpBackendConfig http;       // backend_kind == http
    std::string scripted_replies; // backend_kind == scripted: JSONL of {prompt, replies}

    std::string problems_path;
    std::string kb_path;
    std::string prompt_dir;  // empty defers to FOT_PROMPT_DIR / built-in default
    std::string out_dir = "out";
};

ExperimentConfig load_experiment_config(const std::string& path);

/// Builds the configured backend. Oracle math runs are graded against the
/// problem set itself, so its ground truths seed the oracle's answer table.
std::unique_ptr<Backend> make_backend(const ExperimentConfig& cfg,
                                      const std::vector<Problem>& problems);

}  // namespace fot

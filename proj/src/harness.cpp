#include "fot/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fot/rational.hpp"
#include "fot/tasks.hpp"

namespace fot {

using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace

std::string config_fingerprint(const ForestConfig& cfg, const std::string& backend_name) {
    // json objects serialize with sorted keys, so dump() is canonical.
    json j{
        {"ans_format", cfg.ans_format},
        {"backend", backend_name},
        {"beam_width", cfg.beam_width},
        {"correction_threshold", cfg.correction_threshold},
        {"decision", to_string(cfg.decision)},
        {"early_termination", cfg.early_termination},
        {"gen_temperature", cfg.gen_temperature},
        {"max_correction_rounds", cfg.max_correction_rounds},
        {"max_depth", cfg.max_depth},
        {"max_tokens", cfg.max_tokens},
        {"n_trees", cfg.n_trees},
        {"rollouts", cfg.rollouts},
        {"seed", cfg.seed},
        {"similarity_floor", cfg.similarity_floor},
        {"sparse_activation", cfg.sparse_activation},
        {"ucb_exploration", cfg.ucb_exploration},
    };
    return hex64(fnv1a64(j.dump()));
}

std::string record_to_jsonl(const RunRecord& r) {
    // wall_time_s is deliberately absent: identical runs must serialize to
    // identical bytes.
    json j{
        {"activation", r.activation},
        {"answer", r.answer},
        {"breakdown",
         {{"correction", r.breakdown.correction},
          {"decision", r.breakdown.decision},
          {"generation", r.breakdown.generation},
          {"scoring", r.breakdown.scoring}}},
        {"config_fingerprint", r.config_fingerprint},
        {"correct", r.correct},
        {"decision_used", r.decision_used},
        {"early_terminated", r.early_terminated},
        {"error", r.error},
        {"expert_fallback", r.expert_fallback},
        {"n_trees", r.n_trees},
        {"per_tree_invocations", r.per_tree_invocations},
        {"problem_id", r.problem_id},
        {"total_invocations", r.total_invocations},
    };
    return j.dump();
}

RunRecord record_from_jsonl(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw IngestError(std::string("bad record line: ") + e.what());
    }
    RunRecord r;
    try {
        r.problem_id = j.at("problem_id").get<std::string>();
        r.answer = j.value("answer", std::string());
        r.correct = j.value("correct", 0);
        r.activation = j.value("activation", std::vector<int>{});
        r.per_tree_invocations =
            j.value("per_tree_invocations", std::vector<std::uint64_t>{});
        r.total_invocations = j.value("total_invocations", std::uint64_t{0});
        if (j.contains("breakdown")) {
            const json& b = j.at("breakdown");
            r.breakdown.generation = b.value("generation", std::uint64_t{0});
            r.breakdown.scoring = b.value("scoring", std::uint64_t{0});
            r.breakdown.correction = b.value("correction", std::uint64_t{0});
            r.breakdown.decision = b.value("decision", std::uint64_t{0});
        }
        r.decision_used = j.value("decision_used", std::string());
        r.early_terminated = j.value("early_terminated", false);
        r.expert_fallback = j.value("expert_fallback", false);
        r.n_trees = j.value("n_trees", 0);
        r.error = j.value("error", std::string());
        r.config_fingerprint = j.value("config_fingerprint", std::string());
    } catch (const json::exception& e) {
        throw IngestError(std::string("bad record fields: ") + e.what());
    }
    return r;
}

std::vector<RunRecord> read_records(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IngestError("cannot open results file: " + path);
    std::vector<RunRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_jsonl(line));
        } catch (const IngestError& e) {
            throw IngestError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

namespace {

bool grade_record(const Problem& problem, const std::string& answer,
                  const std::string& ans_format, std::string* error) {
    if (problem.task == TaskKind::Game24) {
        return check_expression_24(answer, parse_numbers24(problem.input));
    }
    if (!problem.ground_truth) {
        if (error) *error = "no ground truth to grade against";
        return false;
    }
    auto got = canonicalize_answer(problem.task, answer, ans_format);
    auto want = canonicalize_answer(problem.task, *problem.ground_truth, ans_format);
    if (!got || !want) return false;
    return numeric_equiv(*got, *want);
}

RunRecord run_one(const Problem& problem, std::size_t problem_index, const ForestConfig& cfg,
                  const KnowledgeBase& kb, Backend& backend, const PromptPack& pack,
                  const std::string& fingerprint, const TraceSink& trace) {
    RunRecord r;
    r.problem_id = problem.id;
    r.n_trees = cfg.n_trees;
    r.decision_used = to_string(cfg.decision);
    r.config_fingerprint = fingerprint;

    ForestConfig pcfg = cfg;
    pcfg.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(problem_index));

    const auto t0 = std::chrono::steady_clock::now();
    try {
        ForestResult fr = run_forest(problem, pcfg, kb, backend, pack, trace);
        for (const TreeOutcome& out : fr.outcomes) {
            r.activation.push_back(out.activation);
            r.per_tree_invocations.push_back(out.invocations);
        }
        r.total_invocations = fr.total_invocations;
        r.breakdown = fr.breakdown;
        r.decision_used = to_string(fr.decision_used);
        r.early_terminated = fr.early_terminated;
        r.expert_fallback = fr.expert_fallback;
        if (fr.final) {
            r.answer = fr.final->answer;
            r.correct = grade_record(problem, r.answer, cfg.ans_format, &r.error) ? 1 : 0;
        } else {
            r.error = "empty result set";
        }
    } catch (const std::exception& e) {
        // A failed problem is an incorrect record, not a failed run.
        r.correct = 0;
        r.error = e.what();
    }
    r.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace

BenchmarkSummary run_benchmark(const std::vector<Problem>& problems, const ForestConfig& cfg,
                               const KnowledgeBase& kb, Backend& backend, const PromptPack& pack,
                               const RunnerOptions& opts) {
    if (problems.empty()) throw ContractViolation("run_benchmark: problems must be nonempty");
    cfg.validate();
    if (opts.problem_parallelism < 1)
        throw ConfigError("problem_parallelism must be >= 1");
    const std::string fingerprint = config_fingerprint(cfg, backend.name());

    BenchmarkSummary summary;
    std::set<std::string> done;
    if (!opts.results_path.empty() && opts.resume &&
        std::filesystem::exists(opts.results_path)) {
        for (RunRecord& r : read_records(opts.results_path))
            if (done.insert(r.problem_id).second) summary.records.push_back(std::move(r));
    }

    std::ofstream sink;
    if (!opts.results_path.empty()) {
        if (auto dir = std::filesystem::path(opts.results_path).parent_path(); !dir.empty())
            std::filesystem::create_directories(dir);
        sink.open(opts.results_path, std::ios::binary | std::ios::app);
        if (!sink) throw std::runtime_error("cannot open results file: " + opts.results_path);
    }

    std::vector<std::size_t> worklist;
    for (std::size_t i = 0; i < problems.size(); ++i)
        if (!done.count(problems[i].id)) worklist.push_back(i);

    std::vector<RunRecord> fresh(worklist.size());
    std::mutex io_mu;  // serializes appends and trace lines
    std::atomic<std::size_t> next{0};

    TraceSink locked_trace;
    if (opts.trace)
        locked_trace = [&](const std::string& line) {
            std::lock_guard<std::mutex> lk(io_mu);
            opts.trace(line);
        };

    auto work = [&]() {
        for (;;) {
            const std::size_t w = next.fetch_add(1);
            if (w >= worklist.size()) break;
            const std::size_t i = worklist[w];
            RunRecord r = run_one(problems[i], i, cfg, kb, backend, pack, fingerprint,
                                  locked_trace);
            {
                std::lock_guard<std::mutex> lk(io_mu);
                if (sink.is_open()) {
                    sink << record_to_jsonl(r) << '\n';
                    sink.flush();  // append-only resume: land each record as it finishes
                }
                if (opts.trace)
                    opts.trace("problem " + r.problem_id + ": correct=" +
                               std::to_string(r.correct) + " invocations=" +
                               std::to_string(r.total_invocations) + " (" +
                               fixed(r.wall_time_s, 2) + "s)");
            }
            fresh[w] = std::move(r);
        }
    };

    const int workers =
        static_cast<int>(std::min<std::size_t>(opts.problem_parallelism, worklist.size()));
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    for (RunRecord& r : fresh) summary.records.push_back(std::move(r));

    if (!summary.records.empty()) {
        double correct = 0.0, calls = 0.0;
        for (const RunRecord& r : summary.records) {
            correct += r.correct;
            calls += static_cast<double>(r.total_invocations);
        }
        summary.accuracy = correct / static_cast<double>(summary.records.size());
        summary.mean_invocations = calls / static_cast<double>(summary.records.size());
    }
    return summary;
}

void ScalingSimConfig::validate() const {
    if (per_tree_success < 0.0 || per_tree_success > 1.0)
        throw ConfigError("per_tree_success must be in [0,1]");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (n_trees_sweep.empty()) throw ConfigError("n_trees_sweep must be nonempty");
    for (int n : n_trees_sweep)
        if (n < 1) throw ConfigError("n_trees_sweep entries must be >= 1");
}

std::vector<ScalingRow> simulate_scaling(const ScalingSimConfig& cfg) {
    cfg.validate();
    const int max_n = *std::max_element(cfg.n_trees_sweep.begin(), cfg.n_trees_sweep.end());
    std::mt19937_64 rng(cfg.seed);

    std::vector<long long> hits(cfg.n_trees_sweep.size(), 0);
    for (int t = 0; t < cfg.trials; ++t) {
        // Fixed draw schedule: one uniform per tree regardless of outcome, so
        // every n shares the same underlying tree successes.
        int first_success = max_n;
        for (int i = 0; i < max_n; ++i) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            if (u < cfg.per_tree_success && i < first_success) first_success = i;
        }
        for (std::size_t k = 0; k < cfg.n_trees_sweep.size(); ++k)
            if (first_success < cfg.n_trees_sweep[k]) ++hits[k];
    }

    std::vector<ScalingRow> rows;
    rows.reserve(cfg.n_trees_sweep.size());
    for (std::size_t k = 0; k < cfg.n_trees_sweep.size(); ++k) {
        ScalingRow row;
        row.n = cfg.n_trees_sweep[k];
        row.empirical_success =
            static_cast<double>(hits[k]) / static_cast<double>(cfg.trials);
        row.expected_success = 1.0 - std::pow(1.0 - cfg.per_tree_success, row.n);
        rows.push_back(row);
    }
    return rows;
}

void emit_report(const std::vector<RunRecord>& records, const std::string& out_dir) {
    if (records.empty()) throw ContractViolation("emit_report: records must be nonempty");

    struct Agg {
        long long count = 0;
        double correct = 0.0;
        double calls = 0.0;
    };
    std::map<std::string, Agg> by_config;  // sorted keys keep output stable
    std::map<int, Agg> by_n;
    std::string jsonl;
    for (const RunRecord& r : records) {
        Agg& c = by_config[r.config_fingerprint];
        ++c.count;
        c.correct += r.correct;
        c.calls += static_cast<double>(r.total_invocations);
        Agg& n = by_n[r.n_trees];
        ++n.count;
        n.correct += r.correct;
        jsonl += record_to_jsonl(r);
        jsonl += '\n';
    }

    std::string summary = "config_fingerprint,records,accuracy,mean_invocations\n";
    for (const auto& [fp, a] : by_config)
        summary += fp + "," + std::to_string(a.count) + "," +
                   fixed(a.correct / a.count, 6) + "," + fixed(a.calls / a.count, 4) + "\n";

    std::string curve = "n_trees,records,success_rate\n";
    for (const auto& [n, a] : by_n)
        curve += std::to_string(n) + "," + std::to_string(a.count) + "," +
                 fixed(a.correct / a.count, 6) + "\n";

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    const auto dir = std::filesystem::path(out_dir);
    std::ofstream fs_summary(dir / "summary.csv", std::ios::binary | std::ios::trunc);
    std::ofstream fs_curve(dir / "success_vs_n.csv", std::ios::binary | std::ios::trunc);
    std::ofstream fs_jsonl(dir / "records.jsonl", std::ios::binary | std::ios::trunc);
    // All streams are checked before the first byte lands, so an unwritable
    // directory never leaves a partial summary behind.
    if (!fs_summary || !fs_curve || !fs_jsonl)
        throw std::runtime_error("cannot write report files under: " + out_dir);
    fs_summary << summary;
    fs_curve << curve;
    fs_jsonl << jsonl;
    if (!fs_summary.good() || !fs_curve.good() || !fs_jsonl.good())
        throw std::runtime_error("short write emitting report under: " + out_dir);
}

std::vector<Problem> generate_game24_set(int count, std::uint64_t seed) {
    if (count < 1) throw ConfigError("gen24 count must be >= 1");
    std::vector<std::string> pool;
    for (long long a = 1; a <= 13; ++a)
        for (long long b = a; b <= 13; ++b)
            for (long long c = b; c <= 13; ++c)
                for (long long d = c; d <= 13; ++d)
                    if (solvable24({a, b, c, d}))
                        pool.push_back(std::to_string(a) + " " + std::to_string(b) + " " +
                                       std::to_string(c) + " " + std::to_string(d));
    if (static_cast<std::size_t>(count) > pool.size())
        throw ConfigError("gen24 count exceeds the " + std::to_string(pool.size()) +
                          " solvable multisets over 1..13");

    std::mt19937_64 rng(seed);
    for (int i = 0; i < count; ++i) {
        // Partial Fisher-Yates; modulo bias is irrelevant for set selection.
        const std::size_t j = i + rng() % (pool.size() - i);
        std::swap(pool[i], pool[j]);
    }

    std::vector<Problem> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Problem p;
        char id[16];
        std::snprintf(id, sizeof(id), "g24-%03d", i + 1);
        p.id = id;
        p.task = TaskKind::Game24;
        p.input = pool[i];
        p.validate();
        out.push_back(std::move(p));
    }
    return out;
}

namespace {

void warn_unknown_keys(const json& section, const std::string& name,
                       std::initializer_list<const char*> allowed) {
    for (const auto& item : section.items()) {
        bool known = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                known = true;
                break;
            }
        if (!known) warn("config: unknown key '" + name + "." + item.key() + "'");
    }
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IngestError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(f, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
    warn_unknown_keys(j, "(top)", {"backend", "forest", "correction", "decision", "task",
                                   "out_dir", "prompt_dir"});

    ExperimentConfig cfg;
    try {
        const json backend = j.value("backend", json::object());
        warn_unknown_keys(backend, "backend",
                          {"kind", "seed", "success", "propose_success", "value_success",
                           "critic_success", "refine_success", "generate_success",
                           "expert_success", "max_reply_steps", "base_url", "model",
                           "api_key_env", "max_retries", "backoff_ms", "scripted_replies"});
        cfg.backend_kind = backend.value("kind", std::string("oracle"));
        if (cfg.backend_kind != "oracle" && cfg.backend_kind != "scripted" &&
            cfg.backend_kind != "http")
            throw ConfigError("backend.kind must be oracle, scripted or http");
        const std::uint64_t oseed = backend.value("seed", std::uint64_t{0});
        cfg.oracle = OracleBehavior::uniform(backend.value("success", 1.0), oseed);
        cfg.oracle.propose_success =
            backend.value("propose_success", cfg.oracle.propose_success);
        cfg.oracle.value_success = backend.value("value_success", cfg.oracle.value_success);
        cfg.oracle.critic_success = backend.value("critic_success", cfg.oracle.critic_success);
        cfg.oracle.refine_success = backend.value("refine_success", cfg.oracle.refine_success);
        cfg.oracle.generate_success =
            backend.value("generate_success", cfg.oracle.generate_success);
        cfg.oracle.expert_success = backend.value("expert_success", cfg.oracle.expert_success);
        cfg.oracle.max_reply_steps =
            backend.value("max_reply_steps", cfg.oracle.max_reply_steps);
        cfg.http.base_url = backend.value("base_url", cfg.http.base_url);
        cfg.http.model = backend.value("model", cfg.http.model);
        cfg.http.api_key_env = backend.value("api_key_env", cfg.http.api_key_env);
        cfg.http.max_retries = backend.value("max_retries", cfg.http.max_retries);
        cfg.http.backoff_ms = backend.value("backoff_ms", cfg.http.backoff_ms);
        cfg.scripted_replies = backend.value("scripted_replies", std::string());

        const json forest = j.value("forest", json::object());
        warn_unknown_keys(forest, "forest",
                          {"n_trees", "beam_width", "max_depth", "rollouts",
                           "early_termination", "sparse_activation", "seed", "parallelism",
                           "similarity_floor", "ucb_exploration", "gen_temperature",
                           "max_tokens"});
        cfg.forest.n_trees = forest.value("n_trees", cfg.forest.n_trees);
        cfg.forest.beam_width = forest.value("beam_width", cfg.forest.beam_width);
        cfg.forest.max_depth = forest.value("max_depth", cfg.forest.max_depth);
        cfg.forest.rollouts = forest.value("rollouts", cfg.forest.rollouts);
        cfg.forest.early_termination =
            forest.value("early_termination", cfg.forest.early_termination);
        cfg.forest.sparse_activation =
            forest.value("sparse_activation", cfg.forest.sparse_activation);
        cfg.forest.seed = forest.value("seed", cfg.forest.seed);
        cfg.forest.parallelism = forest.value("parallelism", cfg.forest.parallelism);
        cfg.forest.similarity_floor =
            forest.value("similarity_floor", cfg.forest.similarity_floor);
        cfg.forest.ucb_exploration =
            forest.value("ucb_exploration", cfg.forest.ucb_exploration);
        cfg.forest.gen_temperature =
            forest.value("gen_temperature", cfg.forest.gen_temperature);
        cfg.forest.max_tokens = forest.value("max_tokens", cfg.forest.max_tokens);

        const json correction = j.value("correction", json::object());
        warn_unknown_keys(correction, "correction", {"threshold", "max_rounds"});
        cfg.forest.correction_threshold =
            correction.value("threshold", cfg.forest.correction_threshold);
        cfg.forest.max_correction_rounds =
            correction.value("max_rounds", cfg.forest.max_correction_rounds);

        const json decision = j.value("decision", json::object());
        warn_unknown_keys(decision, "decision", {"strategy", "ans_format"});
        if (decision.contains("strategy")) {
            const auto name = decision.at("strategy").get<std::string>();
            const auto d = decision_from_string(name);
            if (!d) throw ConfigError("unknown decision strategy: " + name);
            cfg.forest.decision = *d;
        }
        cfg.forest.ans_format = decision.value("ans_format", cfg.forest.ans_format);

        const json task = j.value("task", json::object());
        warn_unknown_keys(task, "task", {"kind", "problems", "kb"});
        if (task.contains("kind")) {
            const auto name = task.at("kind").get<std::string>();
            const auto k = task_kind_from_string(name);
            if (!k) throw ConfigError("unknown task kind: " + name);
            cfg.task = *k;
        }
        cfg.problems_path = task.value("problems", std::string());
        cfg.kb_path = task.value("kb", std::string());

        cfg.out_dir = j.value("out_dir", cfg.out_dir);
        cfg.prompt_dir = j.value("prompt_dir", std::string());
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }

    cfg.forest.validate();
    cfg.oracle.validate();
    cfg.oracle.ans_format = cfg.forest.ans_format;
    return cfg;
}

std::unique_ptr<Backend> make_backend(const ExperimentConfig& cfg,
                                      const std::vector<Problem>& problems) {
    if (cfg.backend_kind == "oracle") {
        OracleBehavior b = cfg.oracle;
        b.ans_format = cfg.forest.ans_format;
        if (cfg.task == TaskKind::MathWord)
            for (const Problem& p : problems)
                if (p.ground_truth) b.math_truth[p.input] = *p.ground_truth;
        return make_oracle_backend(cfg.task, b);
    }
    if (cfg.backend_kind == "scripted") {
        auto sb = std::make_unique<ScriptedBackend>();
        if (!cfg.scripted_replies.empty()) {
            std::ifstream f(cfg.scripted_replies, std::ios::binary);
            if (!f) throw IngestError("cannot open scripted replies: " + cfg.scripted_replies);
            std::string line;
            std::size_t lineno = 0;
            while (std::getline(f, line)) {
                ++lineno;
                if (line.empty()) continue;
                try {
                    const json e = json::parse(line);
                    const auto prompt = e.at("prompt").get<std::string>();
                    for (const auto& reply : e.at("replies"))
                        sb->add_reply(prompt, reply.get<std::string>());
                } catch (const json::exception& ex) {
                    throw IngestError(cfg.scripted_replies + ":" + std::to_string(lineno) +
                                      ": " + ex.what());
                }
            }
        }
        return sb;
    }
    HttpBackendConfig hc = cfg.http;
    hc.validate();
    return std::make_unique<HttpBackend>(hc);
}

}  // namespace fot

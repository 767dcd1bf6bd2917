#include "fot/forest.hpp"

#include <atomic>
#include <cctype>
#include <cstdio>
#include <mutex>
#include <set>
#include <thread>

#include "fot/correction.hpp"
#include "fot/decision.hpp"
#include "fot/tasks.hpp"
#include "fot/trees.hpp"

namespace fot {

namespace {

std::set<std::string> word_tokens(const std::string& s) {
    std::set<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            out.insert(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.insert(cur);
    return out;
}

}  // namespace

double sim_similarity(const std::string& a, const std::string& b) {
    auto ta = word_tokens(a);
    auto tb = word_tokens(b);
    if (ta.empty() && tb.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& t : ta) inter += tb.count(t);
    std::size_t uni = ta.size() + tb.size() - inter;
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<std::size_t> retrieve_top1(const std::string& x, const KnowledgeBase& kb,
                                         double floor) {
    std::optional<std::size_t> best;
    double best_sim = -1.0;
    for (std::size_t i = 0; i < kb.entries.size(); ++i) {
        double s = sim_similarity(x, kb.entries[i].question);
        if (s > best_sim) {
            best_sim = s;
            best = i;
        }
    }
    if (!best || best_sim < floor) return std::nullopt;
    return best;
}

AugmentedInput augment_input(const std::string& x, const KnowledgeBase& kb, int tree_variant,
                             double similarity_floor) {
    if (tree_variant < 0) throw ContractViolation("tree_variant must be >= 0");
    AugmentedInput a;
    a.original = x;
    a.tree_variant = tree_variant;
    a.retrieved_index = retrieve_top1(x, kb, similarity_floor);
    if (a.retrieved_index) {
        a.exemplar = kb.entries[*a.retrieved_index].worked_solution;
        a.augmented = a.exemplar + "\n\n" + x;
    } else {
        a.augmented = x;
    }
    return a;
}

const std::vector<std::string>& tree_preambles() {
    static const std::vector<std::string> kPreambles{
        "",
        "Solve this step by step, stating each intermediate result explicitly.",
        "Verify each step before proceeding to the next one.",
        "Consider more than one approach before committing to an answer.",
    };
    return kPreambles;
}

namespace {

struct TreeSlot {
    bool ran = false;
    TreeOutcome outcome;
    std::optional<CandidateSolution> corrected;
    std::uint64_t tree_total = 0;  // engine plus correction calls
    std::uint64_t correction_calls = 0;
};

}  // namespace

ForestResult run_forest(const Problem& problem, const ForestConfig& cfg,
                        const KnowledgeBase& kb, Backend& backend, const PromptPack& pack,
                        TraceSink trace) {
    cfg.validate();
    problem.validate();
    const bool game24 = problem.task == TaskKind::Game24;
    const bool early_term = cfg.early_termination && game24;
    std::vector<long long> nums;
    if (game24) nums = parse_numbers24(problem.input);

    CorrectionConfig ccfg;
    ccfg.threshold = cfg.correction_threshold;
    ccfg.max_correction_rounds = cfg.max_correction_rounds;
    const RuleCorrector rules = make_game24_rule_corrector();

    auto verified = [&](const CandidateSolution& c) {
        return game24 && c.score >= 1.0 && check_expression_24(c.answer, nums);
    };

    std::atomic<bool> stop{false};
    std::atomic<int> next{0};
    std::vector<TreeSlot> slots(static_cast<std::size_t>(cfg.n_trees));
    std::mutex trace_mu;
    TraceSink locked_trace;
    if (trace) {
        locked_trace = [&](const std::string& m) {
            std::lock_guard<std::mutex> lock(trace_mu);
            trace(m);
        };
    }

    std::mutex err_mu;
    std::exception_ptr first_error;

    auto worker = [&] {
        try {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= cfg.n_trees) return;
                if (stop.load()) return;
                TreeSlot& slot = slots[static_cast<std::size_t>(i)];
                CountingBackend meter(backend);
                AugmentedInput aug =
                    augment_input(problem.input, kb, i + 1, cfg.similarity_floor);

                TreeRunContext ctx;
                ctx.pack = &pack;
                ctx.tree_index = i + 1;
                ctx.preamble = tree_preambles()[static_cast<std::size_t>(i) %
                                                tree_preambles().size()];
                ctx.exemplar = aug.exemplar;
                ctx.sparse_activation = cfg.sparse_activation;
                ctx.early_termination = cfg.early_termination;
                ctx.gen_temperature = cfg.gen_temperature;
                ctx.max_tokens = cfg.max_tokens;
                ctx.ans_format = cfg.ans_format;
                ctx.cancelled = [&] { return stop.load(); };
                ctx.trace = locked_trace;

                TreeEngineConfig tcfg;
                tcfg.kind = game24 ? TreeEngineKind::ToT : TreeEngineKind::MCTSr;
                tcfg.beam_width = cfg.beam_width;
                tcfg.max_depth = cfg.max_depth;
                tcfg.rollouts = cfg.rollouts;
                tcfg.ucb_exploration = cfg.ucb_exploration;
                tcfg.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(i + 1));

                TreeOutcome out = game24 ? tot_search(problem, tcfg, meter, ctx)
                                         : mctsr_search(problem, tcfg, meter, ctx);
                if (out.cancelled) {
                    // excluded from outcomes, but its backend calls are real
                    // and must stay in the totals
                    slot.outcome = std::move(out);
                    slot.tree_total = meter.stats().invocations;
                    continue;
                }
                std::uint64_t engine_calls = meter.stats().invocations;
                if (out.candidate) {
                    slot.corrected = self_correct(*out.candidate, problem.input, ccfg,
                                                  game24 ? &rules : nullptr, kb, meter, pack,
                                                  problem.task, cfg.ans_format);
                }
                slot.correction_calls = meter.stats().invocations - engine_calls;
                if (locked_trace && out.candidate && slot.corrected) {
                    char line[160];
                    std::snprintf(line, sizeof(line),
                                  "[tree %d] correction: score %.2f -> %.2f (threshold %.2f, "
                                  "%llu calls)",
                                  ctx.tree_index, out.candidate->score, slot.corrected->score,
                                  ccfg.threshold,
                                  static_cast<unsigned long long>(slot.correction_calls));
                    locked_trace(line);
                }
                slot.tree_total = meter.stats().invocations;
                slot.outcome = std::move(out);
                slot.ran = true;
                if (early_term && slot.corrected && verified(*slot.corrected)) {
                    stop.store(true);
                }
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(err_mu);
            if (!first_error) first_error = std::current_exception();
        }
    };

    int workers = std::max(1, std::min(cfg.parallelism, cfg.n_trees));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    ForestResult R;
    std::vector<std::optional<CandidateSolution>> corrected;
    for (auto& slot : slots) {
        R.breakdown.generation += slot.outcome.gen_invocations;
        R.breakdown.scoring += slot.outcome.score_invocations;
        R.breakdown.correction += slot.correction_calls;
        R.total_invocations += slot.tree_total;
        if (!slot.ran) continue;
        R.outcomes.push_back(std::move(slot.outcome));
        corrected.push_back(std::move(slot.corrected));
    }
    R.result_set = merge_result_set(R.outcomes, corrected);
    R.decision_used = cfg.decision;
    R.early_terminated = stop.load();

    if (early_term) {
        for (const auto& c : R.result_set) {
            if (verified(c)) {
                R.final = c;
                R.early_terminated = true;
                if (locked_trace)
                    locked_trace("[forest] decision: early termination kept the verified "
                                 "candidate from tree " +
                                 std::to_string(c.tree_index));
                break;
            }
        }
    }
    if (!R.final && !R.result_set.empty()) {
        DecisionContext dctx;
        dctx.pack = &pack;
        dctx.task = problem.task;
        dctx.ans_format = cfg.ans_format;
        dctx.seed = mix_seed(cfg.seed, 0xDEC15104ULL);
        CountingBackend dec_meter(backend);
        DecisionResult dr = decide(cfg.decision, problem.input, R.result_set, dec_meter, dctx);
        R.final = dr.final;
        R.expert_fallback = dr.expert_fallback;
        R.breakdown.decision = dec_meter.stats().invocations;
        R.total_invocations += dec_meter.stats().invocations;
        if (locked_trace)
            locked_trace("[forest] decision: " + std::string(to_string(cfg.decision)) +
                         " over " + std::to_string(R.result_set.size()) + " answers -> " +
                         (R.final ? R.final->answer : std::string("(none)")) + " (" +
                         std::to_string(dr.expert_calls) + " expert calls)");
    }
    if (locked_trace) {
        locked_trace("[forest] " + std::to_string(R.result_set.size()) + " active of " +
                     std::to_string(R.outcomes.size()) + " run, final " +
                     (R.final ? R.final->answer : std::string("(none)")) + ", " +
                     std::to_string(R.total_invocations) + " backend calls");
    }
    return R;
}

}  // namespace fot

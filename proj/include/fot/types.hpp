#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fot/rational.hpp"

namespace fot {

// ── errors ──────────────────────────────────────────────────────────

/// Caller broke an API precondition (mismatched lengths, invalid config).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

/// A data file could not be loaded (message names the file/line).
struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-fatal diagnostics (unrecognized value label, kb dedup, ...) go through
/// here; tests may silence or capture them.
using WarnHandler = std::function<void(const std::string&)>;
void set_warn_handler(WarnHandler handler);  // empty handler restores stderr
void warn(const std::string& message);

// ── domain types ────────────────────────────────────────────────────

enum class TaskKind { Game24, MathWord };

const char* to_string(TaskKind k);
std::optional<TaskKind> task_kind_from_string(const std::string& s);

/// One task instance. For Game24 the input must hold exactly four positive
/// integers; validate() enforces that.
struct Problem {
    std::string id;
    TaskKind task = TaskKind::Game24;
    std::string input;
    std::optional<std::string> ground_truth;

    void validate() const;  // throws ContractViolation
};

/// Structured answer payload: an arithmetic expression for Game24, an exact
/// rational for math word problems.
using Payload = std::variant<std::monostate, std::string, Rational>;

struct CandidateSolution {
    std::string answer;  // canonical answer text; voting equality is string equality
    Payload payload;
    double score = 0.0;  // in [0,1]
    int tree_index = 1;
    std::vector<std::string> trace;
    bool degraded = false;  // a backend failure cut self-correction short
};

/// Per-depth bookkeeping of a tree layer: everything the model proposed, the
/// subset that survived validity extraction, and the beam that was kept.
/// Invariant: kept ⊆ valid ⊆ generated (as line texts), |kept| ≤ beam width.
struct LayerRecord {
    int depth = 0;
    std::vector<std::string> generated;
    std::vector<std::string> valid;
    std::vector<std::string> kept;
};

struct TreeOutcome {
    int tree_index = 1;
    std::optional<CandidateSolution> candidate;
    int activation = 0;  // 1 iff every layer produced a valid step
    std::vector<LayerRecord> layers;
    std::uint64_t invocations = 0;
    // diagnostic split of invocations (generation vs valuing/scoring calls)
    std::uint64_t gen_invocations = 0;
    std::uint64_t score_invocations = 0;
    bool cancelled = false;      // stopped by the forest's early-termination signal
    std::string error_note;      // nonempty when a backend error cut the search short
};

enum class DecisionStrategy { MajorityVote, MathExpert, CGED };

const char* to_string(DecisionStrategy d);
std::optional<DecisionStrategy> decision_from_string(const std::string& s);

struct ForestConfig {
    int n_trees = 4;
    int beam_width = 2;
    int max_depth = 3;
    int rollouts = 4;  // MCTSr budget per tree
    double correction_threshold = 0.5;
    int max_correction_rounds = 2;
    DecisionStrategy decision = DecisionStrategy::CGED;
    bool early_termination = true;
    bool sparse_activation = true;
    std::uint64_t seed = 0;

    // orchestration knobs beyond the core algorithm
    int parallelism = 1;
    double similarity_floor = 0.2;
    double ucb_exploration = 1.41;
    double gen_temperature = 0.95;
    int max_tokens = 512;
    std::string ans_format = "The answer is";

    void validate() const;  // throws ConfigError
};

/// Breakdown of backend calls so either "LLM invoked" counting convention
/// (with or without scoring calls) is recoverable from a run.
struct InvocationBreakdown {
    std::uint64_t generation = 0;
    std::uint64_t scoring = 0;
    std::uint64_t correction = 0;
    std::uint64_t decision = 0;
};

struct ForestResult {
    std::vector<CandidateSolution> result_set;  // corrected candidates of active trees
    std::optional<CandidateSolution> final;     // empty = no active tree produced an answer
    std::vector<TreeOutcome> outcomes;
    std::uint64_t total_invocations = 0;
    DecisionStrategy decision_used = DecisionStrategy::CGED;
    bool early_terminated = false;
    bool expert_fallback = false;
    InvocationBreakdown breakdown;
};

struct KnowledgeBaseEntry {
    std::string question;
    std::string worked_solution;
};

struct KnowledgeBase {
    std::vector<KnowledgeBaseEntry> entries;
};

// ── operations ──────────────────────────────────────────────────────

/// Result-set merge: keeps corrected[i] exactly when outcomes[i] is active,
/// ordered by ascending tree index regardless of completion order.
/// Throws ContractViolation on length mismatch or an active outcome without
/// a corrected candidate.
std::vector<CandidateSolution> merge_result_set(
    const std::vector<TreeOutcome>& outcomes,
    const std::vector<std::optional<CandidateSolution>>& corrected);

}  // namespace fot

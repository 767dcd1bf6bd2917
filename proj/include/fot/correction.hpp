#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fot/backend.hpp"
#include "fot/trees.hpp"
#include "fot/types.hpp"

namespace fot {

enum class ScoringSource { Critic, TokenConfidence };

struct CorrectionConfig {
    double threshold = 0.5;
    int max_correction_rounds = 2;  // safety cap, not a schedule
    ScoringSource scoring_source = ScoringSource::Critic;

    void validate() const;
};

/// Task-specific check-and-fix over a candidate's trace. Pure: never calls
/// a backend.
struct RuleCorrector {
    TaskKind task = TaskKind::Game24;
    std::function<CandidateSolution(const CandidateSolution&, const std::string& x)> fix;
};

struct RuleCheckResult {
    bool valid = false;
    std::optional<std::size_t> first_violation;  // 1-based step index
};

/// Replays a step trace against the input multiset: every step must consume
/// two live numbers and produce their exact result, and the last live number
/// must be 24.
RuleCheckResult game24_rule_check(const std::vector<ParsedStep>& trace,
                                  const std::vector<long long>& input_numbers);

/// Same replay over raw "a op b = c" trace lines as carried by a candidate.
RuleCheckResult game24_rule_check_lines(const std::vector<std::string>& trace_lines,
                                        const std::vector<long long>& input_numbers);

/// The Game of 24 corrector: replays the trace, recomputes each step's
/// produced value (operands are trusted when drawn from the live multiset),
/// rebuilds the expression, and verifies it. A repaired-and-verified
/// candidate scores 1.0; an unrepairable one keeps its answer with score 0
/// so activation bookkeeping stays intact.
RuleCorrector make_game24_rule_corrector();

/// Threshold-gated self-correction. score >= threshold returns the candidate
/// unchanged with zero backend calls. Below threshold, a rule corrector
/// handles it purely when present; otherwise the refine prompt regenerates
/// the answer (conditioned on the top-1 knowledge-base retrieval), re-scores
/// it, and repeats up to max_correction_rounds, returning the best-scoring
/// version seen. Backend failure mid-correction returns the best so far
/// with degraded set.
CandidateSolution self_correct(const CandidateSolution& candidate, const std::string& x,
                               const CorrectionConfig& cfg, const RuleCorrector* rules,
                               const KnowledgeBase& kb, Backend& backend,
                               const PromptPack& pack, TaskKind task,
                               const std::string& ans_format = "The answer is");

}  // namespace fot

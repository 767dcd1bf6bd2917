#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fot/backend.hpp"
#include "fot/types.hpp"

namespace fot {

/// Decision over an empty result set.
class NoAnswerError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Vote tally over canonical answer forms. Candidates whose answer fails
/// canonicalization vote under their raw answer text, so counts always sum
/// to the candidate count.
struct Ballot {
    std::vector<CandidateSolution> candidates;
    std::map<std::string, int> counts;
    std::optional<std::string> winner;  // unset when the top count is tied
    bool tied = false;
    int top_count = 0;
    std::vector<std::string> order;  // distinct canonicals, first-appearance order
};

struct DecisionContext {
    const PromptPack* pack = nullptr;
    TaskKind task = TaskKind::Game24;
    std::string ans_format = "The answer is";
    std::optional<std::uint64_t> seed;
};

struct DecisionResult {
    CandidateSolution final;
    std::uint64_t expert_calls = 0;
    bool expert_fallback = false;  // expert reply matched no listed answer
};

Ballot build_ballot(const std::vector<CandidateSolution>& candidates, TaskKind task,
                    const std::string& ans_format);

/// Highest-count canonical answer; ties go to the lowest tree_index among
/// candidates holding a tied answer. Throws NoAnswerError on empty input.
DecisionResult majority_vote(const std::vector<CandidateSolution>& candidates,
                             const DecisionContext& ctx);

/// One expert completion choosing among the deduplicated answers (with vote
/// counts attached). A single distinct answer returns without any call; an
/// unmatched reply falls back to majority_vote with expert_fallback set.
DecisionResult math_expert(const std::string& question,
                           const std::vector<CandidateSolution>& candidates, Backend& backend,
                           const DecisionContext& ctx);

/// Consensus-guided expert decision: a strict majority (> half of the
/// candidates) wins with zero backend calls; otherwise exactly one expert
/// call adjudicates.
DecisionResult cged(const std::string& question,
                    const std::vector<CandidateSolution>& candidates, Backend& backend,
                    const DecisionContext& ctx);

DecisionResult decide(DecisionStrategy strategy, const std::string& question,
                      const std::vector<CandidateSolution>& candidates, Backend& backend,
                      const DecisionContext& ctx);

}  // namespace fot

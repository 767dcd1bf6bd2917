#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fot/backend.hpp"
#include "fot/prompts.hpp"
#include "fot/rational.hpp"
#include "fot/types.hpp"

namespace fot {

enum class TreeEngineKind { ToT, MCTSr };

struct TreeEngineConfig {
    TreeEngineKind kind = TreeEngineKind::ToT;
    int beam_width = 2;  // ToT beam; doubles as the MCTSr expansion width
    int max_depth = 3;
    int rollouts = 4;
    double ucb_exploration = 1.41;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class ValueLabel { Sure, Likely, Impossible, Unrated };
const char* to_string(ValueLabel v);

/// MCTSr node. `state` holds the full answer text of this refinement.
struct ThoughtNode {
    std::string state;
    int depth = 0;
    ValueLabel value_label = ValueLabel::Unrated;
    int visits = 0;
    double total_reward = 0.0;
    ThoughtNode* parent = nullptr;
    std::vector<std::unique_ptr<ThoughtNode>> children;
};

/// One accepted proposal line: two live numbers combined into one.
struct ParsedStep {
    std::string expression;          // normalized "a op b = c"
    std::string raw_line;            // the reply line as generated
    Rational lhs, rhs, produced;
    char op = '+';
    std::vector<Rational> remaining;  // parent remaining after the step, sorted
};

/// Accepts lines of the form "a op b = c (left: ...)" whose operands are
/// drawn from parent_remaining and whose arithmetic is exact; everything
/// else is dropped. The "(left: ...)" claim is advisory; the remaining
/// multiset is recomputed from the parent. Duplicate normalized steps keep
/// the first occurrence. An unparseable reply yields an empty list.
std::vector<ParsedStep> parse_proposal(const std::string& reply,
                                       const std::vector<Rational>& parent_remaining);

/// 1 iff layers is nonempty and every layer has at least one valid step.
int activation_indicator(const std::vector<LayerRecord>& layers);

/// Per-run knobs a tree engine needs beyond its own config: prompt assets,
/// the forest's diversification texts, flags, and the cancellation signal
/// checked between backend calls.
struct TreeRunContext {
    const PromptPack* pack = nullptr;
    int tree_index = 1;
    std::string preamble;   // per-tree variant text, possibly empty
    std::string exemplar;   // retrieved worked-solution block, possibly empty
    bool sparse_activation = true;
    bool early_termination = true;
    double gen_temperature = 0.95;
    int max_tokens = 512;
    std::string ans_format = "The answer is";
    std::function<bool()> cancelled;                 // may be empty
    std::function<void(const std::string&)> trace;   // may be empty
};

/// One value-prompt call mapping the reply's final keyword to a label;
/// unrecognized replies default to Likely with a warning.
ValueLabel value_state(const std::string& remaining_numbers, Backend& backend,
                       const TreeRunContext& ctx, std::uint64_t seed);

/// Layered beam search for Game of 24: three combining steps, exact-parse
/// validation at every layer, value labels ranking Sure > Likely >
/// Impossible, and an exact 24-check at the last layer. With sparse
/// activation on, Impossible nodes are pruned (never expanded); with it off,
/// labels are still collected but all valid steps compete in generation
/// order. Backend errors end the search with activation 0 and partial
/// layers recorded in error_note.
TreeOutcome tot_search(const Problem& problem, const TreeEngineConfig& cfg, Backend& backend,
                       const TreeRunContext& ctx);

/// Rollout search for math problems: a zero-shot root answer, then per
/// rollout select (unvisited children first, then UCB1), refine, score with
/// the critic, and backpropagate. The candidate is the highest-reward
/// answer that parsed to a canonical number; activation is 1 iff any answer
/// parsed.
TreeOutcome mctsr_search(const Problem& problem, const TreeEngineConfig& cfg, Backend& backend,
                         const TreeRunContext& ctx);

}  // namespace fot

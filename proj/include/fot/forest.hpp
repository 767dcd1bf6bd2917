#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fot/backend.hpp"
#include "fot/types.hpp"

namespace fot {

/// Jaccard similarity of lowercase word-token sets; empty vs empty is 0.
double sim_similarity(const std::string& a, const std::string& b);

/// Index of the most similar knowledge-base question at or above the floor;
/// ties go to the lowest index.
std::optional<std::size_t> retrieve_top1(const std::string& x, const KnowledgeBase& kb,
                                         double floor);

struct AugmentedInput {
    std::string original;
    std::optional<std::size_t> retrieved_index;
    std::string exemplar;   // retrieved worked solution, empty when nothing cleared the floor
    std::string augmented;  // exemplar ⊕ separator ⊕ original; == original when no retrieval
    int tree_variant = 1;
};

AugmentedInput augment_input(const std::string& x, const KnowledgeBase& kb, int tree_variant,
                             double similarity_floor = 0.2);

/// The rotating per-tree preamble variants; variant i uses entry (i-1) mod
/// size, and entry 0 is empty so tree 1 runs the plain pipeline.
const std::vector<std::string>& tree_preambles();

using TraceSink = std::function<void(const std::string&)>;

/// Runs n trees over the (augmented) input, self-corrects each candidate,
/// filters by activation into the result set, and applies the decision
/// strategy. With early termination on a Game24 run, tree launching stops
/// once an oracle-verified candidate exists and that candidate is final.
/// Trees cancelled mid-flight are excluded from outcomes.
ForestResult run_forest(const Problem& problem, const ForestConfig& cfg,
                        const KnowledgeBase& kb, Backend& backend, const PromptPack& pack,
                        TraceSink trace = {});

}  // namespace fot

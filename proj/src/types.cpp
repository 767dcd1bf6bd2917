#include "fot/types.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>
#include <sstream>

namespace fot {

namespace {
std::mutex g_warn_mutex;
WarnHandler g_warn_handler;
}  // namespace

void set_warn_handler(WarnHandler handler) {
    std::lock_guard<std::mutex> lock(g_warn_mutex);
    g_warn_handler = std::move(handler);
}

void warn(const std::string& message) {
    std::lock_guard<std::mutex> lock(g_warn_mutex);
    if (g_warn_handler) {
        g_warn_handler(message);
    } else {
        std::fprintf(stderr, "[fot] warn: %s\n", message.c_str());
    }
}

const char* to_string(TaskKind k) {
    switch (k) {
        case TaskKind::Game24: return "game24";
        case TaskKind::MathWord: return "math";
    }
    return "unknown";
}

std::optional<TaskKind> task_kind_from_string(const std::string& s) {
    if (s == "game24") return TaskKind::Game24;
    if (s == "math" || s == "mathword") return TaskKind::MathWord;
    return std::nullopt;
}

const char* to_string(DecisionStrategy d) {
    switch (d) {
        case DecisionStrategy::MajorityVote: return "majority_vote";
        case DecisionStrategy::MathExpert: return "math_expert";
        case DecisionStrategy::CGED: return "cged";
    }
    return "unknown";
}

std::optional<DecisionStrategy> decision_from_string(const std::string& s) {
    if (s == "majority_vote" || s == "majority") return DecisionStrategy::MajorityVote;
    if (s == "math_expert" || s == "expert") return DecisionStrategy::MathExpert;
    if (s == "cged") return DecisionStrategy::CGED;
    return std::nullopt;
}

void Problem::validate() const {
    if (id.empty()) throw ContractViolation("Problem.id must be nonempty");
    if (input.empty()) throw ContractViolation("Problem.input must be nonempty");
    if (task == TaskKind::Game24) {
        std::istringstream is(input);
        std::vector<long long> nums;
        long long v = 0;
        while (is >> v) nums.push_back(v);
        if (!is.eof() || nums.size() != 4 ||
            std::any_of(nums.begin(), nums.end(), [](long long n) { return n <= 0; }))
            throw ContractViolation("Game24 input must be four positive integers: '" + input + "'");
    }
}

void ForestConfig::validate() const {
    if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
    if (beam_width < 1) throw ConfigError("beam_width must be >= 1");
    if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
    if (rollouts < 0) throw ConfigError("rollouts must be >= 0");
    if (correction_threshold < 0.0 || correction_threshold > 1.0)
        throw ConfigError("correction_threshold must be in [0,1]");
    if (max_correction_rounds < 0) throw ConfigError("max_correction_rounds must be >= 0");
    if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
    if (ucb_exploration <= 0.0) throw ConfigError("ucb_exploration must be > 0");
    if (gen_temperature < 0.0) throw ConfigError("gen_temperature must be >= 0");
    if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
}

std::vector<CandidateSolution> merge_result_set(
    const std::vector<TreeOutcome>& outcomes,
    const std::vector<std::optional<CandidateSolution>>& corrected) {
    if (outcomes.size() != corrected.size())
        throw ContractViolation("merge_result_set: outcomes/corrected length mismatch");

    std::vector<std::size_t> order(outcomes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return outcomes[a].tree_index < outcomes[b].tree_index;
    });

    std::vector<CandidateSolution> merged;
    for (std::size_t i : order) {
        if (outcomes[i].activation != 1) continue;
        if (!corrected[i])
            throw ContractViolation("merge_result_set: active outcome without corrected candidate");
        merged.push_back(*corrected[i]);
    }
    return merged;
}

}  // namespace fot

#include "fot/decision.hpp"

#include <algorithm>
#include <cctype>

#include "fot/tasks.hpp"

namespace fot {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string canonical_key(const CandidateSolution& c, TaskKind task,
                          const std::string& ans_format) {
    if (auto canon = canonicalize_answer(task, c.answer, ans_format)) return canon->text;
    return c.answer;
}

/// Representative of a canonical answer: the holder with lowest tree_index.
const CandidateSolution* representative(const std::vector<CandidateSolution>& candidates,
                                        TaskKind task, const std::string& ans_format,
                                        const std::string& key) {
    const CandidateSolution* best = nullptr;
    for (const auto& c : candidates) {
        if (canonical_key(c, task, ans_format) != key) continue;
        if (!best || c.tree_index < best->tree_index) best = &c;
    }
    return best;
}

}  // namespace

Ballot build_ballot(const std::vector<CandidateSolution>& candidates, TaskKind task,
                    const std::string& ans_format) {
    Ballot b;
    b.candidates = candidates;
    for (const auto& c : candidates) {
        std::string key = canonical_key(c, task, ans_format);
        if (b.counts.emplace(key, 0).second) b.order.push_back(key);
        b.counts[key] += 1;
    }
    for (const auto& key : b.order) b.top_count = std::max(b.top_count, b.counts[key]);
    std::vector<std::string> leaders;
    for (const auto& key : b.order) {
        if (b.counts[key] == b.top_count) leaders.push_back(key);
    }
    b.tied = leaders.size() > 1;
    if (!b.tied && !leaders.empty()) b.winner = leaders[0];
    return b;
}

DecisionResult majority_vote(const std::vector<CandidateSolution>& candidates,
                             const DecisionContext& ctx) {
    if (candidates.empty()) throw NoAnswerError("majority_vote over an empty result set");
    Ballot b = build_ballot(candidates, ctx.task, ctx.ans_format);
    const CandidateSolution* best = nullptr;
    for (const auto& c : candidates) {
        if (b.counts[canonical_key(c, ctx.task, ctx.ans_format)] != b.top_count) continue;
        if (!best || c.tree_index < best->tree_index) best = &c;
    }
    DecisionResult r;
    r.final = *best;
    return r;
}

DecisionResult math_expert(const std::string& question,
                           const std::vector<CandidateSolution>& candidates, Backend& backend,
                           const DecisionContext& ctx) {
    if (candidates.empty()) throw NoAnswerError("math_expert over an empty result set");
    if (!ctx.pack) throw ContractViolation("math_expert needs a prompt pack");
    Ballot b = build_ballot(candidates, ctx.task, ctx.ans_format);
    DecisionResult r;
    if (b.order.size() == 1) {
        r.final = *representative(candidates, ctx.task, ctx.ans_format, b.order[0]);
        return r;
    }

    std::string answers_list;
    for (std::size_t i = 0; i < b.order.size(); ++i) {
        if (i) answers_list += ", ";
        int n = b.counts[b.order[i]];
        answers_list += b.order[i] + " (" + std::to_string(n) + (n == 1 ? " vote)" : " votes)");
    }
    CompletionRequest req;
    req.prompt = render_template(ctx.pack->math_expert, {{"question", question},
                                                         {"answers_list", answers_list},
                                                         {"ans_format", ctx.ans_format}});
    req.temperature = 0.0;
    req.seed = ctx.seed;
    std::string reply;
    try {
        reply = backend.complete(req).text;
        r.expert_calls = 1;
    } catch (const BackendError& e) {
        warn(std::string("expert call failed, falling back to majority vote: ") + e.what());
        r = majority_vote(candidates, ctx);
        r.expert_fallback = true;
        return r;
    }

    // first try the ans_format tail, then containment over the listed answers
    std::optional<std::string> chosen;
    std::string tail = reply;
    std::string hay = reply, needle = ctx.ans_format;
    for (char& c : hay) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (char& c : needle) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (std::size_t pos = hay.rfind(needle); pos != std::string::npos) {
        tail = trim(reply.substr(pos + needle.size()));
    }
    if (auto canon = canonicalize_answer(ctx.task, tail, ctx.ans_format)) {
        for (const auto& key : b.order) {
            if (key == canon->text) {
                chosen = key;
                break;
            }
        }
    }
    if (!chosen) {
        for (const auto& key : b.order) {
            if (reply.find(key) != std::string::npos) {
                chosen = key;
                break;
            }
        }
    }
    if (!chosen) {
        auto fb = majority_vote(candidates, ctx);
        r.final = fb.final;
        r.expert_fallback = true;
        return r;
    }
    r.final = *representative(candidates, ctx.task, ctx.ans_format, *chosen);
    return r;
}

DecisionResult cged(const std::string& question,
                    const std::vector<CandidateSolution>& candidates, Backend& backend,
                    const DecisionContext& ctx) {
    if (candidates.empty()) throw NoAnswerError("cged over an empty result set");
    Ballot b = build_ballot(candidates, ctx.task, ctx.ans_format);
    if (2 * b.top_count > static_cast<int>(candidates.size())) {
        return majority_vote(candidates, ctx);
    }
    return math_expert(question, candidates, backend, ctx);
}

DecisionResult decide(DecisionStrategy strategy, const std::string& question,
                      const std::vector<CandidateSolution>& candidates, Backend& backend,
                      const DecisionContext& ctx) {
    switch (strategy) {
        case DecisionStrategy::MajorityVote: return majority_vote(candidates, ctx);
        case DecisionStrategy::MathExpert: return math_expert(question, candidates, backend, ctx);
        case DecisionStrategy::CGED: return cged(question, candidates, backend, ctx);
    }
    throw ContractViolation("unknown decision strategy");
}

}  // namespace fot

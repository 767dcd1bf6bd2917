#include "fot/correction.hpp"

#include <algorithm>
#include <sstream>

#include "fot/forest.hpp"
#include "fot/tasks.hpp"

namespace fot {

void CorrectionConfig::validate() const {
    if (threshold < 0.0 || threshold > 1.0) {
        throw ConfigError("correction threshold must lie in [0,1]");
    }
    if (max_correction_rounds < 0) {
        throw ConfigError("max_correction_rounds must be >= 0");
    }
}

namespace {

struct TraceStep {
    Rational lhs, rhs, claimed;
    char op = '+';
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::optional<TraceStep> parse_trace_line(const std::string& line) {
    std::string head = line;
    if (std::size_t lp = head.find("(left"); lp != std::string::npos) head = head.substr(0, lp);
    std::size_t eq = head.find('=');
    if (eq == std::string::npos) return std::nullopt;
    std::istringstream ss(head.substr(0, eq));
    std::string a_text, op_text, b_text, extra;
    if (!(ss >> a_text >> op_text >> b_text) || (ss >> extra)) return std::nullopt;
    if (op_text.size() != 1 || std::string("+-*/").find(op_text[0]) == std::string::npos) {
        return std::nullopt;
    }
    auto a = parse_rational(a_text);
    auto b = parse_rational(b_text);
    auto c = parse_rational(trim(head.substr(eq + 1)));
    if (!a || !b || !c) return std::nullopt;
    return TraceStep{*a, *b, *c, op_text[0]};
}

std::optional<Rational> apply_op(char op, const Rational& x, const Rational& y) {
    switch (op) {
        case '+': return x + y;
        case '-': return x - y;
        case '*': return x * y;
        case '/':
            if (y == Rational(0)) return std::nullopt;
            return x / y;
    }
    return std::nullopt;
}

bool take_from(std::vector<Rational>& pool, const Rational& v) {
    auto it = std::find(pool.begin(), pool.end(), v);
    if (it == pool.end()) return false;
    pool.erase(it);
    return true;
}

RuleCheckResult replay_exact(const std::vector<TraceStep>& steps,
                             const std::vector<long long>& input_numbers) {
    RuleCheckResult r;
    std::vector<Rational> live;
    for (long long n : input_numbers) live.emplace_back(n);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto& s = steps[i];
        std::vector<Rational> pool = live;
        auto computed = apply_op(s.op, s.lhs, s.rhs);
        if (!take_from(pool, s.lhs) || !take_from(pool, s.rhs) || !computed ||
            !(*computed == s.claimed)) {
            r.first_violation = i + 1;
            return r;
        }
        pool.push_back(s.claimed);
        live = std::move(pool);
    }
    r.valid = live.size() == 1 && live[0] == Rational(24);
    if (!r.valid && !r.first_violation && !steps.empty()) r.first_violation = steps.size();
    return r;
}

}  // namespace

RuleCheckResult game24_rule_check(const std::vector<ParsedStep>& trace,
                                  const std::vector<long long>& input_numbers) {
    if (trace.empty()) throw ContractViolation("game24_rule_check needs a nonempty trace");
    std::vector<TraceStep> steps;
    steps.reserve(trace.size());
    for (const auto& p : trace) steps.push_back({p.lhs, p.rhs, p.produced, p.op});
    return replay_exact(steps, input_numbers);
}

RuleCheckResult game24_rule_check_lines(const std::vector<std::string>& trace_lines,
                                        const std::vector<long long>& input_numbers) {
    if (trace_lines.empty()) {
        throw ContractViolation("game24_rule_check needs a nonempty trace");
    }
    std::vector<TraceStep> steps;
    for (std::size_t i = 0; i < trace_lines.size(); ++i) {
        auto s = parse_trace_line(trace_lines[i]);
        if (!s) {
            RuleCheckResult r;
            r.first_violation = i + 1;
            return r;
        }
        steps.push_back(*s);
    }
    return replay_exact(steps, input_numbers);
}

RuleCorrector make_game24_rule_corrector() {
    RuleCorrector rc;
    rc.task = TaskKind::Game24;
    rc.fix = [](const CandidateSolution& cand, const std::string& x) -> CandidateSolution {
        CandidateSolution out = cand;
        auto demote = [&]() -> CandidateSolution {
            out.score = 0.0;
            return out;
        };
        std::vector<long long> nums;
        try {
            nums = parse_numbers24(x);
        } catch (const ContractViolation&) {
            return demote();
        }
        std::vector<Rational> live;
        std::vector<std::pair<Rational, std::string>> frags;
        for (long long n : nums) {
            live.emplace_back(n);
            frags.emplace_back(Rational(n), std::to_string(n));
        }
        std::vector<std::string> repaired;
        for (const auto& line : cand.trace) {
            auto s = parse_trace_line(line);
            if (!s) return demote();
            auto computed = apply_op(s->op, s->lhs, s->rhs);
            if (!computed) return demote();
            std::vector<Rational> pool = live;
            if (!take_from(pool, s->lhs) || !take_from(pool, s->rhs)) return demote();
            // operands check out against the live multiset; the produced
            // value is recomputed, which is the repair
            pool.push_back(*computed);
            live = std::move(pool);
            // consume fragments in first-match order, lhs then rhs
            auto consume = [&](const Rational& v) -> std::optional<std::string> {
                for (std::size_t i = 0; i < frags.size(); ++i) {
                    if (frags[i].first == v) {
                        std::string f = frags[i].second;
                        frags.erase(frags.begin() + static_cast<std::ptrdiff_t>(i));
                        return f;
                    }
                }
                return std::nullopt;
            };
            auto f1 = consume(s->lhs);
            auto f2 = consume(s->rhs);
            if (!f1 || !f2) return demote();
            frags.emplace_back(*computed,
                               "(" + *f1 + " " + s->op + " " + *f2 + ")");
            repaired.push_back(format_rational(s->lhs) + " " + s->op + " " +
                               format_rational(s->rhs) + " = " + format_rational(*computed));
        }
        if (live.size() != 1) return demote();
        out.trace = std::move(repaired);
        std::string expr = frags[0].second;
        if (expr.size() >= 2 && expr.front() == '(' && expr.back() == ')') {
            expr = expr.substr(1, expr.size() - 2);
        }
        out.answer = expr;
        out.payload = live[0];
        out.score = check_expression_24(expr, nums) ? 1.0 : 0.0;
        return out;
    };
    return rc;
}

CandidateSolution self_correct(const CandidateSolution& candidate, const std::string& x,
                               const CorrectionConfig& cfg, const RuleCorrector* rules,
                               const KnowledgeBase& kb, Backend& backend,
                               const PromptPack& pack, TaskKind task,
                               const std::string& ans_format) {
    cfg.validate();
    if (candidate.score >= cfg.threshold) return candidate;
    if (rules && rules->fix) return rules->fix(candidate, x);

    auto retrieved = retrieve_top1(x, kb, 0.2);
    std::string exemplar = retrieved ? kb.entries[*retrieved].worked_solution : "";
    CandidateSolution best = candidate;
    std::string prev_text = candidate.trace.empty() ? candidate.answer : candidate.trace.back();
    for (int round = 0; round < cfg.max_correction_rounds; ++round) {
        CompletionRequest req;
        req.prompt = compose_prompt(
            "", exemplar,
            render_template(pack.math_self_correct,
                            {{"question", x}, {"ans_format", ans_format}}) +
                "\n\nPrevious answer:\n" + prev_text);
        req.temperature = 0.0;
        std::string reply;
        double score = 0.0;
        try {
            reply = backend.complete(req).text;
            score = score_answer(x, reply, backend, pack);
        } catch (const BackendError&) {
            best.degraded = true;
            return best;
        } catch (const BudgetError&) {
            best.degraded = true;
            return best;
        }
        CandidateSolution revised = candidate;
        auto canon = canonicalize_answer(task, reply, ans_format);
        revised.answer = canon ? canon->text : trim(reply);
        if (canon && canon->kind == AnswerKind::Rational) {
            revised.payload = canon->value;
        } else if (canon) {
            revised.payload = canon->text;
        }
        revised.score = score;
        revised.trace = candidate.trace;
        revised.trace.push_back(reply);
        if (score > best.score) best = revised;
        prev_text = reply;
        if (score >= cfg.threshold) break;
    }
    return best;
}

}  // namespace fot

#include "fot/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "fot/tasks.hpp"

namespace fot {

void TreeEngineConfig::validate() const {
    if (beam_width < 1) throw ConfigError("tree beam_width must be >= 1");
    if (max_depth < 1) throw ConfigError("tree max_depth must be >= 1");
    if (rollouts < 0) throw ConfigError("tree rollouts must be >= 0");
    if (ucb_exploration <= 0.0) throw ConfigError("tree ucb_exploration must be > 0");
}

const char* to_string(ValueLabel v) {
    switch (v) {
        case ValueLabel::Sure: return "sure";
        case ValueLabel::Likely: return "likely";
        case ValueLabel::Impossible: return "impossible";
        case ValueLabel::Unrated: return "unrated";
    }
    return "unrated";
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
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

int label_rank(ValueLabel l) {
    switch (l) {
        case ValueLabel::Sure: return 0;
        case ValueLabel::Likely: return 1;
        case ValueLabel::Unrated: return 1;
        case ValueLabel::Impossible: return 2;
    }
    return 1;
}

}  // namespace

std::vector<ParsedStep> parse_proposal(const std::string& reply,
                                       const std::vector<Rational>& parent_remaining) {
    if (parent_remaining.empty()) {
        throw ContractViolation("parse_proposal needs a nonempty remaining multiset");
    }
    std::vector<ParsedStep> out;
    std::set<std::string> seen;
    for (const std::string& raw : split_lines(reply)) {
        std::string line = trim(raw);
        if (line.empty()) continue;
        std::string head = line;
        if (std::size_t lp = head.find("(left"); lp != std::string::npos) {
            head = head.substr(0, lp);
        }
        std::size_t eq = head.find('=');
        if (eq == std::string::npos) continue;
        std::string lhs_part = trim(head.substr(0, eq));
        auto result = parse_rational(trim(head.substr(eq + 1)));
        if (!result) continue;

        std::string a_text, b_text;
        char op = 0;
        {
            std::istringstream ss(lhs_part);
            std::vector<std::string> toks;
            std::string t;
            while (ss >> t) toks.push_back(t);
            if (toks.size() == 3 && toks[1].size() == 1 &&
                std::string("+-*/").find(toks[1][0]) != std::string::npos) {
                a_text = toks[0];
                op = toks[1][0];
                b_text = toks[2];
            } else {
                // compact form like "2+8"; a '-' counts only after a digit so
                // a negative left operand is not mistaken for the operator
                for (std::size_t i = 1; i + 1 <= lhs_part.size(); ++i) {
                    char c = lhs_part[i];
                    bool is_op = (c == '+' || c == '*' || c == '/') ||
                                 (c == '-' && std::isdigit(static_cast<unsigned char>(
                                                  lhs_part[i - 1])));
                    if (is_op) {
                        a_text = trim(lhs_part.substr(0, i));
                        op = c;
                        b_text = trim(lhs_part.substr(i + 1));
                        break;
                    }
                }
            }
        }
        if (op == 0) continue;
        auto a = parse_rational(a_text);
        auto b = parse_rational(b_text);
        if (!a || !b) continue;
        auto computed = apply_op(op, *a, *b);
        if (!computed || !(*computed == *result)) continue;

        std::vector<Rational> pool = parent_remaining;
        if (!take_from(pool, *a) || !take_from(pool, *b)) continue;
        pool.push_back(*result);
        std::sort(pool.begin(), pool.end());

        ParsedStep step;
        step.expression = format_rational(*a) + " " + op + " " + format_rational(*b) + " = " +
                          format_rational(*result);
        step.raw_line = line;
        step.lhs = *a;
        step.rhs = *b;
        step.produced = *result;
        step.op = op;
        step.remaining = std::move(pool);
        std::string key = step.expression;
        if (!seen.insert(key).second) continue;
        out.push_back(std::move(step));
    }
    return out;
}

int activation_indicator(const std::vector<LayerRecord>& layers) {
    if (layers.empty()) return 0;
    for (const auto& l : layers) {
        if (l.valid.empty()) return 0;
    }
    return 1;
}

ValueLabel value_state(const std::string& remaining_numbers, Backend& backend,
                       const TreeRunContext& ctx, std::uint64_t seed) {
    CompletionRequest req;
    req.prompt = render_template(ctx.pack->game24_value, {{"input", remaining_numbers}});
    req.temperature = 0.0;
    req.max_tokens = ctx.max_tokens;
    req.seed = seed;
    Completion c = backend.complete(req);
    std::string hay;
    hay.reserve(c.text.size());
    for (char ch : c.text) {
        hay += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    std::size_t p_sure = hay.rfind("sure");
    std::size_t p_likely = hay.rfind("likely");
    std::size_t p_imp = hay.rfind("impossible");
    std::size_t best = std::string::npos;
    ValueLabel label = ValueLabel::Likely;
    auto consider = [&](std::size_t pos, ValueLabel l) {
        if (pos != std::string::npos && (best == std::string::npos || pos > best)) {
            best = pos;
            label = l;
        }
    };
    consider(p_sure, ValueLabel::Sure);
    consider(p_likely, ValueLabel::Likely);
    consider(p_imp, ValueLabel::Impossible);
    if (best == std::string::npos) {
        warn("value reply had no sure/likely/impossible keyword; defaulting to likely");
    }
    return label;
}

namespace {

struct BeamNode {
    std::vector<Rational> remaining;
    std::vector<std::string> step_exprs;
    // live value plus the expression fragment that produced it
    std::vector<std::pair<Rational, std::string>> frags;
    std::string line;
    ValueLabel label = ValueLabel::Unrated;
};

BeamNode child_of(const BeamNode& parent, const ParsedStep& s) {
    BeamNode c;
    c.remaining = s.remaining;
    c.step_exprs = parent.step_exprs;
    c.step_exprs.push_back(s.expression);
    c.frags = parent.frags;
    auto consume = [&](const Rational& v) -> std::string {
        for (std::size_t i = 0; i < c.frags.size(); ++i) {
            if (c.frags[i].first == v) {
                std::string f = c.frags[i].second;
                c.frags.erase(c.frags.begin() + static_cast<std::ptrdiff_t>(i));
                return f;
            }
        }
        throw ContractViolation("step operand missing from live fragments");
    };
    std::string fa = consume(s.lhs);
    std::string fb = consume(s.rhs);
    c.frags.emplace_back(s.produced, "(" + fa + " " + s.op + " " + fb + ")");
    c.line = s.raw_line;
    return c;
}

std::string dedupe_key(const BeamNode& n) {
    std::vector<std::string> fr;
    fr.reserve(n.frags.size());
    for (const auto& f : n.frags) fr.push_back(f.second);
    std::sort(fr.begin(), fr.end());
    std::string key = multiset_key(n.remaining) + "#";
    for (const auto& f : fr) key += f + "|";
    return key;
}

std::string strip_outer_parens(const std::string& s) {
    if (s.size() >= 2 && s.front() == '(' && s.back() == ')') {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

}  // namespace

TreeOutcome tot_search(const Problem& problem, const TreeEngineConfig& cfg, Backend& backend,
                       const TreeRunContext& ctx) {
    cfg.validate();
    if (!ctx.pack) throw ContractViolation("tot_search needs a prompt pack");
    if (problem.task != TaskKind::Game24) {
        throw ContractViolation("tot_search only handles Game of 24 problems");
    }
    TreeOutcome out;
    out.tree_index = ctx.tree_index;
    const auto ints = parse_numbers24(problem.input);
    auto is_cancelled = [&] { return ctx.cancelled && ctx.cancelled(); };
    auto tracef = [&](const std::string& m) {
        if (ctx.trace) ctx.trace("[tree " + std::to_string(ctx.tree_index) + "] " + m);
    };

    BeamNode root;
    for (long long v : ints) {
        root.remaining.emplace_back(v);
        root.frags.emplace_back(Rational(v), std::to_string(v));
    }
    std::vector<BeamNode> parents{root};
    bool stopped = false;

    for (int depth = 0; depth < cfg.max_depth && !stopped; ++depth) {
        const bool final_layer = depth == cfg.max_depth - 1;
        LayerRecord layer;
        layer.depth = depth;
        std::vector<BeamNode> children;
        std::set<std::string> seen;
        bool found24 = false;

        for (const auto& parent : parents) {
            if (is_cancelled()) {
                out.cancelled = true;
                stopped = true;
                break;
            }
            if (found24 && ctx.early_termination) break;
            CompletionRequest req;
            const std::string& tmpl =
                depth == 0 ? ctx.pack->game24_propose : ctx.pack->game24_step2;
            req.prompt = compose_prompt(
                ctx.preamble, depth == 0 ? ctx.exemplar : "",
                render_template(tmpl, {{"input", format_rationals(parent.remaining)}}));
            req.temperature = ctx.gen_temperature;
            req.max_tokens = ctx.max_tokens;
            req.seed = cfg.seed;
            Completion c;
            try {
                c = backend.complete(req);
            } catch (const BackendError& e) {
                out.error_note = e.what();
                stopped = true;
                break;
            } catch (const BudgetError& e) {
                out.error_note = e.what();
                stopped = true;
                break;
            }
            ++out.gen_invocations;
            for (const auto& raw : split_lines(c.text)) {
                std::string t = trim(raw);
                if (!t.empty()) layer.generated.push_back(t);
            }
            for (auto& s : parse_proposal(c.text, parent.remaining)) {
                layer.valid.push_back(s.raw_line);
                BeamNode child = child_of(parent, s);
                if (!seen.insert(dedupe_key(child)).second) continue;
                if (final_layer && child.remaining.size() == 1 &&
                    child.remaining[0] == Rational(24)) {
                    found24 = true;
                }
                children.push_back(std::move(child));
            }
        }

        if (!stopped) {
            if (final_layer) {
                for (auto& ch : children) {
                    ch.label = (ch.remaining.size() == 1 && ch.remaining[0] == Rational(24))
                                   ? ValueLabel::Sure
                                   : ValueLabel::Impossible;
                }
            } else {
                for (auto& ch : children) {
                    if (is_cancelled()) {
                        out.cancelled = true;
                        stopped = true;
                        break;
                    }
                    try {
                        ch.label =
                            value_state(format_rationals(ch.remaining), backend, ctx, cfg.seed);
                        ++out.score_invocations;
                    } catch (const BackendError& e) {
                        out.error_note = e.what();
                        stopped = true;
                        break;
                    } catch (const BudgetError& e) {
                        out.error_note = e.what();
                        stopped = true;
                        break;
                    }
                }
            }
        }

        std::vector<BeamNode> kept;
        if (!stopped) {
            std::vector<std::size_t> idx(children.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            if (ctx.sparse_activation || final_layer) {
                // the last layer ranks exact-24 completions first in every
                // mode so a verified solution is never beam-dropped
                std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                    return label_rank(children[a].label) < label_rank(children[b].label);
                });
            }
            for (std::size_t i : idx) {
                if (static_cast<int>(kept.size()) >= cfg.beam_width) break;
                if (ctx.sparse_activation && !final_layer &&
                    children[i].label == ValueLabel::Impossible) {
                    continue;
                }
                layer.kept.push_back(children[i].line);
                kept.push_back(children[i]);
            }
            tracef("propose depth " + std::to_string(depth) + ": " +
                   std::to_string(layer.generated.size()) + " generated, " +
                   std::to_string(layer.valid.size()) + " valid");
            tracef((final_layer ? "check depth " : "value depth ") + std::to_string(depth) +
                   ": kept " + std::to_string(layer.kept.size()) + " of " +
                   std::to_string(layer.valid.size()));
        }
        out.layers.push_back(std::move(layer));
        parents = std::move(kept);
        if (!stopped && parents.empty() && !final_layer) {
            // nothing expandable: pin the activation indicator to 0
            LayerRecord empty;
            empty.depth = depth + 1;
            out.layers.push_back(empty);
            break;
        }
        if (!stopped && final_layer && !parents.empty()) {
            const BeamNode& best = parents[0];
            CandidateSolution cand;
            cand.answer = strip_outer_parens(best.frags[0].second);
            cand.payload = best.remaining[0];
            cand.trace = best.step_exprs;
            cand.tree_index = ctx.tree_index;
            cand.score = check_expression_24(cand.answer, ints) ? 1.0 : 0.0;
            tracef("candidate " + cand.answer + " (score " +
                   std::to_string(cand.score) + ")");
            out.candidate = std::move(cand);
        }
    }

    out.activation = activation_indicator(out.layers);
    if (!out.error_note.empty() || out.cancelled) {
        out.activation = 0;
        out.candidate.reset();
    }
    if (out.activation == 1 && !out.candidate) {
        warn("tree completed active but produced no candidate; demoting to inactive");
        out.activation = 0;
    }
    out.invocations = out.gen_invocations + out.score_invocations;
    return out;
}

TreeOutcome mctsr_search(const Problem& problem, const TreeEngineConfig& cfg, Backend& backend,
                         const TreeRunContext& ctx) {
    cfg.validate();
    if (!ctx.pack) throw ContractViolation("mctsr_search needs a prompt pack");
    if (problem.task != TaskKind::MathWord) {
        throw ContractViolation("mctsr_search only handles math word problems");
    }
    TreeOutcome out;
    out.tree_index = ctx.tree_index;
    const std::string& q = problem.input;
    auto is_cancelled = [&] { return ctx.cancelled && ctx.cancelled(); };
    auto tracef = [&](const std::string& m) {
        if (ctx.trace) ctx.trace("[tree " + std::to_string(ctx.tree_index) + "] " + m);
    };

    struct Best {
        double reward;
        CanonicalAnswer ans;
        std::string text;
    };
    std::optional<Best> best;

    ThoughtNode root;
    {
        CompletionRequest req;
        req.prompt = compose_prompt(
            ctx.preamble, ctx.exemplar,
            render_template(ctx.pack->math_zero_shot,
                            {{"question", q}, {"ans_format", ctx.ans_format}}));
        req.temperature = ctx.gen_temperature;
        req.max_tokens = ctx.max_tokens;
        req.seed = cfg.seed;
        try {
            root.state = backend.complete(req).text;
            ++out.gen_invocations;
        } catch (const std::runtime_error& e) {
            out.error_note = e.what();
            out.invocations = 0;
            return out;
        }
    }
    LayerRecord l0;
    l0.depth = 0;
    l0.generated.push_back(root.state);
    auto parsed0 = canonicalize_answer(TaskKind::MathWord, root.state, ctx.ans_format);
    if (parsed0) {
        l0.valid.push_back(root.state);
        l0.kept.push_back(root.state);
    }
    out.layers.push_back(std::move(l0));
    bool errored = false;
    try {
        root.total_reward = score_answer(q, root.state, backend, *ctx.pack);
        ++out.score_invocations;
    } catch (const BackendError& e) {
        out.error_note = e.what();
        errored = true;
    } catch (const BudgetError& e) {
        out.error_note = e.what();
        errored = true;
    }
    if (parsed0 && !errored) best = Best{root.total_reward, *parsed0, root.state};
    tracef("root answer " + (parsed0 ? parsed0->text : std::string("(unparsed)")) +
           " reward " + std::to_string(root.total_reward));

    for (int r = 1; r <= cfg.rollouts && !errored; ++r) {
        if (is_cancelled()) {
            out.cancelled = true;
            break;
        }
        ThoughtNode* node = &root;
        while (!node->children.empty() &&
               static_cast<int>(node->children.size()) >= cfg.beam_width) {
            ThoughtNode* next = nullptr;
            for (auto& ch : node->children) {
                if (ch->visits == 0) {
                    next = ch.get();
                    break;
                }
            }
            if (!next) {
                double best_u = -1e300;
                for (auto& ch : node->children) {
                    double u = ch->total_reward / ch->visits +
                               cfg.ucb_exploration *
                                   std::sqrt(std::log(std::max<double>(1.0, node->visits)) /
                                             ch->visits);
                    if (u > best_u) {
                        best_u = u;
                        next = ch.get();
                    }
                }
            }
            node = next;
        }

        CompletionRequest req;
        req.prompt = compose_prompt(
            ctx.preamble, ctx.exemplar,
            render_template(ctx.pack->math_refine,
                            {{"question", q}, {"ans_format", ctx.ans_format}}) +
                "\n\nPrevious answer:\n" + node->state);
        req.temperature = ctx.gen_temperature;
        req.max_tokens = ctx.max_tokens;
        req.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(r));
        std::string reply;
        double reward = 0.0;
        try {
            reply = backend.complete(req).text;
            ++out.gen_invocations;
            reward = score_answer(q, reply, backend, *ctx.pack);
            ++out.score_invocations;
        } catch (const BackendError& e) {
            out.error_note = e.what();
            errored = true;
            break;
        } catch (const BudgetError& e) {
            out.error_note = e.what();
            errored = true;
            break;
        }

        auto child = std::make_unique<ThoughtNode>();
        child->state = reply;
        child->depth = node->depth + 1;
        child->parent = node;
        ThoughtNode* leaf = child.get();
        node->children.push_back(std::move(child));
        for (ThoughtNode* n = leaf; n != nullptr; n = n->parent) {
            n->visits += 1;
            n->total_reward += reward;
        }

        LayerRecord lr;
        lr.depth = r;
        lr.generated.push_back(reply);
        auto parsed = canonicalize_answer(TaskKind::MathWord, reply, ctx.ans_format);
        if (parsed) {
            lr.valid.push_back(reply);
            lr.kept.push_back(reply);
            if (!best || reward > best->reward) best = Best{reward, *parsed, reply};
        }
        out.layers.push_back(std::move(lr));
        tracef("rollout " + std::to_string(r) + ": answer " +
               (parsed ? parsed->text : std::string("(unparsed)")) + " reward " +
               std::to_string(reward));
    }

    if (best && !errored && !out.cancelled) {
        CandidateSolution cand;
        cand.answer = best->ans.text;
        cand.payload = best->ans.value;
        cand.score = best->reward;
        cand.tree_index = ctx.tree_index;
        cand.trace.push_back(best->text);
        out.candidate = std::move(cand);
    }
    out.activation = out.candidate ? 1 : 0;
    out.invocations = out.gen_invocations + out.score_invocations;
    return out;
}

}  // namespace fot

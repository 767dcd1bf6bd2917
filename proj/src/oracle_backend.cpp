#include "fot/oracle_backend.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "fot/tasks.hpp"

namespace fot {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n'");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n'");
    return s.substr(b, e - b + 1);
}

enum class PromptKind { Propose, Value, Critic, Refine, Generate, Expert };

PromptKind classify(const std::string& prompt) {
    auto has = [&](const char* marker) { return prompt.find(marker) != std::string::npos; };
    if (has("Evaluate if given numbers can reach 24")) return PromptKind::Value;
    if (has("Let's play a game called 24")) return PromptKind::Propose;
    if (has("Provide three integers as input")) return PromptKind::Propose;
    if (has("Analyze this answer Strictly and Critic")) return PromptKind::Critic;
    if (has("highly specialized mathematics expert")) return PromptKind::Expert;
    if (has("Please refine the your answer")) return PromptKind::Refine;
    if (has("Let's think step by step")) return PromptKind::Generate;
    throw BackendError("oracle cannot classify prompt: " + prompt.substr(0, 60), false);
}

/// The reply must be a pure function of the request, not of call order.
std::mt19937_64 request_rng(const OracleBehavior& b, const CompletionRequest& req) {
    std::uint64_t s = mix_seed(b.seed, req.seed.value_or(0x9e3779b97f4a7c15ULL));
    return std::mt19937_64(mix_seed(s, fnv1a64(req.prompt)));
}

bool draw(std::mt19937_64& rng, double p) {
    double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
    return u < p;
}

std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t n) {
    // plain modulo; bias is irrelevant at these ranges and it stays portable
    return rng() % n;
}

/// Rest of the line after the last occurrence of `marker`.
std::optional<std::string> last_marked_line(const std::string& text, const std::string& marker) {
    std::size_t pos = text.rfind(marker);
    if (pos == std::string::npos) return std::nullopt;
    std::size_t start = pos + marker.size();
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    return trim(text.substr(start, end - start));
}

std::optional<std::vector<Rational>> parse_number_list(const std::string& line) {
    std::istringstream ss(line);
    std::vector<Rational> out;
    std::string tok;
    while (ss >> tok) {
        auto r = parse_rational(tok);
        if (!r) return std::nullopt;
        out.push_back(*r);
    }
    if (out.empty()) return std::nullopt;
    return out;
}

/// Text between the last `open` before `anchor_pos` and `anchor_pos`.
std::string between(const std::string& text, const std::string& open, std::size_t anchor_pos) {
    std::size_t o = text.rfind(open, anchor_pos);
    if (o == std::string::npos) return "";
    std::size_t start = o + open.size();
    if (start > anchor_pos) return "";
    return trim(text.substr(start, anchor_pos - start));
}

struct ListedAnswer {
    std::string text;
};

std::vector<ListedAnswer> parse_answers_list(const std::string& list) {
    std::vector<ListedAnswer> out;
    std::size_t pos = 0;
    while (pos < list.size()) {
        std::size_t next = list.find(", ", pos);
        std::string entry =
            list.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        std::size_t votes = entry.rfind(" (");
        if (votes != std::string::npos && entry.find("vote", votes) != std::string::npos) {
            entry = entry.substr(0, votes);
        }
        entry = trim(entry);
        if (!entry.empty()) out.push_back({entry});
        if (next == std::string::npos) break;
        pos = next + 2;
    }
    return out;
}

}  // namespace

OracleBehavior OracleBehavior::uniform(double p, std::uint64_t seed) {
    OracleBehavior b;
    b.propose_success = b.value_success = b.critic_success = b.refine_success =
        b.generate_success = b.expert_success = p;
    b.seed = seed;
    return b;
}

void OracleBehavior::validate() const {
    for (double p : {propose_success, value_success, critic_success, refine_success,
                     generate_success, expert_success}) {
        if (p < 0.0 || p > 1.0) {
            throw ConfigError("oracle success probabilities must lie in [0,1]");
        }
    }
    if (max_reply_steps < 1) throw ConfigError("oracle max_reply_steps must be >= 1");
    if (ans_format.empty()) throw ConfigError("oracle ans_format must be nonempty");
}

OracleBackend::OracleBackend(TaskKind task, OracleBehavior behavior)
    : task_(task), b_(std::move(behavior)) {
    b_.validate();
}

std::unique_ptr<Backend> make_oracle_backend(TaskKind task, const OracleBehavior& behavior) {
    behavior.validate();
    return std::make_unique<OracleBackend>(task, behavior);
}

Completion OracleBackend::do_complete(const CompletionRequest& request) {
    const std::string& prompt = request.prompt;
    auto rng = request_rng(b_, request);
    Completion c;

    switch (classify(prompt)) {
        case PromptKind::Propose: {
            auto line = last_marked_line(prompt, "Input:");
            auto nums = line ? parse_number_list(*line) : std::nullopt;
            if (!nums || nums->size() < 2) {
                c.text = "No next steps.";
                break;
            }
            auto options = enumerate_steps(*nums);
            bool success = draw(rng, b_.propose_success);
            std::vector<std::string> lines;
            auto emit = [&](bool solvable_flag, std::size_t cap) {
                for (const auto& o : options) {
                    if (lines.size() >= cap) break;
                    if (o.keeps_solvable == solvable_flag) lines.push_back(format_step(o));
                }
            };
            std::size_t cap = static_cast<std::size_t>(b_.max_reply_steps);
            if (success) {
                emit(true, std::min<std::size_t>(cap, 5));
                emit(false, cap);
            } else {
                emit(false, cap);
                if (lines.empty() && !options.empty()) {
                    // no wrong-but-legal steps exist, so miscompute one
                    const auto& o = options[0];
                    lines.push_back(format_rational(o.a) + " " + o.op + " " +
                                    format_rational(o.b) + " = " +
                                    format_rational(o.result + Rational(1)) + " (left: " +
                                    format_rationals(o.remaining_after) + ")");
                }
            }
            c.text = lines.empty() ? "No next steps." : "";
            for (std::size_t i = 0; i < lines.size(); ++i) {
                if (i) c.text += '\n';
                c.text += lines[i];
            }
            break;
        }

        case PromptKind::Value: {
            auto line = last_marked_line(prompt, "Input:");
            auto nums = line ? parse_number_list(*line) : std::nullopt;
            bool truth = nums && reachable24(*nums);
            bool success = draw(rng, b_.value_success);
            bool say_sure = success ? truth : !truth;
            c.text = (line ? *line : std::string("?")) +
                     (say_sure ? "\ncombination reaches 24\nsure"
                               : "\nno combination reaches 24\nimpossible");
            break;
        }

        case PromptKind::Critic: {
            std::size_t anchor = prompt.rfind("\nAnalyze this answer Strictly");
            if (anchor == std::string::npos) anchor = prompt.size();
            std::size_t ans_pos = prompt.rfind("\nAnswer:", anchor);
            std::string answer, question;
            if (ans_pos != std::string::npos) {
                answer = trim(prompt.substr(ans_pos + 8, anchor - (ans_pos + 8)));
                question = between(prompt, "Question:", ans_pos);
            }
            std::optional<bool> correct;
            std::vector<long long> nums24;
            bool is24 = false;
            try {
                nums24 = parse_numbers24(question);
                is24 = true;
            } catch (const ContractViolation&) {
            }
            if (is24) {
                correct = check_expression_24(answer, nums24);
            } else {
                auto it = b_.math_truth.find(question);
                if (it != b_.math_truth.end()) {
                    auto want = canonicalize_answer(TaskKind::MathWord, it->second, b_.ans_format);
                    auto got = canonicalize_answer(TaskKind::MathWord, answer, b_.ans_format);
                    correct = want && got && numeric_equiv(*want, *got);
                }
            }
            std::uint64_t score;
            if (!correct.has_value()) {
                score = 40 + draw_below(rng, 30);
            } else {
                bool truthful = draw(rng, b_.critic_success);
                bool report_good = truthful ? *correct : !*correct;
                score = report_good ? 85 + draw_below(rng, 14) : 5 + draw_below(rng, 30);
            }
            c.text = "[Analyst] checked arithmetic, units and the final statement. [Score] " +
                     std::to_string(score);
            break;
        }

        case PromptKind::Refine:
        case PromptKind::Generate: {
            bool is_refine = prompt.find("Please refine the your answer") != std::string::npos;
            std::size_t anchor = is_refine ? prompt.rfind("\nPlease refine the your answer")
                                           : prompt.rfind("\nThe response should begin");
            if (anchor == std::string::npos) anchor = prompt.size();
            std::string question = between(prompt, "Question:", anchor);
            std::string prev;
            if (std::size_t p = prompt.rfind("Previous answer:\n"); p != std::string::npos) {
                prev = trim(prompt.substr(p + 17));
            }
            bool success = draw(rng, is_refine ? b_.refine_success : b_.generate_success);
            std::optional<Rational> truth;
            if (auto it = b_.math_truth.find(question); it != b_.math_truth.end()) {
                truth = parse_rational(trim(it->second));
            }
            if (!truth && !prev.empty()) {
                if (auto got = canonicalize_answer(TaskKind::MathWord, prev, b_.ans_format)) {
                    if (got->kind == AnswerKind::Rational) truth = got->value;
                }
            }
            Rational ans = truth.value_or(Rational(static_cast<long long>(draw_below(rng, 100))));
            if (!success) ans += Rational(static_cast<long long>(1 + draw_below(rng, 9)));
            c.text = "[reasoning process] reworked the derivation from the given facts. "
                     "[Verification] checked against the stated conditions. " +
                     b_.ans_format + " " + format_rational(ans) + ".";
            break;
        }

        case PromptKind::Expert: {
            std::size_t list_pos = prompt.find("\nAnswers:");
            std::size_t which = prompt.find("\nWhich of the following");
            if (which == std::string::npos) which = prompt.size();
            std::string question = between(prompt, "Question:", list_pos == std::string::npos
                                                                    ? prompt.size()
                                                                    : list_pos);
            std::string list = list_pos == std::string::npos
                                   ? ""
                                   : trim(prompt.substr(list_pos + 9, which - (list_pos + 9)));
            auto answers = parse_answers_list(list);
            if (answers.empty()) {
                c.text = b_.ans_format + " unknown";
                break;
            }
            std::size_t correct_idx = answers.size();
            std::vector<long long> nums24;
            bool is24 = false;
            try {
                nums24 = parse_numbers24(question);
                is24 = true;
            } catch (const ContractViolation&) {
            }
            if (is24) {
                for (std::size_t i = 0; i < answers.size(); ++i) {
                    if (check_expression_24(answers[i].text, nums24)) {
                        correct_idx = i;
                        break;
                    }
                }
            } else if (auto it = b_.math_truth.find(question); it != b_.math_truth.end()) {
                auto want = canonicalize_answer(TaskKind::MathWord, it->second, b_.ans_format);
                for (std::size_t i = 0; i < answers.size() && want; ++i) {
                    auto got =
                        canonicalize_answer(TaskKind::MathWord, answers[i].text, b_.ans_format);
                    if (got && numeric_equiv(*want, *got)) {
                        correct_idx = i;
                        break;
                    }
                }
            }
            bool success = draw(rng, b_.expert_success);
            std::size_t chosen;
            if (correct_idx < answers.size()) {
                if (success) {
                    chosen = correct_idx;
                } else {
                    chosen = correct_idx == 0 && answers.size() > 1 ? 1 : 0;
                }
            } else {
                chosen = success ? 0 : answers.size() - 1;
            }
            c.text = b_.ans_format + " " + answers[chosen].text;
            break;
        }
    }

    if (request.want_token_scores) {
        c.token_scores = std::vector<double>{-0.105, -0.105, -0.105, -0.105};
    }
    return c;
}

}  // namespace fot

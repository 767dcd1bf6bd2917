#include "fot/tasks.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace fot {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string to_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

/// Maps unicode operator glyphs to ASCII and cuts a trailing "= n" tail.
std::string normalize_expr_text(const std::string& raw) {
    std::string s = raw;
    replace_all(s, "\xc3\x97", "*");      // ×
    replace_all(s, "\xc3\xb7", "/");      // ÷
    replace_all(s, "\xe2\x88\x92", "-");  // − (minus sign)
    std::size_t eq = s.find('=');
    if (eq != std::string::npos) s.resize(eq);
    return s;
}

struct ExprParser {
    const std::string& s;
    std::size_t pos = 0;
    std::vector<long long> leaves;
    std::string err;

    void skip_ws() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool fail(const std::string& m) {
        if (err.empty()) err = m;
        return false;
    }

    bool parse_expr(Rational& out) {
        if (!parse_term(out)) return false;
        for (;;) {
            skip_ws();
            if (pos >= s.size() || (s[pos] != '+' && s[pos] != '-')) return true;
            char op = s[pos++];
            Rational rhs;
            if (!parse_term(rhs)) return false;
            out = (op == '+') ? out + rhs : out - rhs;
        }
    }

    bool parse_term(Rational& out) {
        if (!parse_factor(out)) return false;
        for (;;) {
            skip_ws();
            char c = pos < s.size() ? s[pos] : '\0';
            if (c == 'x' || c == 'X') c = '*';
            if (c != '*' && c != '/') return true;
            ++pos;
            Rational rhs;
            if (!parse_factor(rhs)) return false;
            if (c == '/') {
                if (rhs == Rational(0)) return fail("division by zero");
                out = out / rhs;
            } else {
                out = out * rhs;
            }
        }
    }

    bool parse_factor(Rational& out) {
        skip_ws();
        if (pos >= s.size()) return fail("unexpected end of expression");
        if (s[pos] == '(') {
            ++pos;
            if (!parse_expr(out)) return false;
            skip_ws();
            if (pos >= s.size() || s[pos] != ')') return fail("missing closing parenthesis");
            ++pos;
            return true;
        }
        if (!std::isdigit(static_cast<unsigned char>(s[pos]))) {
            return fail(std::string("unexpected character '") + s[pos] + "'");
        }
        long long v = 0;
        std::size_t start = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            v = v * 10 + (s[pos] - '0');
            ++pos;
        }
        if (pos - start > 9) return fail("numeric literal too long");
        leaves.push_back(v);
        out = Rational(v);
        return true;
    }
};

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

}  // namespace

std::optional<Expression24> analyze_expression(const std::string& expr_text,
                                               std::string* diagnostic) {
    std::string norm = normalize_expr_text(expr_text);
    ExprParser p{norm, 0, {}, {}};
    Rational value;
    bool ok = p.parse_expr(value);
    if (ok) {
        p.skip_ws();
        if (p.pos != norm.size()) {
            ok = false;
            p.fail(std::string("trailing text '") + norm.substr(p.pos) + "'");
        }
    }
    if (!ok) {
        if (diagnostic) *diagnostic = p.err.empty() ? "parse failure" : p.err;
        return std::nullopt;
    }
    Expression24 e;
    for (char c : norm) {
        if (!std::isspace(static_cast<unsigned char>(c))) e.text += c;
    }
    e.leaves = std::move(p.leaves);
    e.value = value;
    return e;
}

bool check_expression_24(const std::string& expr_text, const std::vector<long long>& numbers,
                         std::string* diagnostic) {
    if (numbers.size() != 4) {
        throw ContractViolation("check_expression_24 requires exactly four numbers");
    }
    auto e = analyze_expression(expr_text, diagnostic);
    if (!e) return false;
    std::vector<long long> want = numbers;
    std::vector<long long> got = e->leaves;
    std::sort(want.begin(), want.end());
    std::sort(got.begin(), got.end());
    if (want != got) {
        if (diagnostic) *diagnostic = "leaf numbers do not match the given four";
        return false;
    }
    if (e->value != Rational(24)) {
        if (diagnostic) *diagnostic = "evaluates to " + format_rational(e->value) + ", not 24";
        return false;
    }
    return true;
}

namespace {

std::string paren(const std::string& x, char op, const std::string& y) {
    return "(" + x + " " + op + " " + y + ")";
}

// All five binary tree shapes over leaves (a,b,c,d) with ops (p,q,r).
// Two shapes (left-deep and balanced) are not enough: 8/(3-8/3) for {3,3,8,8}
// needs a right-nested subtree.
std::optional<Rational> eval_shape(int shape, const std::array<Rational, 4>& v, char p, char q,
                                   char r) {
    std::optional<Rational> t1, t2;
    switch (shape) {
        case 0:  // ((a p b) q c) r d
            t1 = apply_op(p, v[0], v[1]);
            if (t1) t1 = apply_op(q, *t1, v[2]);
            if (t1) t1 = apply_op(r, *t1, v[3]);
            return t1;
        case 1:  // (a p (b q c)) r d
            t1 = apply_op(q, v[1], v[2]);
            if (t1) t1 = apply_op(p, v[0], *t1);
            if (t1) t1 = apply_op(r, *t1, v[3]);
            return t1;
        case 2:  // (a p b) r (c q d)
            t1 = apply_op(p, v[0], v[1]);
            t2 = apply_op(q, v[2], v[3]);
            if (t1 && t2) return apply_op(r, *t1, *t2);
            return std::nullopt;
        case 3:  // a r ((b p c) q d)
            t1 = apply_op(p, v[1], v[2]);
            if (t1) t1 = apply_op(q, *t1, v[3]);
            if (t1) return apply_op(r, v[0], *t1);
            return std::nullopt;
        case 4:  // a r (b p (c q d))
            t1 = apply_op(q, v[2], v[3]);
            if (t1) t1 = apply_op(p, v[1], *t1);
            if (t1) return apply_op(r, v[0], *t1);
            return std::nullopt;
    }
    return std::nullopt;
}

std::string format_shape(int shape, const std::array<long long, 4>& n, char p, char q, char r) {
    std::array<std::string, 4> s;
    for (int i = 0; i < 4; ++i) s[i] = std::to_string(n[i]);
    std::string out;
    switch (shape) {
        case 0: out = paren(paren(paren(s[0], p, s[1]), q, s[2]), r, s[3]); break;
        case 1: out = paren(paren(s[0], p, paren(s[1], q, s[2])), r, s[3]); break;
        case 2: out = paren(paren(s[0], p, s[1]), r, paren(s[2], q, s[3])); break;
        case 3: out = paren(s[0], r, paren(paren(s[1], p, s[2]), q, s[3])); break;
        case 4: out = paren(s[0], r, paren(s[1], p, paren(s[2], q, s[3]))); break;
    }
    return out.substr(1, out.size() - 2);
}

}  // namespace

std::optional<std::string> solve24_bruteforce(const std::vector<long long>& numbers) {
    if (numbers.size() != 4) {
        throw ContractViolation("solve24_bruteforce requires exactly four numbers");
    }
    for (long long n : numbers) {
        if (n <= 0) throw ContractViolation("solve24_bruteforce requires positive integers");
    }
    std::array<long long, 4> n{numbers[0], numbers[1], numbers[2], numbers[3]};
    std::sort(n.begin(), n.end());
    static constexpr std::array<char, 4> kOps{'+', '-', '*', '/'};
    const Rational target(24);
    do {
        std::array<Rational, 4> v{Rational(n[0]), Rational(n[1]), Rational(n[2]), Rational(n[3])};
        for (char p : kOps) {
            for (char q : kOps) {
                for (char r : kOps) {
                    for (int shape = 0; shape < 5; ++shape) {
                        auto val = eval_shape(shape, v, p, q, r);
                        if (val && *val == target) {
                            return format_shape(shape, n, p, q, r);
                        }
                    }
                }
            }
        }
    } while (std::next_permutation(n.begin(), n.end()));
    return std::nullopt;
}

namespace {

std::mutex g_reach_mu;
std::unordered_map<std::string, bool> g_reach_memo;

bool reachable24_impl(std::vector<Rational> nums) {
    if (nums.empty()) return false;
    if (nums.size() == 1) return nums[0] == Rational(24);
    std::string key = multiset_key(nums);
    {
        std::lock_guard<std::mutex> lock(g_reach_mu);
        auto it = g_reach_memo.find(key);
        if (it != g_reach_memo.end()) return it->second;
    }
    bool found = false;
    for (std::size_t i = 0; i < nums.size() && !found; ++i) {
        for (std::size_t j = i + 1; j < nums.size() && !found; ++j) {
            Rational a = nums[i], b = nums[j];
            std::vector<Rational> rest;
            for (std::size_t k = 0; k < nums.size(); ++k) {
                if (k != i && k != j) rest.push_back(nums[k]);
            }
            std::array<std::optional<Rational>, 6> results{
                a + b, a - b, b - a, a * b,
                b == Rational(0) ? std::nullopt : std::make_optional(a / b),
                a == Rational(0) ? std::nullopt : std::make_optional(b / a)};
            for (const auto& r : results) {
                if (!r) continue;
                rest.push_back(*r);
                if (reachable24_impl(rest)) {
                    found = true;
                    rest.pop_back();
                    break;
                }
                rest.pop_back();
            }
        }
    }
    std::lock_guard<std::mutex> lock(g_reach_mu);
    g_reach_memo.emplace(key, found);
    return found;
}

}  // namespace

bool reachable24(const std::vector<Rational>& nums) { return reachable24_impl(nums); }

bool solvable24(const std::vector<long long>& numbers) {
    std::vector<Rational> v;
    v.reserve(numbers.size());
    for (long long n : numbers) v.emplace_back(n);
    return reachable24(v);
}

std::vector<StepOption> enumerate_steps(const std::vector<Rational>& remaining) {
    std::vector<Rational> v = remaining;
    std::sort(v.begin(), v.end(), [](const Rational& x, const Rational& y) { return y < x; });
    std::vector<StepOption> out;
    std::set<std::pair<Rational, Rational>> seen;
    for (std::size_t i = 0; i < v.size(); ++i) {
        for (std::size_t j = i + 1; j < v.size(); ++j) {
            Rational a = v[i], b = v[j];  // a ≥ b
            if (!seen.insert({a, b}).second) continue;
            std::vector<Rational> rest;
            for (std::size_t k = 0; k < v.size(); ++k) {
                if (k != i && k != j) rest.push_back(v[k]);
            }
            auto add = [&](const Rational& lhs, char op, const Rational& rhs) {
                auto r = apply_op(op, lhs, rhs);
                if (!r) return;
                StepOption s;
                s.a = lhs;
                s.b = rhs;
                s.op = op;
                s.result = *r;
                s.remaining_after = rest;
                s.remaining_after.push_back(*r);
                std::sort(s.remaining_after.begin(), s.remaining_after.end());
                s.keeps_solvable = reachable24(s.remaining_after);
                out.push_back(std::move(s));
            };
            add(a, '+', b);
            add(a, '-', b);
            add(a, '*', b);
            add(a, '/', b);
            if (!(a == b)) {
                add(b, '-', a);
                add(b, '/', a);
            }
        }
    }
    return out;
}

std::string format_step(const StepOption& s) {
    return format_rational(s.a) + " " + s.op + " " + format_rational(s.b) + " = " +
           format_rational(s.result) + " (left: " + format_rationals(s.remaining_after) + ")";
}

std::optional<CanonicalAnswer> extract_numeric_answer(const std::string& text,
                                                      const std::string& ans_format) {
    if (ans_format.empty()) return std::nullopt;
    std::string hay = to_lower(text);
    std::string needle = to_lower(ans_format);
    std::size_t pos = hay.rfind(needle);
    if (pos == std::string::npos) return std::nullopt;
    std::size_t start = pos + needle.size();
    while (start < text.size()) {
        char c = text[start];
        if (std::isspace(static_cast<unsigned char>(c)) || c == ':' || c == '=' || c == '*' ||
            c == '$') {
            ++start;
        } else {
            break;
        }
    }
    std::size_t end = start;
    auto digit_at = [&](std::size_t k) {
        return k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]));
    };
    if (end < text.size() && (text[end] == '-' || text[end] == '+')) ++end;
    bool any_digit = false;
    while (end < text.size()) {
        char c = text[end];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            any_digit = true;
            ++end;
        } else if ((c == '.' || c == ',' || c == '/') && any_digit && digit_at(end + 1)) {
            // interior punctuation only; a sentence-final period stays out
            ++end;
        } else {
            break;
        }
    }
    if (!any_digit) return std::nullopt;
    auto r = parse_rational(text.substr(start, end - start));
    if (!r) return std::nullopt;
    return CanonicalAnswer{AnswerKind::Rational, *r, format_rational(*r)};
}

bool numeric_equiv(const CanonicalAnswer& a, const CanonicalAnswer& b) {
    if (a.kind != b.kind) return false;
    if (a.kind == AnswerKind::Rational) return a.value == b.value;
    return a.text == b.text;
}

std::optional<CanonicalAnswer> canonicalize_answer(TaskKind task, const std::string& answer,
                                                   const std::string& ans_format) {
    if (task == TaskKind::Game24) {
        auto e = analyze_expression(answer);
        if (!e) return std::nullopt;
        return CanonicalAnswer{AnswerKind::Expression, e->value, e->text};
    }
    auto m = extract_numeric_answer(answer, ans_format);
    if (m) return m;
    auto r = parse_rational(trim(answer));
    if (!r) return std::nullopt;
    return CanonicalAnswer{AnswerKind::Rational, *r, format_rational(*r)};
}

std::vector<long long> parse_numbers24(const std::string& input) {
    std::istringstream ss(input);
    std::vector<long long> out;
    long long v = 0;
    while (ss >> v) out.push_back(v);
    if (!ss.eof()) {
        throw ContractViolation("Game of 24 input has non-numeric tokens: " + input);
    }
    if (out.size() != 4) {
        throw ContractViolation("Game of 24 input needs exactly four numbers: " + input);
    }
    for (long long n : out) {
        if (n <= 0) throw ContractViolation("Game of 24 numbers must be positive: " + input);
    }
    return out;
}

std::string multiset_key(std::vector<long long> numbers) {
    std::sort(numbers.begin(), numbers.end());
    std::string out;
    for (std::size_t i = 0; i < numbers.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(numbers[i]);
    }
    return out;
}

std::string multiset_key(std::vector<Rational> numbers) {
    std::sort(numbers.begin(), numbers.end());
    return format_rationals(numbers);
}

KnowledgeBase ingest_kb(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open knowledge base file: " + path);
    KnowledgeBase kb;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw IngestError("knowledge base line " + std::to_string(lineno) +
                              ": malformed JSON");
        }
        if (!j.contains("question") || !j["question"].is_string() ||
            !j.contains("worked_solution") || !j["worked_solution"].is_string()) {
            throw IngestError("knowledge base line " + std::to_string(lineno) +
                              ": needs string fields question and worked_solution");
        }
        std::string q = j["question"].get<std::string>();
        if (trim(q).empty()) {
            throw IngestError("knowledge base line " + std::to_string(lineno) +
                              ": empty question");
        }
        if (!seen.insert(q).second) {
            warn("knowledge base line " + std::to_string(lineno) +
                 ": duplicate question dropped");
            continue;
        }
        kb.entries.push_back({q, j["worked_solution"].get<std::string>()});
    }
    return kb;
}

namespace {

std::string normalize_ground_truth(const std::string& raw) {
    std::string s = raw;
    std::size_t pos = s.rfind("####");
    if (pos != std::string::npos) s = s.substr(pos + 4);
    s = trim(s);
    if (auto r = parse_rational(s)) return format_rational(*r);
    return s;
}

}  // namespace

std::vector<Problem> load_problems(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open problem file: " + path);
    std::vector<Problem> out;
    std::set<std::string> ids;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        const std::string where = "problem file line " + std::to_string(lineno);
        if (j.is_discarded() || !j.is_object()) throw IngestError(where + ": malformed JSON");
        if (!j.contains("id") || !j.contains("task") || !j.contains("input")) {
            throw IngestError(where + ": needs fields id, task, input");
        }
        Problem p;
        p.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
        if (!ids.insert(p.id).second) throw IngestError(where + ": duplicate id " + p.id);
        if (!j["task"].is_string())
            throw IngestError(where + ": task must be a string");
        const auto kind = task_kind_from_string(j["task"].get<std::string>());
        if (!kind)
            throw IngestError(where + ": unknown task " + j["task"].get<std::string>());
        p.task = *kind;
        p.input = j["input"].is_string() ? j["input"].get<std::string>() : j["input"].dump();
        if (j.contains("answer") && !j["answer"].is_null()) {
            std::string a =
                j["answer"].is_string() ? j["answer"].get<std::string>() : j["answer"].dump();
            p.ground_truth = normalize_ground_truth(a);
        }
        try {
            p.validate();
        } catch (const std::exception& e) {
            throw IngestError(where + ": " + e.what());
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace fot

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fot/rational.hpp"
#include "fot/types.hpp"

namespace fot {

/// A parsed arithmetic expression over integer literals with the facts the
/// Game of 24 checker needs: the leaf multiset and the exact value.
struct Expression24 {
    std::string text;
    std::vector<long long> leaves;  // in source order
    Rational value;
};

/// Parses `expr_text` (binary + - * / with parentheses, integer literals, no
/// unary minus) and evaluates it exactly. Unicode operator glyphs and a
/// trailing "= n" are tolerated. Returns nullopt on parse failure or division
/// by zero; `diagnostic`, when given, receives the reason.
std::optional<Expression24> analyze_expression(const std::string& expr_text,
                                               std::string* diagnostic = nullptr);

/// 1 iff expr_text parses, its leaf multiset equals `numbers`, and it
/// evaluates to exactly 24. Never throws on bad input.
bool check_expression_24(const std::string& expr_text, const std::vector<long long>& numbers,
                         std::string* diagnostic = nullptr);

/// Exhaustive solver over all operand orders, operator assignments, and all
/// five binary tree shapes on four leaves. First hit in enumeration order.
std::optional<std::string> solve24_bruteforce(const std::vector<long long>& numbers);

/// Memoized solvability of a four-number multiset (order-insensitive).
bool solvable24(const std::vector<long long>& numbers);

/// Exact reachability of 24 from 1..4 rationals by repeatedly combining two
/// live values with + - * /. This is the ground truth behind value labels.
bool reachable24(const std::vector<Rational>& nums);

/// One legal combining step from a live multiset.
struct StepOption {
    Rational a, b, result;
    char op = '+';
    std::vector<Rational> remaining_after;  // sorted ascending
    bool keeps_solvable = false;            // reachable24(remaining_after)
};

/// All legal steps from `remaining` in a deterministic order (pairs by
/// descending operand value, ops + - * /, then the swapped-operand forms for
/// - and /). Division by zero and value-duplicate steps are skipped.
std::vector<StepOption> enumerate_steps(const std::vector<Rational>& remaining);

/// "a op b = c (left: r1 r2 ...)" with exact-rational formatting.
std::string format_step(const StepOption& s);

enum class AnswerKind { Rational, Expression };

struct CanonicalAnswer {
    AnswerKind kind = AnswerKind::Rational;
    Rational value;    // meaningful when kind == Rational
    std::string text;  // canonical text form for both kinds
};

/// Scans from the end of `text` for the last `ans_format` marker and parses
/// the trailing number (integer, decimal, or a/b) to lowest terms.
/// Returns nullopt when no marker or no parseable number follows it.
std::optional<CanonicalAnswer> extract_numeric_answer(const std::string& text,
                                                      const std::string& ans_format);

/// Exact equality for Rational kinds; Expression kinds compare by canonical
/// text; mismatched kinds are never equivalent.
bool numeric_equiv(const CanonicalAnswer& a, const CanonicalAnswer& b);

/// Task-specific vote-equality form of a raw answer string. Game24 answers
/// canonicalize to a whitespace-stripped expression; math answers to a
/// rational (marker extraction first, then a bare-number parse).
std::optional<CanonicalAnswer> canonicalize_answer(TaskKind task, const std::string& answer,
                                                   const std::string& ans_format);

/// Parses a Game of 24 input line into its four integers.
/// Throws ContractViolation when the input is not four positive integers.
std::vector<long long> parse_numbers24(const std::string& input);

/// Sorted space-joined form, the order-insensitive identity of a multiset.
std::string multiset_key(std::vector<long long> numbers);
std::string multiset_key(std::vector<Rational> numbers);

/// JSON Lines {question, worked_solution} loader; duplicate questions are
/// dropped with a warning. Malformed lines raise IngestError naming the line.
KnowledgeBase ingest_kb(const std::string& path);

/// JSON Lines {id, task, input, answer?} loader. GSM8K-style "#### n"
/// ground truths are normalized to the bare number at ingest.
std::vector<Problem> load_problems(const std::string& path);

}  // namespace fot

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "fot/backend.hpp"
#include "fot/correction.hpp"
#include "fot/prompts.hpp"
#include "fot/tasks.hpp"

using namespace fot;

namespace {

const PromptPack& pack() {
    static const PromptPack p = PromptPack::load();
    return p;
}

CandidateSolution game24_candidate(std::vector<std::string> trace, const std::string& answer,
                                   double score) {
    CandidateSolution c;
    c.answer = answer;
    c.trace = std::move(trace);
    c.score = score;
    c.tree_index = 1;
    return c;
}

const std::vector<long long> kNums{2, 8, 8, 14};
const std::vector<std::string> kGoodTrace{"14 - 8 = 6", "6 * 8 = 48", "48 / 2 = 24"};

}  // namespace

TEST_CASE("correction config validation") {
    CorrectionConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.threshold = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = CorrectionConfig{};
    cfg.max_correction_rounds = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("trace replay accepts an exact on-path derivation") {
    const auto r = game24_rule_check_lines(kGoodTrace, kNums);
    CHECK(r.valid);
    CHECK_FALSE(r.first_violation.has_value());
}

TEST_CASE("trace replay pinpoints the first broken step") {
    auto r = game24_rule_check_lines({"14 - 8 = 6", "6 * 8 = 47", "47 / 2 = 24"}, kNums);
    CHECK_FALSE(r.valid);
    REQUIRE(r.first_violation.has_value());
    CHECK(*r.first_violation == 2);

    // an operand never drawn from the live numbers breaks immediately
    r = game24_rule_check_lines({"14 - 9 = 5", "5 * 8 = 40", "40 - 2 = 38"}, kNums);
    CHECK_FALSE(r.valid);
    REQUIRE(r.first_violation.has_value());
    CHECK(*r.first_violation == 1);

    // arithmetic fine but the end state is not 24
    r = game24_rule_check_lines({"14 - 8 = 6", "6 + 8 = 14", "14 + 2 = 16"}, kNums);
    CHECK_FALSE(r.valid);
    REQUIRE(r.first_violation.has_value());
    CHECK(*r.first_violation == 3);

    CHECK_THROWS_AS(game24_rule_check({}, kNums), ContractViolation);
}

TEST_CASE("rule corrector repairs miscomputed results into a verified answer") {
    const RuleCorrector rc = make_game24_rule_corrector();
    // the middle step claims 47; later steps still reference the honest 48
    const auto broken = game24_candidate({"14 - 8 = 6", "6 * 8 = 47", "48 / 2 = 24"},
                                         "(47) / 2", 0.2);
    const CandidateSolution fixed = rc.fix(broken, "2 8 8 14");
    CHECK(fixed.score == 1.0);
    CHECK(check_expression_24(fixed.answer, kNums));
    CHECK(game24_rule_check_lines(fixed.trace, kNums).valid);
}

TEST_CASE("rule corrector demotes what it cannot repair but never deletes") {
    const RuleCorrector rc = make_game24_rule_corrector();

    // dead operand: no honest replay exists
    auto broken = game24_candidate({"14 - 9 = 5", "5 * 8 = 40", "40 - 2 = 38"},
                                   "(14 - 9) * 8 - 2", 0.7);
    CandidateSolution demoted = rc.fix(broken, "2 8 8 14");
    CHECK(demoted.score == 0.0);
    CHECK_FALSE(demoted.answer.empty());

    // a corrupted value propagated into a later operand: the honest replay
    // produces 48, so the claimed 47 is no longer live downstream
    broken = game24_candidate({"14 - 8 = 6", "6 * 8 = 47", "47 / 2 = 24"}, "(47) / 2", 0.7);
    demoted = rc.fix(broken, "2 8 8 14");
    CHECK(demoted.score == 0.0);
    CHECK(demoted.answer == "(47) / 2");

    // arithmetic repairs fine but the result is not 24
    broken = game24_candidate({"14 - 8 = 6", "6 + 8 = 14", "14 + 2 = 16"}, "14 - 8 + 8 + 2",
                              0.7);
    demoted = rc.fix(broken, "2 8 8 14");
    CHECK(demoted.score == 0.0);
    REQUIRE(analyze_expression(demoted.answer).has_value());
    CHECK(analyze_expression(demoted.answer)->value == Rational(16));

    // unparseable trace lines
    broken = game24_candidate({"just vibes"}, "2 + 8 + 8 + 14", 0.9);
    demoted = rc.fix(broken, "2 8 8 14");
    CHECK(demoted.score == 0.0);
    CHECK(demoted.answer == "2 + 8 + 8 + 14");
}

TEST_CASE("rule corrector keeps already-valid candidates at full score") {
    const RuleCorrector rc = make_game24_rule_corrector();
    const auto good = game24_candidate(kGoodTrace, "(14 - 8) * 8 / 2", 0.4);
    const CandidateSolution kept = rc.fix(good, "2 8 8 14");
    CHECK(kept.score == 1.0);
    CHECK(check_expression_24(kept.answer, kNums));
}

TEST_CASE("self-correction is a no-op at or above the threshold") {
    ScriptedBackend b;  // any call would throw: proves zero calls
    CorrectionConfig cfg;
    cfg.threshold = 0.5;
    const KnowledgeBase kb;

    CandidateSolution c;
    c.answer = "72";
    c.score = 0.9;
    CandidateSolution out =
        self_correct(c, "question", cfg, nullptr, kb, b, pack(), TaskKind::MathWord);
    CHECK(out.answer == "72");
    CHECK(out.score == 0.9);
    CHECK_FALSE(out.degraded);
    CHECK(b.stats().invocations == 0);

    c.score = 0.5;  // boundary: score == threshold stays untouched
    out = self_correct(c, "question", cfg, nullptr, kb, b, pack(), TaskKind::MathWord);
    CHECK_FALSE(out.degraded);
    CHECK(b.stats().invocations == 0);
}

TEST_CASE("self-correction with rules present stays backend-free") {
    ScriptedBackend b;
    CorrectionConfig cfg;
    cfg.threshold = 0.5;
    const KnowledgeBase kb;
    const RuleCorrector rc = make_game24_rule_corrector();

    const auto broken = game24_candidate({"14 - 8 = 6", "6 * 8 = 47", "48 / 2 = 24"},
                                         "(47) / 2", 0.1);
    const CandidateSolution out =
        self_correct(broken, "2 8 8 14", cfg, &rc, kb, b, pack(), TaskKind::Game24);
    CHECK(out.score == 1.0);
    CHECK(check_expression_24(out.answer, kNums));
    CHECK(b.stats().invocations == 0);
}

TEST_CASE("regeneration rescores and stops once the threshold clears") {
    ScriptedBackend b;
    b.set_fallback([](const CompletionRequest& r) -> std::optional<std::string> {
        if (r.prompt.find("Analyze this answer Strictly") != std::string::npos) {
            if (r.prompt.find("72") != std::string::npos) return "[Score] 80";
            return "[Score] 30";
        }
        return "[reasoning process] recount. [Verification] ok. The answer is 72.";
    });
    CorrectionConfig cfg;
    cfg.threshold = 0.6;
    cfg.max_correction_rounds = 3;
    const KnowledgeBase kb;

    CandidateSolution c;
    c.answer = "10";
    c.score = 0.3;
    const CandidateSolution out =
        self_correct(c, "How many apples?", cfg, nullptr, kb, b, pack(), TaskKind::MathWord);
    CHECK(out.answer == "72");
    CHECK(out.score == doctest::Approx(0.8));
    CHECK_FALSE(out.degraded);
    CHECK(b.stats().invocations == 2);  // one refine + one critic, then stop
}

TEST_CASE("regeneration keeps the best version when nothing clears the bar") {
    ScriptedBackend b;
    b.set_fallback([](const CompletionRequest& r) -> std::optional<std::string> {
        if (r.prompt.find("Analyze this answer Strictly") != std::string::npos)
            return "[Score] 10";
        return "The answer is 5.";
    });
    CorrectionConfig cfg;
    cfg.threshold = 0.6;
    cfg.max_correction_rounds = 2;
    const KnowledgeBase kb;

    CandidateSolution c;
    c.answer = "10";
    c.score = 0.3;
    const CandidateSolution out =
        self_correct(c, "How many apples?", cfg, nullptr, kb, b, pack(), TaskKind::MathWord);
    CHECK(out.answer == "10");  // original still the best seen
    CHECK(out.score == doctest::Approx(0.3));
    CHECK(b.stats().invocations == 4);  // two full rounds, then give up
}

TEST_CASE("regeneration conditions on the retrieved worked solution") {
    bool saw_exemplar = false;
    ScriptedBackend b;
    b.set_fallback([&](const CompletionRequest& r) -> std::optional<std::string> {
        if (r.prompt.find("Analyze this answer Strictly") != std::string::npos)
            return "[Score] 90";
        if (r.prompt.find("count the apples one basket at a time") != std::string::npos)
            saw_exemplar = true;
        return "The answer is 72.";
    });
    CorrectionConfig cfg;
    cfg.threshold = 0.6;
    KnowledgeBase kb;
    kb.entries.push_back({"How many apples are in the baskets?",
                          "count the apples one basket at a time"});

    CandidateSolution c;
    c.answer = "10";
    c.score = 0.3;
    self_correct(c, "How many apples are in the baskets?", cfg, nullptr, kb, b, pack(),
                 TaskKind::MathWord);
    CHECK(saw_exemplar);
}

TEST_CASE("a backend failure mid-correction degrades gracefully") {
    ScriptedBackend b;
    b.set_fallback([](const CompletionRequest& r) -> std::optional<std::string> {
        if (r.prompt.find("Analyze this answer Strictly") != std::string::npos)
            return std::nullopt;  // the critic is down
        return "The answer is 72.";
    });
    CorrectionConfig cfg;
    cfg.threshold = 0.6;
    const KnowledgeBase kb;

    CandidateSolution c;
    c.answer = "10";
    c.score = 0.3;
    const CandidateSolution out =
        self_correct(c, "How many apples?", cfg, nullptr, kb, b, pack(), TaskKind::MathWord);
    CHECK(out.degraded);
    CHECK(out.answer == "10");
    CHECK(out.score == doctest::Approx(0.3));
}

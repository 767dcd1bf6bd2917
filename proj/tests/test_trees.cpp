#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "fot/backend.hpp"
#include "fot/oracle_backend.hpp"
#include "fot/prompts.hpp"
#include "fot/tasks.hpp"
#include "fot/trees.hpp"

using namespace fot;

namespace {

const PromptPack& pack() {
    static const PromptPack p = PromptPack::load();
    return p;
}

TreeRunContext context(int tree_index = 1) {
    TreeRunContext ctx;
    ctx.pack = &pack();
    ctx.tree_index = tree_index;
    return ctx;
}

Problem game24(const std::string& input) {
    Problem p;
    p.id = "t";
    p.task = TaskKind::Game24;
    p.input = input;
    return p;
}

Problem math(const std::string& question) {
    Problem p;
    p.id = "t";
    p.task = TaskKind::MathWord;
    p.input = question;
    return p;
}

struct WarnCapture {
    std::vector<std::string> lines;
    WarnCapture() {
        set_warn_handler([this](const std::string& m) { lines.push_back(m); });
    }
    ~WarnCapture() { set_warn_handler({}); }
};

const std::vector<Rational> kHard{Rational(3), Rational(3), Rational(8), Rational(8)};

}  // namespace

TEST_CASE("proposal parsing accepts exact legal steps and recomputes remainders") {
    const auto steps = parse_proposal("8 / 3 = 8/3 (left: 3 8/3 8)", kHard);
    REQUIRE(steps.size() == 1);
    CHECK(steps[0].expression == "8 / 3 = 8/3");
    CHECK(steps[0].lhs == Rational(8));
    CHECK(steps[0].rhs == Rational(3));
    CHECK(steps[0].op == '/');
    CHECK(steps[0].produced == Rational(8, 3));
    CHECK(steps[0].remaining ==
          std::vector<Rational>{Rational(8, 3), Rational(3), Rational(8)});
}

TEST_CASE("proposal parsing treats the left claim as advisory") {
    // wrong "(left: ...)" text must not corrupt the recomputed remainder
    const auto steps = parse_proposal("3 + 3 = 6 (left: 1 1 1)", kHard);
    REQUIRE(steps.size() == 1);
    CHECK(steps[0].remaining ==
          std::vector<Rational>{Rational(6), Rational(8), Rational(8)});
}

TEST_CASE("proposal parsing accepts compact spacing and negatives") {
    CHECK(parse_proposal("3+3 = 6", kHard).size() == 1);
    CHECK(parse_proposal("3 + 3=6", kHard).size() == 1);
    const auto neg = parse_proposal("3 - 8 = -5 (left: -5 3 8)", kHard);
    REQUIRE(neg.size() == 1);
    CHECK(neg[0].produced == Rational(-5));
}

TEST_CASE("proposal parsing drops wrong arithmetic, dead operands and duplicates") {
    CHECK(parse_proposal("8 + 8 = 17 (left: 3 3 17)", kHard).empty());  // miscomputed
    CHECK(parse_proposal("9 + 3 = 12 (left: 3 8 12)", kHard).empty());  // 9 not live
    CHECK(parse_proposal("8 / 0 = 0", {Rational(8), Rational(0)}).empty());
    const auto deduped = parse_proposal("3 + 3 = 6\n3 + 3 = 6\n8 + 8 = 16", kHard);
    CHECK(deduped.size() == 2);
    const auto mixed = parse_proposal("I think:\n3 + 3 = 6\n(ponders deeply)", kHard);
    CHECK(mixed.size() == 1);
    CHECK(parse_proposal("", kHard).empty());
}

TEST_CASE("proposal parsing requires a live parent multiset") {
    CHECK_THROWS_AS(parse_proposal("1 + 1 = 2", {}), ContractViolation);
}

TEST_CASE("activation indicator needs every layer to carry a valid step") {
    LayerRecord good;
    good.valid = {"3 + 3 = 6"};
    LayerRecord empty;
    CHECK(activation_indicator({}) == 0);
    CHECK(activation_indicator({good}) == 1);
    CHECK(activation_indicator({good, good, good}) == 1);
    CHECK(activation_indicator({good, empty, good}) == 0);
}

TEST_CASE("value labels map reply keywords, latest mention wins") {
    WarnCapture capture;
    ScriptedBackend b;
    const TreeRunContext ctx = context();
    const std::string prompt = render_template(pack().game24_value, {{"input", "4 6"}});
    b.add_reply(prompt, "4 + 6 = 10 too small... but 4 * 6 = 24\nsure");
    b.add_reply(prompt, "hard to say\nlikely");
    b.add_reply(prompt, "cannot reach\nimpossible");
    b.add_reply(prompt, "sure at first glance, on reflection impossible");
    b.add_reply(prompt, "no keyword at all");

    CHECK(value_state("4 6", b, ctx, 0) == ValueLabel::Sure);
    CHECK(value_state("4 6", b, ctx, 0) == ValueLabel::Likely);
    CHECK(value_state("4 6", b, ctx, 0) == ValueLabel::Impossible);
    CHECK(value_state("4 6", b, ctx, 0) == ValueLabel::Impossible);
    CHECK(value_state("4 6", b, ctx, 0) == ValueLabel::Likely);  // fallback
    CHECK(capture.lines.size() == 1);
}

TEST_CASE("beam search solves the hard instance against the truthful oracle") {
    auto backend = make_oracle_backend(TaskKind::Game24, OracleBehavior::uniform(1.0, 11));
    TreeEngineConfig cfg;
    cfg.kind = TreeEngineKind::ToT;
    cfg.seed = 77;
    const TreeOutcome out = tot_search(game24("3 3 8 8"), cfg, *backend, context());

    CHECK(out.activation == 1);
    REQUIRE(out.candidate.has_value());
    CHECK(check_expression_24(out.candidate->answer, {3, 3, 8, 8}));
    CHECK(out.candidate->score == 1.0);
    CHECK(out.candidate->trace.size() == 3);
    REQUIRE(out.layers.size() == 3);
    for (const auto& layer : out.layers) {
        CHECK_FALSE(layer.valid.empty());
        CHECK(layer.kept.size() <= 2);
        CHECK(layer.valid.size() <= layer.generated.size());
    }
    CHECK(out.invocations == out.gen_invocations + out.score_invocations);
    CHECK(backend->stats().invocations == out.invocations);
}

TEST_CASE("beam search is deterministic for a fixed seed") {
    TreeEngineConfig cfg;
    cfg.seed = 5;
    auto b1 = make_oracle_backend(TaskKind::Game24, OracleBehavior::uniform(0.7, 21));
    auto b2 = make_oracle_backend(TaskKind::Game24, OracleBehavior::uniform(0.7, 21));
    const TreeOutcome o1 = tot_search(game24("2 5 5 13"), cfg, *b1, context());
    const TreeOutcome o2 = tot_search(game24("2 5 5 13"), cfg, *b2, context());
    CHECK(o1.activation == o2.activation);
    CHECK(o1.invocations == o2.invocations);
    CHECK(o1.candidate.has_value() == o2.candidate.has_value());
    if (o1.candidate) CHECK(o1.candidate->answer == o2.candidate->answer);
    REQUIRE(o1.layers.size() == o2.layers.size());
    for (std::size_t i = 0; i < o1.layers.size(); ++i)
        CHECK(o1.layers[i].kept == o2.layers[i].kept);
}

namespace {

// Proposes the sum and product of the first two live numbers named in the
// prompt's final "Input:" line; values everything as impossible.
std::unique_ptr<ScriptedBackend> all_impossible_backend() {
    auto b = std::make_unique<ScriptedBackend>();
    b->set_fallback([](const CompletionRequest& r) -> std::optional<std::string> {
        if (r.prompt.find("Evaluate if given numbers") != std::string::npos)
            return "cannot reach the target\nimpossible";
        const auto pos = r.prompt.rfind("Input:");
        if (pos == std::string::npos) return std::nullopt;
        std::string line = r.prompt.substr(pos + 6);
        if (const auto nl = line.find('\n'); nl != std::string::npos) line = line.substr(0, nl);
        std::vector<Rational> nums;
        std::string tok;
        for (char c : line) {
            if (c == ' ' || c == '\'' ) {
                if (auto v = parse_rational(tok)) nums.push_back(*v);
                tok.clear();
            } else {
                tok += c;
            }
        }
        if (auto v = parse_rational(tok)) nums.push_back(*v);
        if (nums.size() < 2) return std::nullopt;
        const Rational sum = nums[0] + nums[1];
        const Rational prod = nums[0] * nums[1];
        return format_rational(nums[0]) + " + " + format_rational(nums[1]) + " = " +
               format_rational(sum) + "\n" + format_rational(nums[0]) + " * " +
               format_rational(nums[1]) + " = " + format_rational(prod);
    });
    return b;
}

}  // namespace

TEST_CASE("sparse activation prunes impossible branches; disabling it keeps them") {
    TreeEngineConfig cfg;
    cfg.seed = 3;

    // every child is labeled impossible: a sparse tree loses its whole beam
    // and deactivates without a candidate
    auto pruned_backend = all_impossible_backend();
    TreeRunContext sparse = context();
    sparse.sparse_activation = true;
    const TreeOutcome pruned = tot_search(game24("3 3 8 8"), cfg, *pruned_backend, sparse);
    CHECK(pruned.activation == 0);
    CHECK_FALSE(pruned.candidate.has_value());
    CHECK(pruned.score_invocations > 0);  // labels were still collected

    // identical backend with sparse off: labels are recorded but nothing is
    // pruned, so the search runs to the bottom and stays active
    auto dense_backend = all_impossible_backend();
    TreeRunContext dense = context();
    dense.sparse_activation = false;
    const TreeOutcome kept = tot_search(game24("3 3 8 8"), cfg, *dense_backend, dense);
    CHECK(kept.activation == 1);
    CHECK(kept.score_invocations >= pruned.score_invocations);
    REQUIRE(kept.layers.size() == 3);
    for (const auto& layer : kept.layers) CHECK_FALSE(layer.kept.empty());
    REQUIRE(kept.candidate.has_value());
    CHECK(kept.candidate->score == 0.0);  // wrong answer, but structurally complete
}

TEST_CASE("a backend failure mid-search deactivates the tree but keeps layers") {
    auto backend = make_oracle_backend(TaskKind::Game24, OracleBehavior::uniform(1.0, 2));
    backend->set_budget(3);  // dies during the first value sweep
    TreeEngineConfig cfg;
    cfg.seed = 1;
    const TreeOutcome out = tot_search(game24("2 8 8 14"), cfg, *backend, context());
    CHECK(out.activation == 0);
    CHECK_FALSE(out.candidate.has_value());
    CHECK_FALSE(out.error_note.empty());
    CHECK_FALSE(out.layers.empty());
    CHECK(out.invocations == 3);
}

TEST_CASE("cancellation wins over work") {
    auto backend = make_oracle_backend(TaskKind::Game24, OracleBehavior::uniform(1.0, 2));
    TreeRunContext ctx = context();
    ctx.cancelled = [] { return true; };
    TreeEngineConfig cfg;
    const TreeOutcome out = tot_search(game24("2 8 8 14"), cfg, *backend, ctx);
    CHECK(out.cancelled);
    CHECK(out.activation == 0);
    CHECK_FALSE(out.candidate.has_value());
}

TEST_CASE("rollout search finds and keeps the best-scoring refinement") {
    ScriptedBackend b;
    // the refine template also says "Let's think step by step", so match the
    // refine anchor first, exactly like the prompt classifiers do
    b.set_fallback([](const CompletionRequest& r) -> std::optional<std::string> {
        if (r.prompt.find("Analyze this answer Strictly") != std::string::npos) {
            if (r.prompt.find("The answer is 10") != std::string::npos) return "[Score] 40";
            return "[Score] 95";
        }
        if (r.prompt.find("Please refine the your answer") != std::string::npos)
            return "[reasoning process] recount. [Verification] ok. The answer is 72.";
        if (r.prompt.find("Let's think step by step") != std::string::npos)
            return "Rough guess. The answer is 10.";
        return std::nullopt;
    });

    TreeEngineConfig cfg;
    cfg.kind = TreeEngineKind::MCTSr;
    cfg.rollouts = 2;
    cfg.seed = 4;
    const TreeOutcome out = mctsr_search(math("How many apples?"), cfg, b, context());

    CHECK(out.activation == 1);
    REQUIRE(out.candidate.has_value());
    CHECK(out.candidate->answer == "72");
    CHECK(out.candidate->score == doctest::Approx(0.95));
    REQUIRE(out.layers.size() == 3);  // root + 2 rollouts
    CHECK(out.invocations == 6);     // (1 + 2) generations and as many critic calls
    CHECK(out.gen_invocations == 3);
    CHECK(out.score_invocations == 3);
}

TEST_CASE("rollout search with zero rollouts still scores the root") {
    auto behavior = OracleBehavior::uniform(1.0, 8);
    behavior.math_truth["Q?"] = "5";
    auto backend = make_oracle_backend(TaskKind::MathWord, behavior);
    TreeEngineConfig cfg;
    cfg.kind = TreeEngineKind::MCTSr;
    cfg.rollouts = 0;
    const TreeOutcome out = mctsr_search(math("Q?"), cfg, *backend, context());
    CHECK(out.invocations == 2);
    REQUIRE(out.candidate.has_value());
    CHECK(out.candidate->answer == "5");
    CHECK(out.activation == 1);
}

TEST_CASE("rollout search deactivates when no reply ever parses") {
    ScriptedBackend b;
    b.set_fallback([](const CompletionRequest& r) -> std::optional<std::string> {
        if (r.prompt.find("Analyze this answer Strictly") != std::string::npos)
            return "[Score] 50";
        return "I have no idea about numbers.";
    });
    TreeEngineConfig cfg;
    cfg.kind = TreeEngineKind::MCTSr;
    cfg.rollouts = 2;
    const TreeOutcome out = mctsr_search(math("Q?"), cfg, b, context());
    CHECK(out.activation == 0);
    CHECK_FALSE(out.candidate.has_value());
}

TEST_CASE("rollout search survives a dead backend with an error note") {
    ScriptedBackend b;  // no scripts, no fallback: first call fails
    TreeEngineConfig cfg;
    cfg.kind = TreeEngineKind::MCTSr;
    const TreeOutcome out = mctsr_search(math("Q?"), cfg, b, context());
    CHECK(out.activation == 0);
    CHECK_FALSE(out.error_note.empty());
    CHECK(out.invocations == 0);
}

TEST_CASE("engine config validation") {
    TreeEngineConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.beam_width = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TreeEngineConfig{};
    cfg.max_depth = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TreeEngineConfig{};
    cfg.rollouts = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "fot/backend.hpp"
#include "fot/http_backend.hpp"
#include "fot/oracle_backend.hpp"
#include "fot/prompts.hpp"
#include "fot/rational.hpp"
#include "fot/tasks.hpp"
#include "fot/trees.hpp"

using namespace fot;
using nlohmann::json;

namespace {

CompletionRequest req(const std::string& prompt, double temp = 0.0) {
    CompletionRequest r;
    r.prompt = prompt;
    r.temperature = temp;
    return r;
}

struct SilentWarnings {
    SilentWarnings() {
        set_warn_handler([](const std::string&) {});
    }
    ~SilentWarnings() { set_warn_handler({}); }
};

}  // namespace

TEST_CASE("request validation rejects empty prompts and bad knobs") {
    ScriptedBackend b;
    CHECK_THROWS_AS(b.complete(req("")), ContractViolation);
    CompletionRequest r = req("x");
    r.temperature = -0.5;
    CHECK_THROWS_AS(b.complete(r), ContractViolation);
    r = req("x");
    r.max_tokens = 0;
    CHECK_THROWS_AS(b.complete(r), ContractViolation);
}

TEST_CASE("scripted backend plays replies in order and the last one sticks") {
    ScriptedBackend b;
    b.add_reply("p", "first");
    b.add_reply("p", "second");
    CHECK(b.complete(req("p")).text == "first");
    CHECK(b.complete(req("p")).text == "second");
    CHECK(b.complete(req("p")).text == "second");
    CHECK(b.stats().invocations == 3);
    CHECK(b.transcript().size() == 3);
}

TEST_CASE("scripted backend without an entry raises a non-retryable error") {
    ScriptedBackend b;
    try {
        b.complete(req("never scripted"));
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK_FALSE(e.retryable());
    }
    CHECK(b.stats().invocations == 0);  // failures never count
}

TEST_CASE("scripted fallback answers unscripted prompts") {
    ScriptedBackend b;
    b.set_fallback([](const CompletionRequest& r) -> std::optional<std::string> {
        if (r.prompt == "decline") return std::nullopt;
        return "fallback reply";
    });
    CHECK(b.complete(req("anything")).text == "fallback reply");
    CHECK_THROWS_AS(b.complete(req("decline")), BackendError);
}

TEST_CASE("stats count only successes and approximate tokens by words") {
    ScriptedBackend b;
    b.add_reply("one two three", "a b");
    const BackendStats before = b.stats();
    CHECK(before.invocations == 0);
    b.complete(req("one two three"));
    const BackendStats after = b.stats();
    CHECK(after.invocations == 1);
    CHECK(after.tokens_in == 3);
    CHECK(after.tokens_out == 2);
}

TEST_CASE("budget is a soft cap raising BudgetError") {
    ScriptedBackend b;
    b.add_reply("p", "r");
    b.set_budget(2);
    b.complete(req("p"));
    b.complete(req("p"));
    CHECK_THROWS_AS(b.complete(req("p")), BudgetError);
    b.set_budget(std::nullopt);
    CHECK_NOTHROW(b.complete(req("p")));
}

TEST_CASE("counting wrapper meters without hiding inner accounting") {
    ScriptedBackend inner;
    inner.add_reply("p", "r");
    CountingBackend meter(inner);
    meter.complete(req("p"));
    CHECK(meter.stats().invocations == 1);
    CHECK(inner.stats().invocations == 1);
}

TEST_CASE("critic score parsing clamps and takes the last marker") {
    CHECK(parse_critic_score("[Score] 85") == 85.0);
    CHECK(parse_critic_score("text [score]: 40 more") == 40.0);
    CHECK(parse_critic_score("[Score] 20 then [Score] 90") == 90.0);
    CHECK(parse_critic_score("[Score] 400") == 100.0);
    CHECK(parse_critic_score("[Score] -5") == 0.0);
    CHECK_FALSE(parse_critic_score("no marker").has_value());
    CHECK_FALSE(parse_critic_score("[Score] eloquent").has_value());
}

TEST_CASE("score_answer renders the critic prompt and scales to [0,1]") {
    SilentWarnings quiet;
    const PromptPack pack = PromptPack::load();
    ScriptedBackend b;
    b.set_fallback([](const CompletionRequest& r) -> std::optional<std::string> {
        REQUIRE(r.temperature == 0.0);
        REQUIRE(r.prompt.find("What is 6*7?") != std::string::npos);
        REQUIRE(r.prompt.find("42") != std::string::npos);
        return "[Analyst] fine. [Score] 91";
    });
    CHECK(score_answer("What is 6*7?", "42", b, pack) == doctest::Approx(0.91));

    ScriptedBackend unparseable;
    unparseable.set_fallback(
        [](const CompletionRequest&) -> std::optional<std::string> { return "mumble"; });
    CHECK(score_answer("q", "a", unparseable, pack) == 0.0);

    CHECK_THROWS_AS(score_answer("", "a", b, pack), ContractViolation);
}

TEST_CASE("token confidence is exp of the mean log-probability") {
    Completion c;
    c.token_scores = std::vector<double>{-0.1, -0.2};
    CHECK(mean_token_confidence(c) == doctest::Approx(std::exp(-0.15)));
    Completion none;
    CHECK_THROWS_AS(mean_token_confidence(none), UnsupportedCapability);
    none.token_scores = std::vector<double>{};
    CHECK_THROWS_AS(mean_token_confidence(none), UnsupportedCapability);
}

TEST_CASE("scripted token scores ride along when requested") {
    ScriptedBackend b;
    b.add_reply("p", "r");
    b.set_token_scores({-0.1, -0.3});
    CompletionRequest r = req("p");
    r.want_token_scores = true;
    const Completion c = b.complete(r);
    REQUIRE(c.token_scores.has_value());
    CHECK(c.token_scores->size() == 2);
}

// ── task oracle backend ─────────────────────────────────────────────

TEST_CASE("oracle replies are a pure function of seed and prompt bytes") {
    const OracleBehavior b = OracleBehavior::uniform(0.5, 42);
    auto first = make_oracle_backend(TaskKind::Game24, b);
    auto second = make_oracle_backend(TaskKind::Game24, b);
    const PromptPack pack = PromptPack::load();
    const std::string p1 = render_template(pack.game24_propose, {{"input", "2 8 8 14"}});
    const std::string p2 = render_template(pack.game24_value, {{"input", "4 6"}});

    CompletionRequest r1 = req(p1);
    r1.seed = 7;
    CompletionRequest r2 = req(p2);
    r2.seed = 9;

    // interleaved versus reversed call order must not change any reply
    const std::string a1 = first->complete(r1).text;
    const std::string a2 = first->complete(r2).text;
    const std::string b2 = second->complete(r2).text;
    const std::string b1 = second->complete(r1).text;
    CHECK(a1 == b1);
    CHECK(a2 == b2);
}

TEST_CASE("oracle propose lines are legal steps from the prompt's numbers") {
    auto b = make_oracle_backend(TaskKind::Game24, OracleBehavior::uniform(1.0, 3));
    const PromptPack pack = PromptPack::load();
    const std::string prompt = render_template(pack.game24_propose, {{"input", "2 8 8 14"}});
    const std::string reply = b->complete(req(prompt)).text;

    std::vector<Rational> remaining{Rational(2), Rational(8), Rational(8), Rational(14)};
    std::size_t lines = 0;
    std::size_t pos = 0;
    while (pos < reply.size()) {
        std::size_t end = reply.find('\n', pos);
        if (end == std::string::npos) end = reply.size();
        const std::string line = reply.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        ++lines;
        // every proposed line must survive the strict proposal parser
        CHECK(parse_proposal(line, remaining).size() == 1);
    }
    CHECK(lines >= 1);
}

TEST_CASE("oracle value labels track exact reachability at success 1") {
    auto b = make_oracle_backend(TaskKind::Game24, OracleBehavior::uniform(1.0, 3));
    const PromptPack pack = PromptPack::load();

    const std::string sure =
        b->complete(req(render_template(pack.game24_value, {{"input", "4 6"}}))).text;
    CHECK(sure.find("sure") != std::string::npos);

    const std::string nope =
        b->complete(req(render_template(pack.game24_value, {{"input", "1 1"}}))).text;
    CHECK(nope.find("impossible") != std::string::npos);
}

TEST_CASE("oracle value labels flip at success 0") {
    auto b = make_oracle_backend(TaskKind::Game24, OracleBehavior::uniform(0.0, 3));
    const PromptPack pack = PromptPack::load();
    const std::string flipped =
        b->complete(req(render_template(pack.game24_value, {{"input", "4 6"}}))).text;
    CHECK(flipped.find("impossible") != std::string::npos);
}

TEST_CASE("oracle critic scores correct Game24 answers high and wrong ones low") {
    const PromptPack pack = PromptPack::load();
    auto good = make_oracle_backend(TaskKind::Game24, OracleBehavior::uniform(1.0, 5));
    CHECK(score_answer("2 8 8 14", "(8 * (14 - 8)) / 2", *good, pack) >= 0.85);
    CHECK(score_answer("2 8 8 14", "2 + 8 + 8 + 14", *good, pack) <= 0.35);
}

TEST_CASE("oracle critic consults the math truth table") {
    const PromptPack pack = PromptPack::load();
    OracleBehavior b = OracleBehavior::uniform(1.0, 5);
    b.math_truth["How many apples?"] = "72";
    auto backend = make_oracle_backend(TaskKind::MathWord, b);
    CHECK(score_answer("How many apples?", "72", *backend, pack) >= 0.85);
    CHECK(score_answer("How many apples?", "71", *backend, pack) <= 0.35);
}

TEST_CASE("oracle zero-shot and refine recover the configured truth") {
    const PromptPack pack = PromptPack::load();
    OracleBehavior b = OracleBehavior::uniform(1.0, 5);
    b.math_truth["How many apples?"] = "72";
    auto backend = make_oracle_backend(TaskKind::MathWord, b);

    const std::string zs = render_template(
        pack.math_zero_shot, {{"question", "How many apples?"}, {"ans_format", b.ans_format}});
    auto got = extract_numeric_answer(backend->complete(req(zs)).text, b.ans_format);
    REQUIRE(got.has_value());
    CHECK(got->value == Rational(72));

    const std::string refine =
        render_template(pack.math_refine,
                        {{"question", "How many apples?"}, {"ans_format", b.ans_format}}) +
        "\n\nPrevious answer:\n71";
    auto refined = extract_numeric_answer(backend->complete(req(refine)).text, b.ans_format);
    REQUIRE(refined.has_value());
    CHECK(refined->value == Rational(72));
}

TEST_CASE("oracle expert picks the listed truthful answer") {
    const PromptPack pack = PromptPack::load();
    auto b = make_oracle_backend(TaskKind::Game24, OracleBehavior::uniform(1.0, 5));
    const std::string prompt = render_template(
        pack.math_expert,
        {{"question", "2 8 8 14"},
         {"answers_list", "2 + 8 + 8 + 14 (2 votes), (8 * (14 - 8)) / 2 (1 vote)"},
         {"ans_format", "The answer is"}});
    const std::string reply = b->complete(req(prompt)).text;
    CHECK(reply.find("(8 * (14 - 8)) / 2") != std::string::npos);
}

TEST_CASE("oracle rejects prompts it cannot classify") {
    auto b = make_oracle_backend(TaskKind::Game24, OracleBehavior::uniform(1.0, 5));
    try {
        b->complete(req("gibberish prompt with no template text"));
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK_FALSE(e.retryable());
    }
}

TEST_CASE("oracle behavior validation") {
    OracleBehavior b = OracleBehavior::uniform(0.5, 1);
    CHECK_NOTHROW(b.validate());
    b.critic_success = 1.5;
    CHECK_THROWS_AS(b.validate(), ConfigError);
    CHECK_THROWS_AS(make_oracle_backend(TaskKind::Game24, b), ConfigError);
}

// ── HTTP backend against a local server ─────────────────────────────

namespace {

struct LocalServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    explicit LocalServer(httplib::Server::Handler handler) {
        server.Post("/v1/chat/completions", std::move(handler));
        port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        thread.join();
    }

    HttpBackendConfig config() const {
        HttpBackendConfig cfg;
        cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
        cfg.model = "test-model";
        cfg.backoff_ms = 1;
        return cfg;
    }
};

json ok_payload(const std::string& content, bool with_logprobs) {
    json choice{{"message", {{"role", "assistant"}, {"content", content}}},
                {"finish_reason", "stop"}};
    if (with_logprobs) {
        choice["logprobs"] = {
            {"content", json::array({{{"logprob", -0.1}}, {{"logprob", -0.2}}})}};
    }
    return json{{"choices", json::array({choice})}};
}

}  // namespace

TEST_CASE("http backend round-trips a chat completion and forwards knobs verbatim") {
    ::setenv("FOT_API_KEY", "sekrit", 1);
    json seen;
    std::string auth;
    LocalServer srv([&](const httplib::Request& q, httplib::Response& s) {
        seen = json::parse(q.body);
        auth = q.get_header_value("Authorization");
        s.set_content(ok_payload("The answer is 42.", true).dump(), "application/json");
    });

    HttpBackend backend(srv.config());
    CompletionRequest r = req("compute the ultimate answer", 0.95);
    r.max_tokens = 64;
    r.want_token_scores = true;
    r.seed = 1234;
    const Completion c = backend.complete(r);

    CHECK(c.text == "The answer is 42.");
    CHECK(c.finish == FinishReason::Stop);
    REQUIRE(c.token_scores.has_value());
    CHECK(c.token_scores->size() == 2);

    CHECK(seen["model"] == "test-model");
    CHECK(seen["temperature"] == 0.95);
    CHECK(seen["max_tokens"] == 64);
    CHECK(seen["seed"] == 1234);
    CHECK(seen["logprobs"] == true);
    REQUIRE(seen["messages"].size() == 1);
    CHECK(seen["messages"][0]["role"] == "user");
    CHECK(seen["messages"][0]["content"] == "compute the ultimate answer");
    CHECK(auth == "Bearer sekrit");
    CHECK(backend.stats().invocations == 1);
    ::unsetenv("FOT_API_KEY");
}

TEST_CASE("http backend retries 5xx and then succeeds") {
    std::atomic<int> calls{0};
    LocalServer srv([&](const httplib::Request&, httplib::Response& s) {
        if (calls.fetch_add(1) == 0) {
            s.status = 503;
            s.set_content("overloaded", "text/plain");
            return;
        }
        s.set_content(ok_payload("recovered", false).dump(), "application/json");
    });

    HttpBackend backend(srv.config());
    CHECK(backend.complete(req("p")).text == "recovered");
    CHECK(calls.load() == 2);
    CHECK(backend.stats().invocations == 1);
}

TEST_CASE("http backend fails fast on 4xx") {
    std::atomic<int> calls{0};
    LocalServer srv([&](const httplib::Request&, httplib::Response& s) {
        calls.fetch_add(1);
        s.status = 404;
        s.set_content("nope", "text/plain");
    });

    HttpBackend backend(srv.config());
    try {
        backend.complete(req("p"));
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK_FALSE(e.retryable());
    }
    CHECK(calls.load() == 1);
    CHECK(backend.stats().invocations == 0);
}

TEST_CASE("http backend retries malformed payloads until attempts run out") {
    std::atomic<int> calls{0};
    LocalServer srv([&](const httplib::Request&, httplib::Response& s) {
        calls.fetch_add(1);
        s.set_content("not json at all", "application/json");
    });

    HttpBackendConfig cfg = srv.config();
    cfg.max_retries = 2;
    HttpBackend backend(cfg);
    try {
        backend.complete(req("p"));
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.retryable());
    }
    CHECK(calls.load() == 3);  // first try + 2 retries
    CHECK(backend.stats().invocations == 0);
}

TEST_CASE("http config validation") {
    HttpBackendConfig cfg;
    cfg.base_url = "";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = HttpBackendConfig{};
    cfg.max_retries = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

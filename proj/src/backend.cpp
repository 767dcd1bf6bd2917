#include "fot/backend.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "fot/types.hpp"

namespace fot {

namespace {

std::uint64_t approx_tokens(const std::string& text) {
    std::istringstream ss(text);
    std::string tok;
    std::uint64_t n = 0;
    while (ss >> tok) ++n;
    return n;
}

}  // namespace

void CompletionRequest::validate() const {
    if (prompt.empty()) throw ContractViolation("completion prompt must be nonempty");
    if (temperature < 0.0) throw ContractViolation("completion temperature must be >= 0");
    if (max_tokens < 1) throw ContractViolation("completion max_tokens must be >= 1");
}

Completion Backend::complete(const CompletionRequest& request) {
    request.validate();
    if (invocations_.load(std::memory_order_relaxed) >=
        budget_.load(std::memory_order_relaxed)) {
        throw BudgetError("invocation budget exhausted (" +
                          std::to_string(budget_.load(std::memory_order_relaxed)) + ")");
    }
    Completion c = do_complete(request);
    invocations_.fetch_add(1, std::memory_order_relaxed);
    tokens_in_.fetch_add(approx_tokens(request.prompt), std::memory_order_relaxed);
    tokens_out_.fetch_add(approx_tokens(c.text), std::memory_order_relaxed);
    return c;
}

BackendStats Backend::stats() const {
    BackendStats s;
    s.invocations = invocations_.load(std::memory_order_relaxed);
    s.tokens_in = tokens_in_.load(std::memory_order_relaxed);
    s.tokens_out = tokens_out_.load(std::memory_order_relaxed);
    return s;
}

void Backend::set_budget(std::optional<std::uint64_t> max_invocations) {
    budget_.store(max_invocations.value_or(UINT64_MAX), std::memory_order_relaxed);
}

void ScriptedBackend::add_reply(const std::string& prompt, std::string reply) {
    std::lock_guard<std::mutex> lock(mu_);
    replies_[prompt].push_back(std::move(reply));
}

void ScriptedBackend::set_fallback(
    std::function<std::optional<std::string>(const CompletionRequest&)> fn) {
    std::lock_guard<std::mutex> lock(mu_);
    fallback_ = std::move(fn);
}

void ScriptedBackend::set_token_scores(std::vector<double> scores) {
    std::lock_guard<std::mutex> lock(mu_);
    token_scores_ = std::move(scores);
}

std::vector<std::string> ScriptedBackend::transcript() const {
    std::lock_guard<std::mutex> lock(mu_);
    return transcript_;
}

Completion ScriptedBackend::do_complete(const CompletionRequest& request) {
    std::lock_guard<std::mutex> lock(mu_);
    transcript_.push_back(request.prompt);
    Completion c;
    auto it = replies_.find(request.prompt);
    if (it != replies_.end() && !it->second.empty()) {
        c.text = it->second.front();
        if (it->second.size() > 1) it->second.pop_front();
    } else if (fallback_) {
        auto reply = fallback_(request);
        if (!reply) {
            throw BackendError("no script entry for prompt (fallback declined)", false);
        }
        c.text = *reply;
    } else {
        throw BackendError("no script entry for prompt: " + request.prompt.substr(0, 80),
                           false);
    }
    if (request.want_token_scores && token_scores_) c.token_scores = token_scores_;
    return c;
}

std::optional<double> parse_critic_score(const std::string& reply) {
    std::string hay;
    hay.reserve(reply.size());
    for (char ch : reply) hay += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    std::size_t pos = hay.rfind("[score]");
    if (pos == std::string::npos) return std::nullopt;
    std::size_t i = pos + 7;
    while (i < reply.size()) {
        char ch = reply[i];
        if (std::isspace(static_cast<unsigned char>(ch)) || ch == ':' || ch == '=' || ch == '*') {
            ++i;
        } else {
            break;
        }
    }
    const char* begin = reply.c_str() + i;
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) return std::nullopt;
    if (v < 0.0) v = 0.0;
    if (v > 100.0) v = 100.0;
    return v;
}

double score_answer(const std::string& question, const std::string& answer, Backend& backend,
                    const PromptPack& pack) {
    if (question.empty() || answer.empty()) {
        throw ContractViolation("score_answer needs nonempty question and answer");
    }
    CompletionRequest req;
    req.prompt = render_template(pack.math_critic, {{"question", question}, {"answer", answer}});
    req.temperature = 0.0;
    Completion c = backend.complete(req);
    auto score = parse_critic_score(c.text);
    if (!score) {
        warn("critic reply had no parseable [Score]; treating as 0");
        return 0.0;
    }
    return *score / 100.0;
}

double mean_token_confidence(const Completion& completion) {
    if (!completion.token_scores || completion.token_scores->empty()) {
        throw UnsupportedCapability("completion carries no token scores");
    }
    double sum = 0.0;
    for (double lp : *completion.token_scores) sum += lp;
    double mean = sum / static_cast<double>(completion.token_scores->size());
    double conf = std::exp(mean);
    return conf > 1.0 ? 1.0 : conf;
}

}  // namespace fot

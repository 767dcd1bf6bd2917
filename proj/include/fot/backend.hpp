#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fot/prompts.hpp"

namespace fot {

/// Retryable upstream trouble: transport failures, 5xx, malformed payloads.
class BackendError : public std::runtime_error {
  public:
    explicit BackendError(const std::string& msg, bool retryable = true)
        : std::runtime_error(msg), retryable_(retryable) {}
    bool retryable() const { return retryable_; }

  private:
    bool retryable_;
};

class BudgetError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class UnsupportedCapability : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class FinishReason { Stop, Length, Error };

struct CompletionRequest {
    std::string prompt;
    double temperature = 0.0;
    int max_tokens = 512;
    bool want_token_scores = false;
    std::optional<std::uint64_t> seed;

    void validate() const;
};

struct Completion {
    std::string text;
    std::optional<std::vector<double>> token_scores;  // per-token log-probabilities
    FinishReason finish = FinishReason::Stop;
};

/// Snapshot of a backend's counters. invocations counts completed calls only;
/// token counts are whitespace-token approximations on mock backends.
struct BackendStats {
    std::uint64_t invocations = 0;
    std::uint64_t tokens_in = 0;
    std::uint64_t tokens_out = 0;
};

/// Completion provider. complete() validates the request, enforces the
/// optional invocation budget, delegates to do_complete(), and counts stats
/// only for calls that returned a completion. Thread-safe; subclasses must
/// keep do_complete() safe for concurrent callers.
class Backend {
  public:
    virtual ~Backend() = default;

    Completion complete(const CompletionRequest& request);
    BackendStats stats() const;
    /// Soft cap on completed invocations; exceeding it raises BudgetError.
    void set_budget(std::optional<std::uint64_t> max_invocations);
    virtual std::string name() const = 0;

  protected:
    virtual Completion do_complete(const CompletionRequest& request) = 0;

  private:
    std::atomic<std::uint64_t> invocations_{0};
    std::atomic<std::uint64_t> tokens_in_{0};
    std::atomic<std::uint64_t> tokens_out_{0};
    std::atomic<std::uint64_t> budget_{UINT64_MAX};
};

/// Wraps another backend and keeps its own counters, so one shared backend
/// can be metered per tree while trees run concurrently.
class CountingBackend : public Backend {
  public:
    explicit CountingBackend(Backend& inner) : inner_(inner) {}
    std::string name() const override { return inner_.name(); }

  protected:
    Completion do_complete(const CompletionRequest& request) override {
        return inner_.complete(request);
    }

  private:
    Backend& inner_;
};

/// Mock with an exact-prompt reply table. Each prompt maps to a queue of
/// replies; the last reply is sticky for repeated calls. Unknown prompts go
/// to the fallback handler when set, otherwise raise a non-retryable
/// BackendError ("no script entry").
class ScriptedBackend : public Backend {
  public:
    void add_reply(const std::string& prompt, std::string reply);
    void set_fallback(std::function<std::optional<std::string>(const CompletionRequest&)> fn);
    /// Attached to every reply when want_token_scores is set.
    void set_token_scores(std::vector<double> scores);
    std::vector<std::string> transcript() const;
    std::string name() const override { return "scripted"; }

  protected:
    Completion do_complete(const CompletionRequest& request) override;

  private:
    mutable std::mutex mu_;
    std::map<std::string, std::deque<std::string>> replies_;
    std::function<std::optional<std::string>(const CompletionRequest&)> fallback_;
    std::optional<std::vector<double>> token_scores_;
    std::vector<std::string> transcript_;
};

/// Parses the number after the last "[Score]" marker, clamped to [0,100].
/// nullopt when the marker is missing or not followed by a number.
std::optional<double> parse_critic_score(const std::string& reply);

/// One critic-prompt completion at temperature 0; returns score/100 in [0,1].
/// A reply that fails to parse scores 0 (the safe direction: it forces a
/// correction attempt) and is logged through the warn handler.
double score_answer(const std::string& question, const std::string& answer, Backend& backend,
                    const PromptPack& pack);

/// exp(mean of per-token log-probabilities), in (0,1] for well-formed input.
/// Throws UnsupportedCapability when token_scores is absent or empty.
double mean_token_confidence(const Completion& completion);

}  // namespace fot

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "fot/backend.hpp"
#include "fot/types.hpp"

namespace fot {

/// Behavior knobs for the task-oracle mock. Each prompt kind has its own
/// success probability: on success the reply is grounded in the task's
/// ground truth, on failure it is well-formed but wrong in the way that
/// prompt kind can be wrong (off-path steps, flipped labels, inverted
/// scores, perturbed answers).
struct OracleBehavior {
    double propose_success = 1.0;
    double value_success = 1.0;
    double critic_success = 1.0;
    double refine_success = 1.0;
    double generate_success = 1.0;
    double expert_success = 1.0;
    std::uint64_t seed = 0;
    std::string ans_format = "The answer is";
    /// Ground truths for math questions, keyed by the exact question text.
    std::map<std::string, std::string> math_truth;
    int max_reply_steps = 8;

    static OracleBehavior uniform(double p, std::uint64_t seed);
    void validate() const;
};

/// Deterministic mock that classifies each prompt by its template text and
/// answers from the exact task oracles. Replies are a pure function of
/// (behavior.seed, request.seed, prompt bytes), so concurrent and reordered
/// call schedules reproduce byte-identically.
class OracleBackend : public Backend {
  public:
    OracleBackend(TaskKind task, OracleBehavior behavior);
    std::string name() const override { return "oracle"; }

  protected:
    Completion do_complete(const CompletionRequest& request) override;

  private:
    TaskKind task_;
    OracleBehavior b_;
};

/// Factory per the backend contract; throws ConfigError on bad behavior.
std::unique_ptr<Backend> make_oracle_backend(TaskKind task, const OracleBehavior& behavior);

}  // namespace fot

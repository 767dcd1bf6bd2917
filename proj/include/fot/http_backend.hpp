#pragma once

#include <string>

#include "fot/backend.hpp"

namespace fot {

struct HttpBackendConfig {
    std::string base_url = "http://localhost:8000";
    std::string model = "gpt-4o-mini";
    /// Environment variable holding the bearer token; empty token sends no
    /// Authorization header (local servers).
    std::string api_key_env = "FOT_API_KEY";
    int max_retries = 2;  // extra attempts after the first
    int backoff_ms = 250;
    int connect_timeout_ms = 5000;
    int read_timeout_ms = 120000;

    void validate() const;
};

/// OpenAI-compatible chat-completions client: POST {base_url}/v1/chat/completions
/// with one user message. Transport failures, 5xx and malformed payloads are
/// retried with exponential backoff; 4xx fail immediately. The invocation
/// counter moves only when a completion comes back (base-class contract).
class HttpBackend : public Backend {
  public:
    explicit HttpBackend(HttpBackendConfig cfg);
    std::string name() const override { return "http:" + cfg_.model; }

  protected:
    Completion do_complete(const CompletionRequest& request) override;

  private:
    HttpBackendConfig cfg_;
    std::string bearer_;
};

}  // namespace fot

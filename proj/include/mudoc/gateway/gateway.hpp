#pragma once

#include <chrono>
#include <memory>
#include <semaphore>
#include <string>

#include <nlohmann/json.hpp>

#include "mudoc/gateway/provider.hpp"

namespace mudoc::gateway {

struct ProviderConfig {
    std::string name = "openai";
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key_env = "OPENAI_API_KEY";
    std::string chat_model = "gpt-4.1-2025-04-14";
    std::string text_embedding_model = "text-embedding-3-large";
    std::string image_embedding_model = "google/siglip-so400m-patch14-384";
    // Embedding endpoint for images, relative to base_url.
    std::string image_embedding_path = "/embeddings";
    double timeout_seconds = 60.0;
    int retry_budget = 2;
    std::chrono::milliseconds initial_backoff{500};
    int max_in_flight = 8;
    double temperature = 0.2;

    // Throws ValidationError on a non-positive timeout or negative budget.
    void validate() const;

    static ProviderConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct RetryPolicy {
    int retry_budget = 2;
    std::chrono::milliseconds initial_backoff{500};
    double backoff_multiplier = 2.0;
};

// Retrying, concurrency-capped front door to a Provider. Safe to share
// between threads; the wrapped provider must be too.
class Gateway {
public:
    Gateway(std::shared_ptr<Provider> provider, RetryPolicy retry = {}, int max_in_flight = 8);

    ChatCompletion chat(const ChatRequest& request, const TextDeltaHandler& on_text = {});

    // One unit vector per input, in input order. Inputs must be non-empty.
    std::vector<Vector> embed_text(const std::vector<std::string>& texts);

    Vector embed_image(std::span<const std::uint8_t> bytes);

    // Unit vectors in the image model's text space.
    std::vector<Vector> embed_image_text(const std::vector<std::string>& texts);

    Provider& provider() { return *provider_; }
    const RetryPolicy& retry_policy() const { return retry_; }

private:
    template <typename Fn>
    auto with_retries(const char* what, Fn&& fn);

    std::shared_ptr<Provider> provider_;
    RetryPolicy retry_;
    std::counting_semaphore<> in_flight_;
};

// Builds the named provider: "mock" gives a MockProvider with an empty script,
// anything else an OpenAI-compatible HTTP provider from `config`.
std::shared_ptr<Provider> make_provider(const ProviderConfig& config);

std::unique_ptr<Gateway> make_gateway(const ProviderConfig& config);

// Replaces anything that looks like a bearer token or api key in `text`.
std::string redact_secrets(std::string_view text);

}  // namespace mudoc::gateway

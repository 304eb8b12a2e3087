#include "mudoc/gateway/gateway.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <regex>
#include <thread>

#include "mudoc/gateway/mock_provider.hpp"
#include "mudoc/gateway/openai_provider.hpp"
#include "mudoc/simd/kernels.hpp"

namespace mudoc::gateway {

using nlohmann::json;

const char* to_string(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
        case Role::Tool: return "tool";
    }
    return "user";
}

void ProviderConfig::validate() const {
    if (!(timeout_seconds > 0.0)) throw ValidationError("provider timeout must be positive");
    if (retry_budget < 0) throw ValidationError("provider retry budget must be non-negative");
    if (max_in_flight <= 0) throw ValidationError("provider concurrency cap must be positive");
}

ProviderConfig ProviderConfig::from_json(const json& j) {
    ProviderConfig c;
    c.name = j.value("name", c.name);
    c.base_url = j.value("base_url", c.base_url);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.chat_model = j.value("chat_model", c.chat_model);
    c.text_embedding_model = j.value("text_embedding_model", c.text_embedding_model);
    c.image_embedding_model = j.value("image_embedding_model", c.image_embedding_model);
    c.image_embedding_path = j.value("image_embedding_path", c.image_embedding_path);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.retry_budget = j.value("retry_budget", c.retry_budget);
    c.initial_backoff = std::chrono::milliseconds(j.value("initial_backoff_ms", c.initial_backoff.count()));
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.temperature = j.value("temperature", c.temperature);
    c.validate();
    return c;
}

json ProviderConfig::to_json() const {
    return {{"name", name},
            {"base_url", base_url},
            {"api_key_env", api_key_env},
            {"chat_model", chat_model},
            {"text_embedding_model", text_embedding_model},
            {"image_embedding_model", image_embedding_model},
            {"image_embedding_path", image_embedding_path},
            {"timeout_seconds", timeout_seconds},
            {"retry_budget", retry_budget},
            {"initial_backoff_ms", initial_backoff.count()},
            {"max_in_flight", max_in_flight},
            {"temperature", temperature}};
}

std::string redact_secrets(std::string_view text) {
    static const std::regex bearer(R"((Bearer\s+)[A-Za-z0-9._\-]+)");
    static const std::regex key(R"(sk-[A-Za-z0-9_\-]{8,})");
    std::string out = std::regex_replace(std::string(text), bearer, "$1[redacted]");
    return std::regex_replace(out, key, "[redacted]");
}

Gateway::Gateway(std::shared_ptr<Provider> provider, RetryPolicy retry, int max_in_flight)
    : provider_(std::move(provider)), retry_(retry), in_flight_(std::max(1, max_in_flight)) {
    if (retry_.retry_budget < 0) throw ValidationError("retry budget must be non-negative");
}

template <typename Fn>
auto Gateway::with_retries(const char* what, Fn&& fn) {
    auto backoff = retry_.initial_backoff;
    for (int attempt = 0;; ++attempt) {
        in_flight_.acquire();
        try {
            auto result = fn();
            in_flight_.release();
            return result;
        } catch (const TransientError& e) {
            in_flight_.release();
            if (attempt >= retry_.retry_budget)
                throw GatewayError(std::string(what) + " failed after " + std::to_string(attempt + 1) +
                                   " attempt(s): " + redact_secrets(e.what()));
            spdlog::warn("{} attempt {} failed: {}; retrying", what, attempt + 1, redact_secrets(e.what()));
        } catch (...) {
            in_flight_.release();
            throw;
        }
        std::this_thread::sleep_for(backoff);
        backoff = std::chrono::milliseconds(
            static_cast<long long>(std::llround(static_cast<double>(backoff.count()) * retry_.backoff_multiplier)));
    }
}

ChatCompletion Gateway::chat(const ChatRequest& request, const TextDeltaHandler& on_text) {
    // Once text has been forwarded downstream a retry would duplicate it.
    bool forwarded = false;
    TextDeltaHandler tracked;
    if (on_text) {
        tracked = [&](std::string_view t) {
            forwarded = true;
            on_text(t);
        };
    }
    return with_retries("chat", [&] {
        try {
            return provider_->chat(request, tracked);
        } catch (const TransientError& e) {
            if (forwarded) throw GatewayError(std::string("chat stream interrupted: ") + e.what());
            throw;
        }
    });
}

std::vector<Vector> Gateway::embed_text(const std::vector<std::string>& texts) {
    if (texts.empty()) return {};
    for (const auto& t : texts)
        if (t.empty()) throw ValidationError("embed_text: empty input text");
    auto vectors = with_retries("embed_text", [&] { return provider_->embed_text(texts); });
    if (vectors.size() != texts.size()) throw GatewayError("embed_text: provider returned wrong count");
    for (auto& v : vectors) {
        if (v.empty()) throw GatewayError("embed_text: provider returned an empty vector");
        simd::normalize(v);
    }
    return vectors;
}

std::vector<Vector> Gateway::embed_image_text(const std::vector<std::string>& texts) {
    if (texts.empty()) return {};
    for (const auto& t : texts)
        if (t.empty()) throw ValidationError("embed_image_text: empty input text");
    auto vectors = with_retries("embed_image_text", [&] { return provider_->embed_image_text(texts); });
    if (vectors.size() != texts.size()) throw GatewayError("embed_image_text: provider returned wrong count");
    for (auto& v : vectors) {
        if (v.empty()) throw GatewayError("embed_image_text: provider returned an empty vector");
        simd::normalize(v);
    }
    return vectors;
}

Vector Gateway::embed_image(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw ValidationError("embed_image: empty image");
    auto v = with_retries("embed_image", [&] { return provider_->embed_image(bytes); });
    if (v.empty()) throw GatewayError("embed_image: provider returned an empty vector");
    return v;
}

std::shared_ptr<Provider> make_provider(const ProviderConfig& config) {
    if (config.name == "mock") return std::make_shared<MockProvider>();
    return std::make_shared<OpenAIProvider>(config);
}

std::unique_ptr<Gateway> make_gateway(const ProviderConfig& config) {
    config.validate();
    return std::make_unique<Gateway>(make_provider(config),
                                     RetryPolicy{config.retry_budget, config.initial_backoff, 2.0},
                                     config.max_in_flight);
}

}  // namespace mudoc::gateway

#pragma once

#include <string>
#include <string_view>

#include "mudoc/gateway/gateway.hpp"
#include "mudoc/gateway/provider.hpp"

namespace mudoc::gateway {

// Decodes one string-valued member of a JSON object whose text arrives in
// arbitrary fragments. feed() returns only text not returned before, and
// never splits an escape sequence or a UTF-8 sequence produced by \u escapes.
class JsonStringFieldStreamer {
public:
    explicit JsonStringFieldStreamer(std::string field);

    std::string feed(std::string_view fragment);

    bool finished() const { return state_ == State::Done; }

private:
    enum class State { Seeking, InValue, Done };

    std::string field_;
    std::string buffer_;
    std::size_t cursor_ = 0;
    State state_ = State::Seeking;
};

// Chat completions and embeddings over the OpenAI-compatible wire protocol.
// Streaming (SSE) is used when the caller supplies a delta handler and names
// a stream_field.
class OpenAIProvider : public Provider {
public:
    explicit OpenAIProvider(ProviderConfig config);

    std::string name() const override { return config_.name; }

    ChatCompletion chat(const ChatRequest& request, const TextDeltaHandler& on_text) override;
    std::vector<Vector> embed_text(const std::vector<std::string>& texts) override;
    Vector embed_image(std::span<const std::uint8_t> bytes) override;
    std::vector<Vector> embed_image_text(const std::vector<std::string>& texts) override;

    // Request body for a chat call; exposed for wire-format tests.
    nlohmann::json chat_body(const ChatRequest& request, bool stream) const;

    // Parses a non-streamed chat completion response body.
    static ChatCompletion parse_completion(const nlohmann::json& body);

private:
    nlohmann::json post_json(const std::string& path, const nlohmann::json& body);

    ProviderConfig config_;
    std::string origin_;  // scheme://host[:port]
    std::string prefix_;  // path prefix such as /v1
};

}  // namespace mudoc::gateway

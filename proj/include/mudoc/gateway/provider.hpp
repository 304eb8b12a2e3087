#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mudoc/error.hpp"

namespace mudoc::gateway {

using Vector = std::vector<float>;

enum class Role { System, User, Assistant, Tool };

const char* to_string(Role role);

struct ImagePart {
    std::string mime_type;
    std::vector<std::uint8_t> bytes;
};

struct ToolCall {
    std::string id;
    std::string name;
    std::string arguments;  // raw JSON text as produced by the model
};

struct ChatMessage {
    Role role = Role::User;
    std::string content;
    std::vector<ImagePart> images;
    std::vector<ToolCall> tool_calls;  // assistant messages only
    std::string tool_call_id;          // tool messages only
};

struct ToolSchema {
    std::string name;
    std::string description;
    nlohmann::json parameters;  // JSON schema of the arguments object
};

struct ChatRequest {
    // Free-form label of what the call is for ("agent_step", "summarize", ...).
    std::string purpose;
    // Correlation tag, usually a session id. Scripted providers key on it.
    std::string tag;
    std::vector<ChatMessage> messages;
    std::vector<ToolSchema> tools;
    bool require_tool = false;
    double temperature = 0.2;
    // Name of a string-valued tool argument whose decoded text is forwarded
    // to the delta handler while the completion is still arriving.
    std::string stream_field;
};

struct ChatCompletion {
    std::string content;
    std::vector<ToolCall> tool_calls;
};

using TextDeltaHandler = std::function<void(std::string_view)>;

// Raw transport to a model provider. Implementations throw TransientError for
// failures worth retrying and GatewayError for everything else.
class Provider {
public:
    virtual ~Provider() = default;

    virtual std::string name() const = 0;

    virtual ChatCompletion chat(const ChatRequest& request, const TextDeltaHandler& on_text) = 0;

    virtual std::vector<Vector> embed_text(const std::vector<std::string>& texts) = 0;

    virtual Vector embed_image(std::span<const std::uint8_t> bytes) = 0;

    // Text embedded into the image model's space (captions, image queries).
    virtual std::vector<Vector> embed_image_text(const std::vector<std::string>& texts) { return embed_text(texts); }
};

class TransientError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

}  // namespace mudoc::gateway

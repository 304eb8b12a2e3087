#pragma once

#include <string_view>

namespace mudoc {

// Conversational condition. TexDoC is MuDoC without any image pipeline.
enum class AgentMode { MuDoC, TexDoC };

const char* to_string(AgentMode mode);

// Accepts "mudoc" / "texdoc" in any letter case; throws ValidationError.
AgentMode parse_agent_mode(std::string_view text);

}  // namespace mudoc

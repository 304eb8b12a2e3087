#include "mudoc/mode.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "mudoc/error.hpp"

namespace mudoc {

const char* to_string(AgentMode mode) { return mode == AgentMode::MuDoC ? "MuDoC" : "TexDoC"; }

AgentMode parse_agent_mode(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "mudoc") return AgentMode::MuDoC;
    if (lower == "texdoc") return AgentMode::TexDoC;
    throw ValidationError("unknown agent mode '" + std::string(text) + "'");
}

}  // namespace mudoc

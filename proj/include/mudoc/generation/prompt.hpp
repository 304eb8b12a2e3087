#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mudoc/mode.hpp"

namespace mudoc::generation {

// Bumped whenever any section text changes.
inline constexpr std::string_view kPromptVersion = "mudoc-prompt/2.0.1";

struct PromptSection {
    std::string_view key;
    std::string_view title;
    std::string_view body;
    bool multimodal_only = false;
};

// Every section in assembly order, including the multimodal-only ones.
const std::vector<PromptSection>& prompt_sections();

// System prompt for the agent. TexDoC drops the multimodal-only sections.
std::string build_system_prompt(AgentMode mode);

// Hex FNV-1a of the assembled prompt, prefixed with the version tag.
std::string prompt_fingerprint(AgentMode mode);

// Appended for the last permitted iteration, when only final_response is offered.
std::string_view forced_final_instruction();

// Appended to a reprompt after an unparseable reply.
std::string reprompt_instruction(std::string_view problem);

}  // namespace mudoc::generation

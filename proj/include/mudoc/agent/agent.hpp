#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mudoc/gateway/gateway.hpp"
#include "mudoc/generation/stream.hpp"
#include "mudoc/mode.hpp"
#include "mudoc/retrieval/search.hpp"

namespace mudoc::agent {

struct ReasoningTrace {
    std::string query_reflection;
    std::string search_content_reflection;
    std::string action_reasoning;
};

struct InitialSearch {
    std::string query;
};

struct ContentSearch {
    std::vector<std::string> text_queries;
    std::vector<std::string> image_queries;
};

struct ConfirmIntent {
    std::string question;
};

struct FinalResponse {
    std::string content;
};

using AgentAction = std::variant<InitialSearch, ContentSearch, ConfirmIntent, FinalResponse>;

// Tool name of the action: initial_search, content_search, confirm_intent, final_response.
const char* action_name(const AgentAction& action);
bool is_search(const AgentAction& action);
nlohmann::json action_arguments(const AgentAction& action);

struct AgentConfig {
    // MuDoC only: retrieved figure bytes go back to the model with the results.
    bool attach_images = true;
    // Oldest whole turns are left out of a request once history exceeds this.
    std::size_t history_char_budget = 400000;
    double temperature = 0.2;

    void validate() const;
};

struct AgentState {
    std::string session_id;
    AgentMode mode = AgentMode::MuDoC;
    // User, assistant, tool-result and attached-image entries, oldest first.
    std::vector<gateway::ChatMessage> history;
    int iteration = 0;
    int max_iterations = 6;
    int completed_turns = 0;
};

// Function schemas offered to the model. TexDoC's content_search has no
// image_queries. `final_only` offers final_response alone.
std::vector<gateway::ToolSchema> tool_schemas(AgentMode mode, bool final_only = false);

// Reads the first tool call of a completion. Throws ProtocolError naming the
// problem. TexDoC image queries are removed and noted in `warnings`.
std::pair<ReasoningTrace, AgentAction> parse_action(const gateway::ChatCompletion& completion, AgentMode mode,
                                                    bool final_only, std::vector<std::string>* warnings = nullptr);

struct StepResult {
    ReasoningTrace trace;
    AgentAction action;
    gateway::ToolCall call;
    int attempts = 1;
    std::vector<std::string> warnings;
};

// One reasoning step: the model sees the system prompt and history and calls
// one tool. An unusable reply earns one reprompt; a second one throws
// ProtocolError, as does an unusable reply after text was already streamed.
// `forced` offers final_response only, for the last permitted iteration.
StepResult step(const AgentState& state, gateway::Gateway& gateway, const AgentConfig& config, bool forced = false,
                const gateway::TextDeltaHandler& on_text = {});

struct ToolOutcome {
    std::vector<retrieval::TextSpan> spans;
    std::vector<retrieval::ScoredImage> images;
    std::string error;  // retrieval failure, recorded instead of thrown
};

struct Disposition {
    enum class Kind { Continue, EndTurn };
    Kind kind = Kind::Continue;
    std::string payload;  // generative text for EndTurn
    ToolOutcome outcome;
};

// Executes the action and appends its history entries: for searches the
// assistant tool call, its tool result and (MuDoC) an image attachment
// message; for generative actions one assistant message.
Disposition apply_action(AgentState& state, const AgentAction& action, const gateway::ToolCall& call,
                         retrieval::SearchBackend& backend, const AgentConfig& config = {});

// Text the model receives for a search result.
std::string format_tool_result(const AgentAction& action, const ToolOutcome& outcome,
                               const retrieval::Index& index);

struct IterationRecord {
    int iteration = 0;
    bool forced = false;
    int attempts = 1;
    ReasoningTrace trace;
    std::string action;
    nlohmann::json arguments;
    std::size_t text_results = 0;
    std::size_t image_results = 0;
    std::string error;

    nlohmann::json to_json() const;
};

struct TurnRecord {
    int turn = 0;
    std::string user_message;
    std::vector<IterationRecord> iterations;
    std::string ended_by;    // final_response, confirm_intent, or empty
    std::string response;    // raw generative text
    std::string transcript;  // serialized events (what the learner saw)
    std::string error;

    nlohmann::json to_json() const;
};

enum class TurnOutcome { Completed, Failed, Aborted };

struct TurnResult {
    TurnOutcome outcome = TurnOutcome::Completed;
    TurnRecord record;
    std::vector<generation::StreamEvent> events;
    std::size_t search_actions = 0;
};

// Receives each event as it is produced; returning false means the client
// went away and the turn is abandoned.
using EventSink = std::function<bool(const generation::StreamEvent&)>;

// Runs step/apply_action until a generative action, forcing final_response
// on iteration state.max_iterations (iterations count from 1). Events: Status before each phase,
// TraceAvailable after each step, the transformed answer, then Done. On a
// gateway or protocol failure the stream ends with an Error event; on failure
// or abandonment the history is restored to its state before the turn.
TurnResult run_turn(AgentState& state, const std::string& user_message, gateway::Gateway& gateway,
                    retrieval::SearchBackend& backend, const AgentConfig& config = {},
                    const EventSink& sink = {});

}  // namespace mudoc::agent

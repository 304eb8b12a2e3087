#include "mudoc/agent/agent.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>

#include "mudoc/error.hpp"
#include "mudoc/generation/prompt.hpp"
#include "mudoc/util.hpp"

namespace mudoc::agent {

using nlohmann::json;
using gateway::ChatMessage;
using gateway::Role;

namespace {

// Thrown out of the delta handler when the event sink reports a disconnect.
struct Abandoned {};

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

json string_property(const char* description) { return {{"type", "string"}, {"description", description}}; }

json reflection_properties() {
    return {{"query_reflection",
             string_property("What the student wants; unfamiliar terms, typos or misconceptions; whether a search "
                             "is needed.")},
            {"search_content_reflection",
             string_property("Relevance of material retrieved so far, what is missing, and how to structure a "
                             "self-contained answer.")},
            {"action_reasoning", string_property("Why this action is the right next step.")}};
}

gateway::ToolSchema make_tool(const char* name, const char* description, json extra, std::vector<std::string> required) {
    json props = reflection_properties();
    for (auto& [k, v] : extra.items()) props[k] = v;
    json req = json::array({"query_reflection", "search_content_reflection", "action_reasoning"});
    for (auto& r : required) req.push_back(r);
    return {name, description,
            json{{"type", "object"}, {"properties", props}, {"required", req}, {"additionalProperties", false}}};
}

std::string field_string(const json& args, const char* key, bool& present) {
    present = args.contains(key) && args[key].is_string();
    return present ? args[key].get<std::string>() : std::string{};
}

std::vector<std::string> string_list(const json& args, const char* key) {
    std::vector<std::string> out;
    if (!args.contains(key) || args[key].is_null()) return out;
    if (!args[key].is_array()) throw ProtocolError(std::string(key) + " is not a list");
    for (const auto& item : args[key]) {
        if (!item.is_string()) throw ProtocolError(std::string(key) + " holds a non-string entry");
        if (auto s = item.get<std::string>(); !s.empty()) out.push_back(std::move(s));
    }
    return out;
}

std::size_t message_chars(const ChatMessage& m) {
    std::size_t n = m.content.size();
    for (const auto& c : m.tool_calls) n += c.arguments.size();
    return n;
}

bool starts_turn(const ChatMessage& m) { return m.role == Role::User && m.images.empty(); }

// Index of the first history entry sent: whole oldest turns are dropped
// while the remainder exceeds the budget. The current turn is always kept.
std::size_t history_window(const std::vector<ChatMessage>& history, std::size_t budget) {
    std::size_t total = 0;
    for (const auto& m : history) total += message_chars(m);
    std::size_t start = 0;
    while (total > budget) {
        std::size_t next = start + 1;
        while (next < history.size() && !starts_turn(history[next])) ++next;
        if (next >= history.size()) break;
        for (std::size_t i = start; i < next; ++i) total -= message_chars(history[i]);
        start = next;
    }
    return start;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    return s;
}

// Union of per-query results, best score per chunk, top `k` overall.
std::vector<retrieval::ScoredChunk> merge_text(std::vector<std::vector<retrieval::ScoredChunk>> lists,
                                               const retrieval::Index& index, std::size_t k) {
    std::map<std::size_t, retrieval::ScoredChunk> best;
    for (auto& list : lists)
        for (auto& r : list) {
            auto [it, inserted] = best.try_emplace(r.chunk_index, r);
            if (!inserted && r.hybrid_score > it->second.hybrid_score) it->second = r;
        }
    std::vector<retrieval::ScoredChunk> out;
    for (auto& [_, r] : best) out.push_back(r);
    std::stable_sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
        if (a.hybrid_score != b.hybrid_score) return a.hybrid_score > b.hybrid_score;
        return index.chunks()[a.chunk_index].first_block() < index.chunks()[b.chunk_index].first_block();
    });
    if (out.size() > k) out.resize(k);
    return out;
}

std::vector<retrieval::ScoredImage> merge_images(std::vector<std::vector<retrieval::ScoredImage>> lists, std::size_t k) {
    std::map<std::size_t, retrieval::ScoredImage> best;
    for (auto& list : lists)
        for (auto& r : list) {
            auto [it, inserted] = best.try_emplace(r.image_index, r);
            if (!inserted && r.hybrid_score > it->second.hybrid_score) it->second = r;
        }
    std::vector<retrieval::ScoredImage> out;
    for (auto& [_, r] : best) out.push_back(r);
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.hybrid_score != b.hybrid_score) return a.hybrid_score > b.hybrid_score;
        if (a.block_id != b.block_id) return a.block_id < b.block_id;
        return a.doc_id < b.doc_id;
    });
    if (out.size() > k) out.resize(k);
    return out;
}

}  // namespace

const char* action_name(const AgentAction& action) {
    return std::visit(overloaded{
                          [](const InitialSearch&) { return "initial_search"; },
                          [](const ContentSearch&) { return "content_search"; },
                          [](const ConfirmIntent&) { return "confirm_intent"; },
                          [](const FinalResponse&) { return "final_response"; },
                      },
                      action);
}

bool is_search(const AgentAction& action) {
    return std::holds_alternative<InitialSearch>(action) || std::holds_alternative<ContentSearch>(action);
}

json action_arguments(const AgentAction& action) {
    return std::visit(overloaded{
                          [](const InitialSearch& a) { return json{{"query", a.query}}; },
                          [](const ContentSearch& a) {
                              return json{{"text_queries", a.text_queries}, {"image_queries", a.image_queries}};
                          },
                          [](const ConfirmIntent& a) { return json{{"question", a.question}}; },
                          [](const FinalResponse& a) { return json{{"content", a.content}}; },
                      },
                      action);
}

void AgentConfig::validate() const {
    if (history_char_budget == 0) throw ValidationError("history budget must be positive");
}

std::vector<gateway::ToolSchema> tool_schemas(AgentMode mode, bool final_only) {
    std::vector<gateway::ToolSchema> tools;
    auto final_response = make_tool(
        "final_response",
        "Answer the student. Ground claims with citations from the retrieved material.",
        {{"content", string_property("The answer shown to the student.")}}, {"content"});
    if (final_only) {
        tools.push_back(std::move(final_response));
        return tools;
    }
    tools.push_back(make_tool("initial_search",
                              "Quick lookup returning the top three text passages, for background such as "
                              "unfamiliar terms.",
                              {{"query", string_property("Search query.")}}, {"query"}));
    json content_props = {{"text_queries", {{"type", "array"},
                                            {"items", {{"type", "string"}}},
                                            {"description", "Queries for text passages (up to ten returned)."}}}};
    std::vector<std::string> content_required = {"text_queries"};
    const char* content_description = "Full text search returning up to ten passages.";
    if (mode == AgentMode::MuDoC) {
        content_props["image_queries"] = {{"type", "array"},
                                          {"items", {{"type", "string"}}},
                                          {"description", "Queries for figures (up to five returned)."}};
        content_required.push_back("image_queries");
        content_description = "Full search returning up to ten text passages and five figures.";
    }
    tools.push_back(make_tool("content_search", content_description, content_props, content_required));
    tools.push_back(make_tool("confirm_intent", "Ask the student a clarifying question.",
                              {{"question", string_property("The clarifying question.")}}, {"question"}));
    tools.push_back(std::move(final_response));
    return tools;
}

std::pair<ReasoningTrace, AgentAction> parse_action(const gateway::ChatCompletion& completion, AgentMode mode,
                                                    bool final_only, std::vector<std::string>* warnings) {
    if (completion.tool_calls.empty()) throw ProtocolError("reply has no tool call");
    const auto& call = completion.tool_calls.front();
    const json args = json::parse(call.arguments.empty() ? std::string("{}") : call.arguments, nullptr, false);
    if (!args.is_object()) throw ProtocolError("arguments of " + call.name + " are not a JSON object");

    ReasoningTrace trace;
    bool present = false;
    trace.query_reflection = field_string(args, "query_reflection", present);
    trace.search_content_reflection = field_string(args, "search_content_reflection", present);
    trace.action_reasoning = field_string(args, "action_reasoning", present);

    if (final_only && call.name != "final_response")
        throw ProtocolError("expected final_response, got " + call.name);

    if (call.name == "initial_search") {
        auto q = field_string(args, "query", present);
        if (q.empty()) throw ProtocolError("initial_search without a query");
        return {trace, InitialSearch{std::move(q)}};
    }
    if (call.name == "content_search") {
        ContentSearch a{string_list(args, "text_queries"), string_list(args, "image_queries")};
        if (mode == AgentMode::TexDoC && !a.image_queries.empty()) {
            const auto note = "dropped " + std::to_string(a.image_queries.size()) + " image queries in text-only mode";
            spdlog::warn("agent: {}", note);
            if (warnings) warnings->push_back(note);
            a.image_queries.clear();
        }
        if (a.text_queries.empty() && a.image_queries.empty()) throw ProtocolError("content_search without queries");
        return {trace, std::move(a)};
    }
    if (call.name == "confirm_intent") {
        auto q = field_string(args, "question", present);
        if (q.empty()) throw ProtocolError("confirm_intent without a question");
        return {trace, ConfirmIntent{std::move(q)}};
    }
    if (call.name == "final_response") {
        auto c = field_string(args, "content", present);
        if (c.empty()) throw ProtocolError("final_response without content");
        return {trace, FinalResponse{std::move(c)}};
    }
    throw ProtocolError("unknown tool '" + call.name + "'");
}

StepResult step(const AgentState& state, gateway::Gateway& gateway, const AgentConfig& config, bool forced,
                const gateway::TextDeltaHandler& on_text) {
    if (!forced && state.iteration >= state.max_iterations)
        throw PreconditionError("iteration budget exhausted");

    gateway::ChatRequest req;
    req.purpose = "agent_step";
    req.tag = state.session_id;
    req.temperature = config.temperature;
    req.require_tool = true;
    req.tools = tool_schemas(state.mode, forced);
    req.stream_field = "content";
    req.messages.push_back({Role::System, generation::build_system_prompt(state.mode)});
    const auto start = history_window(state.history, config.history_char_budget);
    req.messages.insert(req.messages.end(), state.history.begin() + static_cast<std::ptrdiff_t>(start),
                        state.history.end());
    if (forced) req.messages.push_back({Role::System, std::string(generation::forced_final_instruction())});

    bool streamed = false;
    gateway::TextDeltaHandler tracked;
    if (on_text)
        tracked = [&](std::string_view t) {
            streamed = true;
            on_text(t);
        };

    StepResult out{};
    for (int attempt = 1;; ++attempt) {
        const auto completion = gateway.chat(req, tracked);
        try {
            auto [trace, action] = parse_action(completion, state.mode, forced, &out.warnings);
            out.trace = std::move(trace);
            out.action = std::move(action);
            out.call = completion.tool_calls.front();
            if (out.call.id.empty()) out.call.id = "call_" + std::to_string(state.iteration);
            out.attempts = attempt;
            return out;
        } catch (const ProtocolError& e) {
            if (attempt >= 2 || streamed)
                throw ProtocolError(std::string("unusable model reply: ") + e.what());
            spdlog::warn("agent {}: unusable reply ({}); reprompting", state.session_id, e.what());
            req.messages.push_back({Role::System, generation::reprompt_instruction(e.what())});
        }
    }
}

std::string format_tool_result(const AgentAction& action, const ToolOutcome& outcome, const retrieval::Index& index) {
    std::string out = std::string(action_name(action)) + " results\n";
    if (!outcome.error.empty()) return out + "Search failed: " + outcome.error + "\n";
    if (outcome.spans.empty()) out += "No text passages matched.\n";
    for (std::size_t i = 0; i < outcome.spans.size(); ++i) {
        const auto& s = outcome.spans[i];
        generation::CitationRef ref{s.doc_id, s.block_ids};
        out += "\nPassage " + std::to_string(i + 1) + " " + generation::serialize(ref) + "\n" + s.text + "\n";
    }
    if (std::holds_alternative<ContentSearch>(action) && !std::get<ContentSearch>(action).image_queries.empty()) {
        if (outcome.images.empty()) out += "\nNo figures matched.\n";
        for (std::size_t i = 0; i < outcome.images.size(); ++i) {
            const auto& img = outcome.images[i];
            const auto* rec = index.image_record(img.doc_id, img.block_id);
            out += "\nFigure " + std::to_string(i + 1) + " block://" + img.doc_id + "/" + std::to_string(img.block_id) +
                   " | caption: " + (rec ? one_line(rec->caption) : std::string{}) +
                   " | description: " + (rec ? one_line(rec->description) : std::string{}) + "\n";
        }
    }
    return out;
}

Disposition apply_action(AgentState& state, const AgentAction& action, const gateway::ToolCall& call,
                         retrieval::SearchBackend& backend, const AgentConfig& config) {
    Disposition d;
    if (!is_search(action)) {
        d.kind = Disposition::Kind::EndTurn;
        d.payload = std::holds_alternative<FinalResponse>(action) ? std::get<FinalResponse>(action).content
                                                                  : std::get<ConfirmIntent>(action).question;
        state.history.push_back({Role::Assistant, d.payload});
        return d;
    }

    const auto& cfg = backend.config();
    const auto& index = backend.index();
    try {
        if (const auto* initial = std::get_if<InitialSearch>(&action)) {
            const auto hits = backend.search_text(initial->query, cfg.initial_k);
            d.outcome.spans = retrieval::postprocess_text(hits, index);
        } else {
            const auto& a = std::get<ContentSearch>(action);
            std::vector<std::vector<retrieval::ScoredChunk>> text_lists;
            for (const auto& q : a.text_queries) text_lists.push_back(backend.search_text(q, cfg.content_text_k));
            d.outcome.spans = retrieval::postprocess_text(merge_text(std::move(text_lists), index, cfg.content_text_k), index);
            if (state.mode == AgentMode::MuDoC) {
                std::vector<std::vector<retrieval::ScoredImage>> image_lists;
                for (const auto& q : a.image_queries) image_lists.push_back(backend.search_images(q, cfg.content_image_k));
                d.outcome.images = merge_images(std::move(image_lists), cfg.content_image_k);
            }
        }
    } catch (const Error& e) {
        d.outcome = {};
        d.outcome.error = e.what();
        spdlog::warn("agent {}: {} failed: {}", state.session_id, action_name(action), e.what());
    }

    ChatMessage assistant{Role::Assistant, ""};
    assistant.tool_calls.push_back(call);
    state.history.push_back(std::move(assistant));
    ChatMessage result{Role::Tool, format_tool_result(action, d.outcome, index)};
    result.tool_call_id = call.id;
    state.history.push_back(std::move(result));

    if (state.mode == AgentMode::MuDoC && config.attach_images && !d.outcome.images.empty()) {
        ChatMessage pictures{Role::User, "Retrieved figures, in the order listed in the last search result."};
        for (const auto& img : d.outcome.images)
            if (const auto* bytes = index.image_bytes(img.doc_id, img.block_id))
                if (auto mime = util::sniff_image_type(*bytes); !mime.empty()) pictures.images.push_back({mime, *bytes});
        if (!pictures.images.empty()) state.history.push_back(std::move(pictures));
    }
    return d;
}

json IterationRecord::to_json() const {
    return {{"iteration", iteration},
            {"forced", forced},
            {"attempts", attempts},
            {"query_reflection", trace.query_reflection},
            {"search_content_reflection", trace.search_content_reflection},
            {"action_reasoning", trace.action_reasoning},
            {"action", action},
            {"arguments", arguments},
            {"text_results", text_results},
            {"image_results", image_results},
            {"error", error}};
}

json TurnRecord::to_json() const {
    json its = json::array();
    for (const auto& i : iterations) its.push_back(i.to_json());
    return {{"turn", turn},         {"user_message", user_message}, {"iterations", its},
            {"ended_by", ended_by}, {"response", response},         {"transcript", transcript},
            {"error", error}};
}

TurnResult run_turn(AgentState& state, const std::string& user_message, gateway::Gateway& gateway,
                    retrieval::SearchBackend& backend, const AgentConfig& config, const EventSink& sink) {
    if (user_message.empty()) throw ValidationError("empty chat message");
    if (state.max_iterations < 1) throw ValidationError("max_iterations must be at least 1");

    TurnResult result;
    result.record.turn = state.completed_turns;
    result.record.user_message = user_message;
    const auto snapshot = state.history;
    const auto& catalog = backend.index().catalog();
    generation::StreamTransformer transformer(state.mode, &catalog);

    auto emit = [&](generation::StreamEvent ev) {
        result.events.push_back(ev);
        if (sink && !sink(result.events.back())) throw Abandoned{};
    };
    auto emit_all = [&](std::vector<generation::StreamEvent> evs) {
        for (auto& e : evs) emit(std::move(e));
    };

    state.history.push_back({Role::User, user_message});
    state.iteration = 0;
    try {
        for (int it = 1; it <= state.max_iterations; ++it) {
            const bool forced = it == state.max_iterations;
            emit(generation::Status{generation::Phase::Reasoning});

            bool generating = false;
            std::string streamed;
            auto on_text = [&](std::string_view t) {
                if (!generating) {
                    emit(generation::Status{generation::Phase::Generating});
                    generating = true;
                }
                streamed.append(t);
                emit_all(transformer.feed(t));
            };
            auto s = step(state, gateway, config, forced, on_text);
            state.iteration = it;

            IterationRecord rec;
            rec.iteration = it;
            rec.forced = forced;
            rec.attempts = s.attempts;
            rec.trace = s.trace;
            rec.action = action_name(s.action);
            rec.arguments = action_arguments(s.action);
            emit(generation::TraceAvailable{result.record.turn, it});

            if (is_search(s.action)) {
                emit(generation::Status{generation::Phase::Searching});
                auto d = apply_action(state, s.action, s.call, backend, config);
                rec.text_results = d.outcome.spans.size();
                rec.image_results = d.outcome.images.size();
                rec.error = d.outcome.error;
                result.record.iterations.push_back(std::move(rec));
                ++result.search_actions;
                continue;
            }

            auto d = apply_action(state, s.action, s.call, backend, config);
            result.record.iterations.push_back(std::move(rec));
            if (!generating) emit(generation::Status{generation::Phase::Generating});
            // Whatever part of the answer did not arrive as deltas.
            if (d.payload.compare(0, streamed.size(), streamed) == 0) {
                emit_all(transformer.feed(std::string_view(d.payload).substr(streamed.size())));
            } else {
                spdlog::warn("agent {}: streamed text differs from the final arguments", state.session_id);
            }
            emit_all(transformer.finish());
            result.record.ended_by = action_name(s.action);
            result.record.response = d.payload;
            result.record.transcript = generation::serialize(result.events);
            emit(generation::Done{});
            ++state.completed_turns;
            return result;
        }
        throw ProtocolError("turn ended without a response");
    } catch (const Abandoned&) {
        state.history = snapshot;
        result.outcome = TurnOutcome::Aborted;
        result.record.error = "client disconnected";
        spdlog::info("agent {}: turn abandoned by client", state.session_id);
        return result;
    } catch (const std::exception& e) {
        state.history = snapshot;
        result.outcome = TurnOutcome::Failed;
        result.record.error = e.what();
        spdlog::error("agent {}: turn failed: {}", state.session_id, gateway::redact_secrets(e.what()));
        result.events.push_back(generation::StreamError{gateway::redact_secrets(e.what())});
        if (sink) sink(result.events.back());
        return result;
    }
}

}  // namespace mudoc::agent

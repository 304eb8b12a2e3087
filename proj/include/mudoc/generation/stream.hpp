#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mudoc/generation/markers.hpp"
#include "mudoc/mode.hpp"

namespace mudoc::generation {

struct TextDelta {
    std::string text;
};

enum class Phase { Reasoning, Searching, Generating };

const char* to_string(Phase phase);

struct Status {
    Phase phase = Phase::Reasoning;
};

struct TraceAvailable {
    int turn = 0;
    int iteration = 0;
};

struct StreamError {
    std::string message;
};

struct Done {};

using StreamEvent = std::variant<TextDelta, CitationRef, FigureRef, Status, TraceAvailable, StreamError, Done>;

// SSE event name: text_delta, citation, figure, status, trace_available, error, done.
const char* event_name(const StreamEvent& event);
nlohmann::json event_payload(const StreamEvent& event);

// Raw text the events stand for: deltas verbatim, markers in canonical form,
// everything else contributes nothing.
std::string serialize(const std::vector<StreamEvent>& events);

// Stateful transducer from raw model text to events, one per turn.
//
// Text that might still turn into a marker is held back until it either
// completes or cannot. A held-back candidate that fails is released one
// byte at a time so markers starting inside it are still found. Markers
// whose references do not check out against `catalog` come out as plain
// text. In TexDoC mode figure elements are dropped.
class StreamTransformer {
public:
    // `catalog` may be null, in which case every well-formed marker is accepted.
    StreamTransformer(AgentMode mode, const ingest::DocumentCatalog* catalog);

    std::vector<StreamEvent> feed(std::string_view token);
    // Releases anything still held back.
    std::vector<StreamEvent> finish();

    const std::vector<std::string>& warnings() const { return warnings_; }

    // Longest figure element held back before it is treated as text.
    static constexpr std::size_t kMaxFigureBytes = 4096;

private:
    void drain(bool at_end, std::vector<StreamEvent>& out);
    void emit_text(std::string_view text, std::vector<StreamEvent>& out);
    void warn(std::string message);

    AgentMode mode_;
    const ingest::DocumentCatalog* catalog_;
    std::string pending_;
    std::vector<std::string> warnings_;
};

// Runs a whole text through a fresh transformer.
std::vector<StreamEvent> transform_text(std::string_view text, AgentMode mode,
                                        const ingest::DocumentCatalog* catalog);

}  // namespace mudoc::generation

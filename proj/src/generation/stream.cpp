#include "mudoc/generation/stream.hpp"

#include <spdlog/spdlog.h>

#include <cctype>

namespace mudoc::generation {

using nlohmann::json;

const char* to_string(Phase phase) {
    switch (phase) {
        case Phase::Reasoning: return "reasoning";
        case Phase::Searching: return "searching";
        case Phase::Generating: return "generating";
    }
    return "reasoning";
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool figure_open_boundary(char c) { return c == '>' || std::isspace(static_cast<unsigned char>(c)); }

// Same contract as match_citation, for figure elements.
PrefixMatch match_figure(std::string_view text, std::size_t max_bytes) {
    const std::size_t head = std::min(text.size(), kFigureOpen.size());
    if (text.substr(0, head) != kFigureOpen.substr(0, head)) return {PrefixState::Invalid, 0};
    if (text.size() == kFigureOpen.size()) return {PrefixState::Partial, 0};
    if (text.size() < kFigureOpen.size()) return {PrefixState::Partial, 0};
    if (!figure_open_boundary(text[kFigureOpen.size()])) return {PrefixState::Invalid, 0};
    const auto close = text.find(kFigureClose);
    if (close != std::string_view::npos) {
        const auto length = close + kFigureClose.size();
        if (length > max_bytes) return {PrefixState::Invalid, 0};
        return {PrefixState::Complete, length};
    }
    if (text.size() >= max_bytes) return {PrefixState::Invalid, 0};
    return {PrefixState::Partial, 0};
}

}  // namespace

const char* event_name(const StreamEvent& event) {
    return std::visit(overloaded{
                          [](const TextDelta&) { return "text_delta"; },
                          [](const CitationRef&) { return "citation"; },
                          [](const FigureRef&) { return "figure"; },
                          [](const Status&) { return "status"; },
                          [](const TraceAvailable&) { return "trace_available"; },
                          [](const StreamError&) { return "error"; },
                          [](const Done&) { return "done"; },
                      },
                      event);
}

json event_payload(const StreamEvent& event) {
    return std::visit(
        overloaded{
            [](const TextDelta& e) { return json{{"text", e.text}}; },
            [](const CitationRef& e) {
                return json{{"doc_id", e.doc_id}, {"block_ids", e.block_ids}, {"marker", serialize(e)}};
            },
            [](const FigureRef& e) {
                return json{{"doc_id", e.doc_id},
                            {"block_id", e.block_id},
                            {"caption", e.caption},
                            {"image_url", "/docs/" + e.doc_id + "/blocks/" + std::to_string(e.block_id) + "/image"}};
            },
            [](const Status& e) { return json{{"phase", to_string(e.phase)}}; },
            [](const TraceAvailable& e) { return json{{"turn", e.turn}, {"iteration", e.iteration}}; },
            [](const StreamError& e) { return json{{"message", e.message}}; },
            [](const Done&) { return json::object(); },
        },
        event);
}

std::string serialize(const std::vector<StreamEvent>& events) {
    std::string out;
    for (const auto& e : events) {
        if (const auto* t = std::get_if<TextDelta>(&e)) out += t->text;
        else if (const auto* c = std::get_if<CitationRef>(&e)) out += serialize(*c);
        else if (const auto* f = std::get_if<FigureRef>(&e)) out += serialize(*f);
    }
    return out;
}

namespace {

// Length of the longest prefix of `s` that does not end inside a UTF-8
// sequence. Malformed bytes count as complete.
std::size_t complete_utf8_prefix(std::string_view s) {
    const std::size_t n = s.size();
    for (std::size_t back = 1; back <= 3 && back <= n; ++back) {
        const auto c = static_cast<unsigned char>(s[n - back]);
        if ((c & 0xC0) == 0x80) continue;  // continuation byte
        std::size_t need = 1;
        if ((c & 0xE0) == 0xC0) need = 2;
        else if ((c & 0xF0) == 0xE0) need = 3;
        else if ((c & 0xF8) == 0xF0) need = 4;
        return need > back ? n - back : n;
    }
    return n;
}

}  // namespace

StreamTransformer::StreamTransformer(AgentMode mode, const ingest::DocumentCatalog* catalog)
    : mode_(mode), catalog_(catalog) {}

std::vector<StreamEvent> StreamTransformer::feed(std::string_view token) {
    std::vector<StreamEvent> out;
    pending_.append(token);
    drain(false, out);
    return out;
}

std::vector<StreamEvent> StreamTransformer::finish() {
    std::vector<StreamEvent> out;
    drain(true, out);
    return out;
}

void StreamTransformer::emit_text(std::string_view text, std::vector<StreamEvent>& out) {
    if (text.empty()) return;
    if (!out.empty())
        if (auto* last = std::get_if<TextDelta>(&out.back())) {
            last->text.append(text);
            return;
        }
    out.push_back(TextDelta{std::string(text)});
}

void StreamTransformer::warn(std::string message) {
    spdlog::warn("stream: {}", message);
    warnings_.push_back(std::move(message));
}

void StreamTransformer::drain(bool at_end, std::vector<StreamEvent>& out) {
    const std::string_view buf = pending_;
    std::size_t i = 0;
    std::size_t text_start = 0;
    auto flush_text = [&](std::size_t upto) {
        emit_text(buf.substr(text_start, upto - text_start), out);
        text_start = upto;
    };

    while (i < buf.size()) {
        const char c = buf[i];
        if (c != '[' && c != '<') {
            const auto next = buf.find_first_of("[<", i);
            i = next == std::string_view::npos ? buf.size() : next;
            continue;
        }
        const auto rest = buf.substr(i);
        const auto m = c == '[' ? match_citation(rest) : match_figure(rest, kMaxFigureBytes);
        if (m.state == PrefixState::Partial && !at_end) break;
        if (m.state != PrefixState::Complete) {
            ++i;
            continue;
        }

        const auto raw = rest.substr(0, m.length);
        if (c == '[') {
            auto ref = parse_citation(raw);
            bool ok = ref.has_value();
            if (ok && catalog_) {
                for (auto id : ref->block_ids) {
                    if (!catalog_->find(ref->doc_id, id)) {
                        warn("citation to unknown block " + ref->doc_id + ":" + std::to_string(id) + " kept as text");
                        ok = false;
                        break;
                    }
                }
            }
            if (!ok) {
                // The whole marker stays as plain text.
                i += m.length;
                continue;
            }
            flush_text(i);
            out.push_back(std::move(*ref));
        } else {
            auto ref = parse_figure(raw);
            if (!ref) {
                ++i;
                continue;
            }
            if (mode_ == AgentMode::TexDoC) {
                flush_text(i);
                warn("figure " + ref->doc_id + ":" + std::to_string(ref->block_id) + " dropped in text-only mode");
                i += m.length;
                text_start = i;
                continue;
            }
            if (catalog_) {
                const auto* b = catalog_->find(ref->doc_id, ref->block_id);
                if (!b || b->kind != ingest::BlockKind::Figure) {
                    warn("figure reference " + ref->doc_id + ":" + std::to_string(ref->block_id) +
                         " is not a figure block; kept as text");
                    ++i;
                    continue;
                }
            }
            flush_text(i);
            out.push_back(std::move(*ref));
        }
        i += m.length;
        text_start = i;
    }
    // An incomplete UTF-8 sequence at the end waits for the rest of its bytes.
    if (!at_end) i = complete_utf8_prefix(buf.substr(0, i));
    flush_text(i);
    pending_.erase(0, i);
}

std::vector<StreamEvent> transform_text(std::string_view text, AgentMode mode, const ingest::DocumentCatalog* catalog) {
    StreamTransformer t(mode, catalog);
    auto out = t.feed(text);
    auto rest = t.finish();
    for (auto& e : rest) {
        if (auto* d = std::get_if<TextDelta>(&e); d && !out.empty())
            if (auto* last = std::get_if<TextDelta>(&out.back())) {
                last->text += d->text;
                continue;
            }
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace mudoc::generation

#include "mudoc/service/session.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>

#include "mudoc/error.hpp"
#include "mudoc/util.hpp"

namespace mudoc::service {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::pair<EventType, const char*> kEventNames[] = {
    {EventType::SessionCreated, "session_created"}, {EventType::ChatQuery, "chat_query"},
    {EventType::ChatResponse, "chat_response"},     {EventType::ChatFailed, "chat_failed"},
    {EventType::Search, "search"},                  {EventType::NoteSave, "note_save"},
    {EventType::TabSwitch, "tab_switch"},           {EventType::CitationClick, "citation_click"},
    {EventType::Heartbeat, "heartbeat"},
};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

agent::TurnRecord record_from_json(const json& j) {
    agent::TurnRecord r;
    r.turn = j.value("turn", 0);
    r.user_message = j.value("user_message", "");
    r.ended_by = j.value("ended_by", "");
    r.response = j.value("response", "");
    r.transcript = j.value("transcript", "");
    r.error = j.value("error", "");
    for (const auto& it : j.value("iterations", json::array())) {
        agent::IterationRecord i;
        i.iteration = it.value("iteration", 0);
        i.forced = it.value("forced", false);
        i.attempts = it.value("attempts", 1);
        i.trace = {it.value("query_reflection", ""), it.value("search_content_reflection", ""),
                   it.value("action_reasoning", "")};
        i.action = it.value("action", "");
        i.arguments = it.value("arguments", json::object());
        i.text_results = it.value("text_results", std::size_t{0});
        i.image_results = it.value("image_results", std::size_t{0});
        i.error = it.value("error", "");
        r.iterations.push_back(std::move(i));
    }
    return r;
}

}  // namespace

const char* to_string(Condition condition) {
    switch (condition) {
        case Condition::MuDoC: return "MuDoC";
        case Condition::TexDoC: return "TexDoC";
        case Condition::DocSearch: return "DocSearch";
    }
    return "MuDoC";
}

Condition parse_condition(std::string_view text) {
    const auto l = lower(text);
    if (l == "mudoc") return Condition::MuDoC;
    if (l == "texdoc") return Condition::TexDoC;
    if (l == "docsearch") return Condition::DocSearch;
    throw ValidationError("unknown condition '" + std::string(text) + "'");
}

const char* to_string(EventType type) {
    for (const auto& [t, name] : kEventNames)
        if (t == type) return name;
    return "heartbeat";
}

EventType parse_event_type(std::string_view text) {
    for (const auto& [t, name] : kEventNames)
        if (text == name) return t;
    throw ValidationError("unknown event type '" + std::string(text) + "'");
}

json SessionEvent::to_json() const {
    return {{"seq", seq}, {"ts_ms", ts_ms}, {"type", to_string(type)}, {"data", data}};
}

SessionEvent SessionEvent::from_json(const json& j) {
    SessionEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.ts_ms = j.at("ts_ms").get<std::int64_t>();
    e.type = parse_event_type(j.at("type").get<std::string>());
    e.data = j.value("data", json::object());
    return e;
}

void TimingConfig::validate() const {
    if (!(min_minutes > 0.0) || !(min_minutes <= max_minutes))
        throw ValidationError("timing requires 0 < min_minutes <= max_minutes");
}

TimingState timing_state(std::int64_t active, const TimingConfig& config) {
    const auto min_ms = static_cast<std::int64_t>(config.min_minutes * 60000.0);
    const auto max_ms = static_cast<std::int64_t>(config.max_minutes * 60000.0);
    return {active >= min_ms, active >= max_ms};
}

std::int64_t active_ms(const std::vector<SessionEvent>& events, std::int64_t max_gap_ms) {
    std::int64_t total = 0;
    std::optional<std::int64_t> last;
    for (const auto& e : events) {
        if (e.type != EventType::Heartbeat) continue;
        if (last) {
            const auto gap = e.ts_ms - *last;
            if (gap > 0 && gap <= max_gap_ms) total += gap;
        }
        if (!last || e.ts_ms > *last) last = e.ts_ms;
    }
    return total;
}

double textbook_tab_fraction(const std::vector<SessionEvent>& events) {
    if (events.empty()) return 0.0;
    std::int64_t end = events.front().ts_ms;
    for (const auto& e : events) end = std::max(end, e.ts_ms);

    std::int64_t total = 0, document = 0;
    std::optional<std::pair<std::int64_t, bool>> open;  // start, on Document tab
    auto close = [&](std::int64_t at) {
        if (!open) return;
        const auto span = std::max<std::int64_t>(0, at - open->first);
        total += span;
        if (open->second) document += span;
    };
    for (const auto& e : events) {
        if (e.type != EventType::TabSwitch) continue;
        close(e.ts_ms);
        open = std::make_pair(e.ts_ms, lower(e.data.value("tab", "")) == "document");
    }
    close(end);
    return total == 0 ? 0.0 : static_cast<double>(document) / static_cast<double>(total);
}

SessionMetrics compute_metrics(const std::vector<SessionEvent>& events) {
    SessionMetrics m;
    for (const auto& e : events) {
        switch (e.type) {
            case EventType::ChatQuery:
            case EventType::Search: ++m.query_count; break;
            case EventType::NoteSave: ++m.note_edit_count; break;
            case EventType::CitationClick: ++m.citation_click_count; break;
            default: break;
        }
    }
    m.time_minutes = static_cast<double>(active_ms(events)) / 60000.0;
    m.textbook_tab_fraction = textbook_tab_fraction(events);
    return m;
}

json SessionMetrics::to_json() const {
    return {{"time_minutes", time_minutes},
            {"query_count", query_count},
            {"note_edit_count", note_edit_count},
            {"citation_click_count", citation_click_count},
            {"textbook_tab_fraction", textbook_tab_fraction}};
}

EventLog::EventLog(fs::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
}

void EventLog::append(const SessionEvent& event) {
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw std::runtime_error("cannot open event log " + path_.string());
    out << event.to_json().dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    out.flush();
    if (!out) throw std::runtime_error("cannot write event log " + path_.string());
}

std::vector<SessionEvent> EventLog::read(const fs::path& path) {
    std::vector<SessionEvent> out;
    std::ifstream in(path, std::ios::binary);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            // A torn final line from a crash mid-write is skipped.
            spdlog::warn("{}:{}: unreadable event skipped", path.string(), n);
            continue;
        }
        out.push_back(SessionEvent::from_json(j));
    }
    return out;
}

Session::Session(std::string id, Condition condition, std::int64_t created_at_ms, fs::path dir)
    : id_(std::move(id)),
      condition_(condition),
      created_at_ms_(created_at_ms),
      dir_(std::move(dir)),
      log_(dir_ / "events.jsonl") {
    agent_state_.session_id = id_;
    agent_state_.mode = condition_ == Condition::TexDoC ? AgentMode::TexDoC : AgentMode::MuDoC;
}

SessionEvent Session::append(EventType type, json data, std::int64_t ts_ms) {
    std::lock_guard lock(mutex_);
    SessionEvent e{events_.size(), ts_ms, type, std::move(data)};
    log_.append(e);
    events_.push_back(e);
    return e;
}

std::vector<SessionEvent> Session::events() const {
    std::lock_guard lock(mutex_);
    return events_;
}

std::string Session::notes() const {
    std::lock_guard lock(mutex_);
    return notes_;
}

void Session::set_notes(std::string text) {
    std::lock_guard lock(mutex_);
    const auto tmp = dir_ / "notes.txt.tmp";
    util::write_file(tmp.string(), text);
    fs::rename(tmp, dir_ / "notes.txt");
    notes_ = std::move(text);
}

void Session::add_turn_record(agent::TurnRecord record) {
    std::lock_guard lock(mutex_);
    turns_.push_back(std::move(record));
}

agent::TurnRecord Session::turn_record(int turn) const {
    std::lock_guard lock(mutex_);
    for (const auto& r : turns_)
        if (r.turn == turn) return r;
    throw NotFound("session " + id_ + " has no turn " + std::to_string(turn));
}

std::unique_ptr<Session> Session::restore(const fs::path& dir) {
    auto events = EventLog::read(dir / "events.jsonl");
    if (events.empty() || events.front().type != EventType::SessionCreated)
        throw ParseError("session log " + (dir / "events.jsonl").string() + " does not start with session_created");
    const auto& created = events.front();
    auto s = std::make_unique<Session>(created.data.at("session_id").get<std::string>(),
                                       parse_condition(created.data.at("condition").get<std::string>()),
                                       created.ts_ms, dir);
    for (const auto& e : events) {
        if (e.type != EventType::ChatResponse) continue;
        auto record = record_from_json(e.data.value("record", json::object()));
        // Earlier turns come back as plain question/answer pairs.
        s->agent_state_.history.push_back({gateway::Role::User, record.user_message});
        s->agent_state_.history.push_back({gateway::Role::Assistant, record.response});
        s->agent_state_.completed_turns = record.turn + 1;
        s->turns_.push_back(std::move(record));
    }
    s->events_ = std::move(events);
    if (fs::exists(dir / "notes.txt")) {
        const auto bytes = util::read_file((dir / "notes.txt").string());
        s->notes_.assign(bytes.begin(), bytes.end());
    }
    return s;
}

}  // namespace mudoc::service

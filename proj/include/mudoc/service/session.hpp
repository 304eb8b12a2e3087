#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mudoc/agent/agent.hpp"

namespace mudoc::service {

enum class Condition { MuDoC, TexDoC, DocSearch };

const char* to_string(Condition condition);
// Case-insensitive; throws ValidationError for anything else.
Condition parse_condition(std::string_view text);

enum class EventType {
    SessionCreated,
    ChatQuery,
    ChatResponse,
    ChatFailed,
    Search,
    NoteSave,
    TabSwitch,
    CitationClick,
    Heartbeat,
};

const char* to_string(EventType type);
EventType parse_event_type(std::string_view text);

struct SessionEvent {
    std::uint64_t seq = 0;
    std::int64_t ts_ms = 0;
    EventType type = EventType::Heartbeat;
    nlohmann::json data = nlohmann::json::object();

    nlohmann::json to_json() const;
    static SessionEvent from_json(const nlohmann::json& j);
};

struct TimingConfig {
    double min_minutes = 15.0;
    double max_minutes = 25.0;
    void validate() const;
};

struct TimingState {
    bool can_advance = false;
    bool must_advance = false;
};

TimingState timing_state(std::int64_t active_ms, const TimingConfig& config);

// Heartbeats are expected every 10 s; a longer silence than this is idle time.
inline constexpr std::int64_t kMaxHeartbeatGapMs = 30000;

// Sum of gaps between consecutive heartbeats that do not exceed `max_gap_ms`.
std::int64_t active_ms(const std::vector<SessionEvent>& events, std::int64_t max_gap_ms = kMaxHeartbeatGapMs);

struct SessionMetrics {
    double time_minutes = 0.0;
    std::size_t query_count = 0;  // chat messages plus searches
    std::size_t note_edit_count = 0;
    std::size_t citation_click_count = 0;
    double textbook_tab_fraction = 0.0;

    nlohmann::json to_json() const;
    bool operator==(const SessionMetrics&) const = default;
};

// Share of time on the Document tab. Each tab_switch opens an interval that
// the next one closes; the last interval ends at the latest event.
double textbook_tab_fraction(const std::vector<SessionEvent>& events);

// Fold over the event log only.
SessionMetrics compute_metrics(const std::vector<SessionEvent>& events);

// Append-only JSON-lines file.
class EventLog {
public:
    explicit EventLog(std::filesystem::path path);
    void append(const SessionEvent& event);
    static std::vector<SessionEvent> read(const std::filesystem::path& path);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// One learner session. Mutations are serialized by an internal mutex; at
// most one chat turn runs at a time.
class Session {
public:
    Session(std::string id, Condition condition, std::int64_t created_at_ms, std::filesystem::path dir);

    const std::string& id() const { return id_; }
    Condition condition() const { return condition_; }
    std::int64_t created_at_ms() const { return created_at_ms_; }
    const std::filesystem::path& dir() const { return dir_; }

    SessionEvent append(EventType type, nlohmann::json data, std::int64_t ts_ms);
    std::vector<SessionEvent> events() const;

    std::string notes() const;
    // Replaces the notepad and writes its snapshot.
    void set_notes(std::string text);

    // Claims the single turn slot; false when a turn is already running.
    bool try_begin_turn() { return !turn_in_flight_.exchange(true); }
    void end_turn() { turn_in_flight_ = false; }
    bool turn_in_flight() const { return turn_in_flight_; }

    // Only touched by the holder of the turn slot.
    agent::AgentState& agent_state() { return agent_state_; }
    void add_turn_record(agent::TurnRecord record);
    // Throws NotFound.
    agent::TurnRecord turn_record(int turn) const;

    // Rebuilds a session from its directory.
    static std::unique_ptr<Session> restore(const std::filesystem::path& dir);

private:
    std::string id_;
    Condition condition_;
    std::int64_t created_at_ms_;
    std::filesystem::path dir_;
    EventLog log_;
    mutable std::mutex mutex_;
    std::vector<SessionEvent> events_;
    std::string notes_;
    std::vector<agent::TurnRecord> turns_;
    agent::AgentState agent_state_;
    std::atomic<bool> turn_in_flight_{false};
};

}  // namespace mudoc::service

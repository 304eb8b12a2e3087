#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mudoc/agent/agent.hpp"
#include "mudoc/docsearch/docsearch.hpp"
#include "mudoc/service/session.hpp"

namespace mudoc::service {

struct ServiceConfig {
    std::filesystem::path data_dir = "mudoc-data";
    TimingConfig timing;
    std::size_t notes_cap_bytes = 256 * 1024;
    int max_iterations = 6;
    agent::AgentConfig agent;
    retrieval::RetrievalConfig retrieval;

    void validate() const;
};

using Clock = std::function<std::int64_t()>;  // milliseconds since the epoch

std::int64_t system_clock_ms();

// Holds the turn slot of a session until destroyed.
class TurnTicket {
public:
    explicit TurnTicket(std::shared_ptr<Session> session) : session_(std::move(session)) {}
    TurnTicket(const TurnTicket&) = delete;
    TurnTicket& operator=(const TurnTicket&) = delete;
    ~TurnTicket() { session_->end_turn(); }
    Session& session() { return *session_; }

private:
    std::shared_ptr<Session> session_;
};

// Every session operation, independent of HTTP. Sessions found under
// data_dir/sessions are restored on construction.
class Service {
public:
    Service(std::shared_ptr<retrieval::SearchBackend> backend, gateway::Gateway& gateway, ServiceConfig config,
            Clock clock = system_clock_ms);

    std::shared_ptr<Session> create_session(std::string_view condition);
    // Throws NotFound.
    std::shared_ptr<Session> session(const std::string& id) const;
    std::vector<std::string> session_ids() const;

    // Checks the condition and claims the turn slot: ConditionError for
    // DocSearch sessions, BusyError while a turn runs, ValidationError for an
    // empty message.
    std::unique_ptr<TurnTicket> begin_chat(const std::string& id, const std::string& message);
    // Runs the turn and logs it. The ticket is released when this returns.
    agent::TurnResult run_chat(std::unique_ptr<TurnTicket> ticket, const std::string& message,
                               const agent::EventSink& sink = {});
    // begin_chat followed by run_chat.
    agent::TurnResult chat(const std::string& id, const std::string& message, const agent::EventSink& sink = {});

    // ConditionError unless the session is DocSearch.
    std::vector<docsearch::NavigationResult> search(const std::string& id, const std::string& query);

    // PayloadTooLarge above the notepad cap.
    void save_notes(const std::string& id, std::string text);

    // Client telemetry: heartbeat, tab_switch {tab}, citation_click {doc_id, block_ids}.
    SessionEvent record_client_event(const std::string& id, std::string_view type, const nlohmann::json& data);

    SessionMetrics metrics(const std::string& id) const;
    nlohmann::json timing(const std::string& id) const;
    nlohmann::json trace(const std::string& id, int turn) const;

    // Coordinates of a block, with caption and base64 image for figures.
    nlohmann::json block(const std::string& doc_id, ingest::BlockId block_id) const;
    // Throws NotFound when the block has no image.
    const std::vector<std::uint8_t>& block_image(const std::string& doc_id, ingest::BlockId block_id) const;
    const std::vector<std::uint8_t>& page_image(const std::string& doc_id, int page) const;
    nlohmann::json documents() const;

    const ServiceConfig& config() const { return config_; }
    retrieval::SearchBackend& backend() { return *backend_; }

private:
    std::string new_session_id();

    std::shared_ptr<retrieval::SearchBackend> backend_;
    gateway::Gateway& gateway_;
    ServiceConfig config_;
    Clock clock_;
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t id_counter_ = 0;
};

// HTTP status for an error kind: 400, 404, 409, 413, 429, 502, 500.
int http_status(ErrorKind kind);

}  // namespace mudoc::service

#include "mudoc/service/service.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <mutex>
#include <random>

#include "mudoc/error.hpp"
#include "mudoc/generation/markers.hpp"
#include "mudoc/util.hpp"

namespace mudoc::service {

using nlohmann::json;
namespace fs = std::filesystem;

std::int64_t system_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void ServiceConfig::validate() const {
    timing.validate();
    agent.validate();
    retrieval.validate();
    if (notes_cap_bytes == 0) throw ValidationError("notes cap must be positive");
    if (max_iterations < 1) throw ValidationError("max_iterations must be at least 1");
}

int http_status(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Parse:
        case ErrorKind::Validation:
        case ErrorKind::Precondition: return 400;
        case ErrorKind::NotFound: return 404;
        case ErrorKind::Condition: return 409;
        case ErrorKind::PayloadTooLarge: return 413;
        case ErrorKind::Busy: return 429;
        case ErrorKind::Gateway:
        case ErrorKind::Protocol: return 502;
        default: return 500;
    }
}

Service::Service(std::shared_ptr<retrieval::SearchBackend> backend, gateway::Gateway& gateway, ServiceConfig config,
                 Clock clock)
    : backend_(std::move(backend)), gateway_(gateway), config_(std::move(config)), clock_(std::move(clock)) {
    if (!backend_) throw ValidationError("service requires a search backend");
    config_.validate();
    const auto root = config_.data_dir / "sessions";
    fs::create_directories(root);
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory() || !fs::exists(entry.path() / "events.jsonl")) continue;
        try {
            std::shared_ptr<Session> s = Session::restore(entry.path());
            s->agent_state().max_iterations = config_.max_iterations;
            sessions_[s->id()] = std::move(s);
        } catch (const std::exception& e) {
            spdlog::error("cannot restore session from {}: {}", entry.path().string(), e.what());
        }
    }
    if (!sessions_.empty()) spdlog::info("restored {} session(s) from {}", sessions_.size(), root.string());
}

std::string Service::new_session_id() {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    for (;;) {
        const auto id = "s" + util::hex64(rng() ^ (++id_counter_ * 0x9e3779b97f4a7c15ULL));
        if (!sessions_.contains(id) && !fs::exists(config_.data_dir / "sessions" / id)) return id;
    }
}

std::shared_ptr<Session> Service::create_session(std::string_view condition_text) {
    const auto condition = parse_condition(condition_text);
    std::unique_lock lock(sessions_mutex_);
    const auto id = new_session_id();
    auto s = std::make_shared<Session>(id, condition, clock_(), config_.data_dir / "sessions" / id);
    s->agent_state().max_iterations = config_.max_iterations;
    s->append(EventType::SessionCreated, {{"session_id", id}, {"condition", to_string(condition)}}, s->created_at_ms());
    sessions_[id] = s;
    spdlog::info("session {} created ({})", id, to_string(condition));
    return s;
}

std::shared_ptr<Session> Service::session(const std::string& id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("unknown session " + id);
    return it->second;
}

std::vector<std::string> Service::session_ids() const {
    std::shared_lock lock(sessions_mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : sessions_) out.push_back(id);
    return out;
}

std::unique_ptr<TurnTicket> Service::begin_chat(const std::string& id, const std::string& message) {
    auto s = session(id);
    if (s->condition() == Condition::DocSearch) throw ConditionError("chat is not available in the DocSearch condition");
    if (message.find_first_not_of(" \t\r\n") == std::string::npos) throw ValidationError("empty chat message");
    if (!s->try_begin_turn()) throw BusyError("a turn is already running for session " + id);
    return std::make_unique<TurnTicket>(std::move(s));
}

agent::TurnResult Service::run_chat(std::unique_ptr<TurnTicket> ticket, const std::string& message,
                                    const agent::EventSink& sink) {
    auto& s = ticket->session();
    s.append(EventType::ChatQuery, {{"message", message}}, clock_());
    auto result = agent::run_turn(s.agent_state(), message, gateway_, *backend_, config_.agent, sink);
    switch (result.outcome) {
        case agent::TurnOutcome::Completed:
            s.append(EventType::ChatResponse,
                     {{"turn", result.record.turn}, {"transcript", result.record.transcript},
                      {"record", result.record.to_json()}},
                     clock_());
            s.add_turn_record(result.record);
            break;
        case agent::TurnOutcome::Failed:
        case agent::TurnOutcome::Aborted:
            s.append(EventType::ChatFailed,
                     {{"aborted", result.outcome == agent::TurnOutcome::Aborted}, {"error", result.record.error}},
                     clock_());
            break;
    }
    return result;
}

agent::TurnResult Service::chat(const std::string& id, const std::string& message, const agent::EventSink& sink) {
    return run_chat(begin_chat(id, message), message, sink);
}

std::vector<docsearch::NavigationResult> Service::search(const std::string& id, const std::string& query) {
    auto s = session(id);
    if (s->condition() != Condition::DocSearch)
        throw ConditionError("search is only available in the DocSearch condition");
    if (query.find_first_not_of(" \t\r\n") == std::string::npos) throw ValidationError("empty search query");
    auto results = docsearch::doc_search(query, *backend_, gateway_);
    json ids = json::array();
    for (const auto& r : results) ids.push_back(r.doc_id + ":" + std::to_string(r.block_id));
    s->append(EventType::Search, {{"query", query}, {"results", ids}}, clock_());
    return results;
}

void Service::save_notes(const std::string& id, std::string text) {
    auto s = session(id);
    if (text.size() > config_.notes_cap_bytes)
        throw PayloadTooLarge("notes exceed " + std::to_string(config_.notes_cap_bytes) + " bytes");
    const auto size = text.size();
    s->set_notes(std::move(text));
    s->append(EventType::NoteSave, {{"bytes", size}}, clock_());
}

SessionEvent Service::record_client_event(const std::string& id, std::string_view type, const json& data) {
    auto s = session(id);
    const auto t = parse_event_type(type);
    json payload = json::object();
    switch (t) {
        case EventType::Heartbeat: break;
        case EventType::TabSwitch: {
            if (!data.contains("tab") || !data["tab"].is_string()) throw ValidationError("tab_switch needs a tab");
            const auto tab = data["tab"].get<std::string>();
            if (tab != "Objectives" && tab != "Chat" && tab != "Document")
                throw ValidationError("unknown tab '" + tab + "'");
            if (tab == "Chat" && s->condition() == Condition::DocSearch)
                throw ConditionError("the DocSearch condition has no Chat tab");
            payload["tab"] = tab;
            break;
        }
        case EventType::CitationClick: {
            if (!data.contains("doc_id") || !data["doc_id"].is_string() || !data.contains("block_ids") ||
                !data["block_ids"].is_array())
                throw ValidationError("citation_click needs doc_id and block_ids");
            payload["doc_id"] = data["doc_id"];
            payload["block_ids"] = data["block_ids"];
            break;
        }
        default: throw ValidationError("clients cannot record '" + std::string(type) + "' events");
    }
    return s->append(t, std::move(payload), clock_());
}

SessionMetrics Service::metrics(const std::string& id) const { return compute_metrics(session(id)->events()); }

json Service::timing(const std::string& id) const {
    const auto active = active_ms(session(id)->events());
    const auto state = timing_state(active, config_.timing);
    return {{"active_ms", active},
            {"min_minutes", config_.timing.min_minutes},
            {"max_minutes", config_.timing.max_minutes},
            {"can_advance", state.can_advance},
            {"must_advance", state.must_advance}};
}

json Service::trace(const std::string& id, int turn) const { return session(id)->turn_record(turn).to_json(); }

json Service::block(const std::string& doc_id, ingest::BlockId block_id) const {
    const auto& index = backend_->index();
    const auto loc = generation::resolve_citation({doc_id, {block_id}}, index.catalog()).front();
    json out{{"doc_id", loc.doc_id},
             {"block_id", loc.block_id},
             {"kind", ingest::to_string(loc.kind)},
             {"page", loc.page},
             {"bbox", {loc.bbox.x, loc.bbox.y, loc.bbox.width, loc.bbox.height}}};
    if (loc.kind == ingest::BlockKind::Figure) {
        if (const auto* rec = index.image_record(doc_id, block_id)) {
            out["caption"] = rec->caption;
            out["description"] = rec->description;
        }
        if (const auto* bytes = index.image_bytes(doc_id, block_id)) {
            out["mime_type"] = util::sniff_image_type(*bytes);
            out["image_base64"] = util::base64_encode(*bytes);
            out["image_url"] = "/docs/" + doc_id + "/blocks/" + std::to_string(block_id) + "/image";
        }
    }
    return out;
}

const std::vector<std::uint8_t>& Service::block_image(const std::string& doc_id, ingest::BlockId block_id) const {
    const auto* bytes = backend_->index().image_bytes(doc_id, block_id);
    if (!bytes) throw NotFound("no image for block " + doc_id + ":" + std::to_string(block_id));
    return *bytes;
}

const std::vector<std::uint8_t>& Service::page_image(const std::string& doc_id, int page) const {
    const auto* bytes = backend_->index().page_image(doc_id, page);
    if (!bytes) throw NotFound("no image for page " + std::to_string(page) + " of " + doc_id);
    return *bytes;
}

json Service::documents() const {
    json out = json::array();
    for (const auto& [id, doc] : backend_->index().catalog().documents())
        out.push_back({{"doc_id", id}, {"pages", doc.pages}, {"blocks", doc.blocks.size()}});
    return out;
}

}  // namespace mudoc::service

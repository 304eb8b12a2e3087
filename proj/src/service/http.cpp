#include "mudoc/service/http.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <fstream>

#include "mudoc/error.hpp"
#include "mudoc/util.hpp"

namespace mudoc::service {

using nlohmann::json;
namespace fs = std::filesystem;

AppConfig AppConfig::from_json(const json& j) {
    AppConfig c;
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.index_dir = j.value("index_dir", c.index_dir.string());
    if (j.contains("static_dir") && j["static_dir"].is_string()) c.static_dir = j["static_dir"].get<std::string>();
    c.http_threads = j.value("http_threads", c.http_threads);
    if (j.contains("provider")) c.provider = gateway::ProviderConfig::from_json(j["provider"]);
    c.service.data_dir = j.value("data_dir", c.service.data_dir.string());
    if (j.contains("timing")) {
        c.service.timing.min_minutes = j["timing"].value("min_minutes", c.service.timing.min_minutes);
        c.service.timing.max_minutes = j["timing"].value("max_minutes", c.service.timing.max_minutes);
    }
    c.service.notes_cap_bytes = j.value("notes_cap_bytes", c.service.notes_cap_bytes);
    c.service.max_iterations = j.value("max_iterations", c.service.max_iterations);
    c.service.agent.temperature = j.value("temperature", c.provider.temperature);
    c.service.agent.attach_images = j.value("attach_images", c.service.agent.attach_images);
    c.service.agent.history_char_budget = j.value("history_char_budget", c.service.agent.history_char_budget);
    return c;
}

AppConfig AppConfig::load(const fs::path& path) {
    const auto bytes = util::read_file(path.string());
    const json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (!j.is_object()) throw ParseError("config file " + path.string() + " is not a JSON object");
    return from_json(j);
}

void AppConfig::apply_env(const std::function<const char*(const char*)>& getenv) {
    auto get = [&](const char* name) -> std::optional<std::string> {
        const char* v = getenv(name);
        if (!v || !*v) return std::nullopt;
        return std::string(v);
    };
    if (auto v = get("MUDOC_HOST")) host = *v;
    if (auto v = get("MUDOC_PORT")) {
        int p = 0;
        auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), p);
        if (ec != std::errc{} || ptr != v->data() + v->size()) throw ValidationError("MUDOC_PORT is not a number");
        port = p;
    }
    if (auto v = get("MUDOC_INDEX_DIR")) index_dir = *v;
    if (auto v = get("MUDOC_DATA_DIR")) service.data_dir = *v;
    if (auto v = get("MUDOC_STATIC_DIR")) static_dir = *v;
    if (auto v = get("MUDOC_PROVIDER")) provider.name = *v;
    if (auto v = get("MUDOC_BASE_URL")) provider.base_url = *v;
    if (auto v = get("MUDOC_CHAT_MODEL")) provider.chat_model = *v;
}

void AppConfig::validate() const {
    if (port < 0 || port > 65535) throw ValidationError("port out of range");
    if (http_threads < 2) throw ValidationError("http_threads must be at least 2");
    provider.validate();
    service.validate();
}

std::string sse_frame(const generation::StreamEvent& event) {
    return std::string("event: ") + generation::event_name(event) + "\ndata: " +
           generation::event_payload(event).dump(-1, ' ', false, json::error_handler_t::replace) + "\n\n";
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
    send_json(res, status, {{"error", kind}, {"message", message}});
}

// Runs a handler and turns exceptions into JSON errors.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const Error& e) {
            const int status = http_status(e.kind());
            if (status >= 500) spdlog::error("{} {}: {}", req.method, req.path, e.what());
            send_error(res, status, to_string(e.kind()), e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "Validation", std::string("bad JSON: ") + e.what());
        } catch (const std::exception& e) {
            spdlog::error("{} {}: {}", req.method, req.path, e.what());
            send_error(res, 500, "Internal", e.what());
        }
    };
}

json body_json(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body, nullptr, false);
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
}

std::string required_string(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw ValidationError(std::string("missing string field '") + key + "'");
    return j[key].get<std::string>();
}

template <typename Int>
Int parse_int(const std::string& s, const char* what) {
    Int v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw ValidationError(std::string("bad ") + what);
    return v;
}

void send_bytes(httplib::Response& res, const std::vector<std::uint8_t>& bytes) {
    auto mime = util::sniff_image_type(bytes);
    if (mime.empty()) mime = "application/octet-stream";
    res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), mime);
    res.set_header("Cache-Control", "public, max-age=3600");
}

}  // namespace

HttpServer::HttpServer(Service& service, std::optional<fs::path> static_dir, int threads)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
    const auto n = static_cast<std::size_t>(std::max(2, threads));
    server_->new_task_queue = [n] { return new httplib::ThreadPool(n); };
    server_->set_payload_max_length(16 * 1024 * 1024);
    server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    if (static_dir && !server_->set_mount_point("/", static_dir->string()))
        throw ValidationError("static directory not found: " + static_dir->string());
    install_routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::install_routes() {
    auto& svc = service_;
    auto& s = *server_;

    s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });

    s.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"ok", true}}); });

    s.Post("/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
               const auto body = body_json(req);
               auto session = svc.create_session(required_string(body, "condition"));
               send_json(res, 201,
                         {{"session_id", session->id()},
                          {"condition", to_string(session->condition())},
                          {"created_at_ms", session->created_at_ms()}});
           }));

    s.Get(R"(/sessions/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
              auto session = svc.session(req.matches[1]);
              send_json(res, 200,
                        {{"session_id", session->id()},
                         {"condition", to_string(session->condition())},
                         {"created_at_ms", session->created_at_ms()},
                         {"turn_in_flight", session->turn_in_flight()}});
          }));

    s.Post(R"(/sessions/([^/]+)/chat)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               const auto message = required_string(body_json(req), "message");
               // Condition, busy and validation errors surface as plain HTTP errors.
               auto ticket = std::make_shared<std::unique_ptr<TurnTicket>>(svc.begin_chat(id, message));
               res.set_header("Cache-Control", "no-cache");
               res.set_header("X-Accel-Buffering", "no");
               res.set_chunked_content_provider(
                   "text/event-stream",
                   [&svc, ticket, message](std::size_t, httplib::DataSink& sink) {
                       auto held = std::move(*ticket);
                       if (!held) {
                           sink.done();
                           return true;
                       }
                       auto write = [&sink](const generation::StreamEvent& ev) {
                           const auto frame = sse_frame(ev);
                           return sink.is_writable() && sink.write(frame.data(), frame.size());
                       };
                       try {
                           svc.run_chat(std::move(held), message, write);
                       } catch (const std::exception& e) {
                           spdlog::error("chat stream failed: {}", e.what());
                           write(generation::StreamError{e.what()});
                       }
                       sink.done();
                       return true;
                   },
                   [ticket](bool) { ticket->reset(); });
           }));

    s.Post(R"(/sessions/([^/]+)/search)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
               const auto query = required_string(body_json(req), "query");
               json results = json::array();
               for (const auto& r : svc.search(req.matches[1], query)) results.push_back(r.to_json());
               send_json(res, 200, {{"results", results}});
           }));

    s.Put(R"(/sessions/([^/]+)/notes)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
              std::string text;
              if (req.get_header_value("Content-Type").rfind("application/json", 0) == 0)
                  text = required_string(body_json(req), "text");
              else
                  text = req.body;
              svc.save_notes(req.matches[1], std::move(text));
              send_json(res, 200, {{"ok", true}});
          }));

    s.Get(R"(/sessions/([^/]+)/notes)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, {{"text", svc.session(req.matches[1])->notes()}});
          }));

    s.Post(R"(/sessions/([^/]+)/events)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
               const auto body = body_json(req);
               const auto e = svc.record_client_event(req.matches[1], required_string(body, "type"), body);
               send_json(res, 200, {{"ok", true}, {"seq", e.seq}});
           }));

    s.Get(R"(/sessions/([^/]+)/metrics)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, svc.metrics(req.matches[1]).to_json());
          }));

    s.Get(R"(/sessions/([^/]+)/timing)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, svc.timing(req.matches[1]));
          }));

    s.Get(R"(/sessions/([^/]+)/turns/([0-9]+)/trace)",
          guarded([&svc](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, svc.trace(req.matches[1], parse_int<int>(req.matches[2], "turn")));
          }));

    s.Get("/docs", guarded([&svc](const httplib::Request&, httplib::Response& res) {
              send_json(res, 200, {{"documents", svc.documents()}});
          }));

    s.Get(R"(/docs/([^/]+)/blocks/([0-9]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, svc.block(req.matches[1], parse_int<ingest::BlockId>(req.matches[2], "block id")));
          }));

    s.Get(R"(/docs/([^/]+)/blocks/([0-9]+)/image)",
          guarded([&svc](const httplib::Request& req, httplib::Response& res) {
              send_bytes(res, svc.block_image(req.matches[1], parse_int<ingest::BlockId>(req.matches[2], "block id")));
          }));

    s.Get(R"(/docs/([^/]+)/pages/([0-9]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
              send_bytes(res, svc.page_image(req.matches[1], parse_int<int>(req.matches[2], "page")));
          }));
}

bool HttpServer::listen(const std::string& host, int port) {
    spdlog::info("listening on {}:{}", host, port);
    return server_->listen(host, port);
}

int HttpServer::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool HttpServer::listen_after_bind() { return server_->listen_after_bind(); }

void HttpServer::stop() {
    if (server_) server_->stop();
}

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace mudoc::service

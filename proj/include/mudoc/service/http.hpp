#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mudoc/gateway/gateway.hpp"
#include "mudoc/service/service.hpp"

namespace httplib {
class Server;
}

namespace mudoc::service {

// Everything `serve` needs, from a JSON file and MUDOC_* environment overrides.
struct AppConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path index_dir = "index";
    std::optional<std::filesystem::path> static_dir;
    int http_threads = 32;
    gateway::ProviderConfig provider;
    ServiceConfig service;

    static AppConfig from_json(const nlohmann::json& j);
    static AppConfig load(const std::filesystem::path& path);
    // MUDOC_HOST, MUDOC_PORT, MUDOC_INDEX_DIR, MUDOC_DATA_DIR, MUDOC_STATIC_DIR,
    // MUDOC_PROVIDER, MUDOC_BASE_URL, MUDOC_CHAT_MODEL.
    void apply_env(const std::function<const char*(const char*)>& getenv);
    void validate() const;
};

// One SSE frame: "event: <name>\ndata: <json>\n\n".
std::string sse_frame(const generation::StreamEvent& event);

// HTTP+JSON front end of a Service. Routes:
//   POST /sessions                      {condition}
//   GET  /sessions/{id}
//   POST /sessions/{id}/chat            {message}  -> text/event-stream
//   POST /sessions/{id}/search          {query}
//   PUT  /sessions/{id}/notes           {text} or a text/plain body
//   GET  /sessions/{id}/notes
//   POST /sessions/{id}/events          {type, ...}
//   GET  /sessions/{id}/metrics
//   GET  /sessions/{id}/timing
//   GET  /sessions/{id}/turns/{t}/trace
//   GET  /docs
//   GET  /docs/{doc}/blocks/{id}
//   GET  /docs/{doc}/blocks/{id}/image
//   GET  /docs/{doc}/pages/{n}
//   GET  /healthz
// Errors are {"error": kind, "message": text} with the status of http_status().
class HttpServer {
public:
    HttpServer(Service& service, std::optional<std::filesystem::path> static_dir = {}, int threads = 32);
    ~HttpServer();

    // Blocks until stop().
    bool listen(const std::string& host, int port);
    // Binds an ephemeral port and returns it; then call listen_after_bind().
    int bind_any_port(const std::string& host);
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

private:
    void install_routes();

    Service& service_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace mudoc::service

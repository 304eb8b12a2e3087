// mudoc: ingest layout documents into an index, serve the study API, or run
// one chat turn from the terminal.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <thread>

#include "mudoc/error.hpp"
#include "mudoc/gateway/gateway.hpp"
#include "mudoc/generation/stream.hpp"
#include "mudoc/ingest/pipeline.hpp"
#include "mudoc/retrieval/index.hpp"
#include "mudoc/retrieval/search.hpp"
#include "mudoc/service/http.hpp"
#include "mudoc/service/service.hpp"

namespace fs = std::filesystem;
using namespace mudoc;

namespace {

gateway::ProviderConfig provider_config(const std::optional<std::string>& config_path,
                                        const std::optional<std::string>& provider) {
    gateway::ProviderConfig cfg;
    if (config_path) cfg = service::AppConfig::load(*config_path).provider;
    if (const char* v = std::getenv("MUDOC_PROVIDER"); v && *v) cfg.name = v;
    if (const char* v = std::getenv("MUDOC_BASE_URL"); v && *v) cfg.base_url = v;
    if (const char* v = std::getenv("MUDOC_CHAT_MODEL"); v && *v) cfg.chat_model = v;
    if (provider) cfg.name = *provider;
    cfg.validate();
    return cfg;
}

int run_ingest(const std::string& input, const std::string& out, std::size_t min_chars, const std::string& overlap,
               int jobs, const std::optional<std::string>& config_path, const std::optional<std::string>& provider) {
    ingest::IngestConfig cfg;
    cfg.min_chunk_chars = min_chars;
    cfg.overlap_fraction = ingest::Fraction::parse(overlap);
    cfg.max_in_flight = jobs;
    cfg.validate();
    auto gw = gateway::make_gateway(provider_config(config_path, provider));
    auto report = ingest::ingest_directory(input, cfg, *gw);
    for (const auto& w : report.warnings) spdlog::warn("{}", w);
    report.index->save(out);
    spdlog::info("indexed {} document(s), {} block(s), {} chunk(s), {} image(s) into {}", report.documents,
                 report.blocks, report.index->text_count(), report.index->image_count(), out);
    return 0;
}

void block_signals(sigset_t& set) {
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

int run_serve(service::AppConfig app) {
    app.validate();
    auto index = std::make_shared<const retrieval::Index>(retrieval::Index::load(app.index_dir));
    auto gw = gateway::make_gateway(app.provider);
    auto backend = std::make_shared<retrieval::Retriever>(index, *gw, app.service.retrieval);
    service::Service svc(backend, *gw, app.service);
    service::HttpServer server(svc, app.static_dir, app.http_threads);

    sigset_t set;
    block_signals(set);
    std::jthread waiter([&server, set] {
        int sig = 0;
        sigwait(&set, &sig);
        spdlog::info("signal {} received, stopping", sig);
        server.stop();
    });
    const bool ok = server.listen(app.host, app.port);
    if (!ok) {
        spdlog::error("cannot listen on {}:{}", app.host, app.port);
        pthread_kill(waiter.native_handle(), SIGTERM);
        return 1;
    }
    return 0;
}

int run_chat(const std::string& index_dir, const std::string& condition, const std::string& message,
             const std::string& data_dir, const std::optional<std::string>& config_path,
             const std::optional<std::string>& provider) {
    auto index = std::make_shared<const retrieval::Index>(retrieval::Index::load(index_dir));
    auto gw = gateway::make_gateway(provider_config(config_path, provider));
    auto backend = std::make_shared<retrieval::Retriever>(index, *gw);
    service::ServiceConfig cfg;
    cfg.data_dir = data_dir;
    service::Service svc(backend, *gw, cfg);
    auto session = svc.create_session(condition);
    if (session->condition() == service::Condition::DocSearch) {
        for (const auto& r : svc.search(session->id(), message))
            std::cout << r.to_json().dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
        return 0;
    }
    auto result = svc.chat(session->id(), message, [](const generation::StreamEvent& ev) {
        std::cout << service::sse_frame(ev) << std::flush;
        return true;
    });
    return result.outcome == agent::TurnOutcome::Completed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MuDoC ingestion, retrieval and study service"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

    std::optional<std::string> config_path, provider;

    auto* ingest_cmd = app.add_subcommand("ingest", "Build an index from layout JSON files");
    std::string input, out;
    std::size_t min_chars = 8000;
    std::string overlap = "0.5";
    int jobs = 4;
    ingest_cmd->add_option("--input", input, "Directory of layout JSON files")->required()->check(CLI::ExistingDirectory);
    ingest_cmd->add_option("--out", out, "Index output directory")->required();
    ingest_cmd->add_option("--min-chunk-chars", min_chars)->capture_default_str();
    ingest_cmd->add_option("--overlap", overlap, "Overlap fraction, decimal or p/q")->capture_default_str();
    ingest_cmd->add_option("--jobs", jobs, "Concurrent provider calls")->capture_default_str();
    ingest_cmd->add_option("--provider", provider, "openai or mock");
    ingest_cmd->add_option("--config", config_path, "JSON config file");

    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP study service");
    std::optional<int> port;
    std::optional<std::string> index_dir, data_dir, static_dir, host;
    serve_cmd->add_option("--port", port);
    serve_cmd->add_option("--host", host);
    serve_cmd->add_option("--index-dir", index_dir);
    serve_cmd->add_option("--data-dir", data_dir);
    serve_cmd->add_option("--static-dir", static_dir, "Serve the study UI from this directory");
    serve_cmd->add_option("--provider", provider, "openai or mock");
    serve_cmd->add_option("--config", config_path, "JSON config file");

    auto* chat_cmd = app.add_subcommand("chat", "Run one turn against an index and print the event stream");
    std::string chat_index, condition = "MuDoC", message, chat_data = "mudoc-cli-data";
    chat_cmd->add_option("--index-dir", chat_index)->required()->check(CLI::ExistingDirectory);
    chat_cmd->add_option("--condition", condition)->capture_default_str();
    chat_cmd->add_option("--data-dir", chat_data)->capture_default_str();
    chat_cmd->add_option("--provider", provider, "openai or mock");
    chat_cmd->add_option("--config", config_path, "JSON config file");
    chat_cmd->add_option("message", message)->required();

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*ingest_cmd) return run_ingest(input, out, min_chars, overlap, jobs, config_path, provider);
        if (*serve_cmd) {
            service::AppConfig cfg = config_path ? service::AppConfig::load(*config_path) : service::AppConfig{};
            cfg.apply_env([](const char* name) { return std::getenv(name); });
            if (port) cfg.port = *port;
            if (host) cfg.host = *host;
            if (index_dir) cfg.index_dir = *index_dir;
            if (data_dir) cfg.service.data_dir = *data_dir;
            if (static_dir) cfg.static_dir = *static_dir;
            if (provider) cfg.provider.name = *provider;
            return run_serve(std::move(cfg));
        }
        if (*chat_cmd) return run_chat(chat_index, condition, message, chat_data, config_path, provider);
    } catch (const Error& e) {
        spdlog::error("{}: {}", to_string(e.kind()), gateway::redact_secrets(e.what()));
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", gateway::redact_secrets(e.what()));
        return 2;
    }
    return 0;
}

#include "mudoc/gateway/openai_provider.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <exception>

#include "mudoc/simd/kernels.hpp"
#include "mudoc/util.hpp"

namespace mudoc::gateway {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JsonStringFieldStreamer

JsonStringFieldStreamer::JsonStringFieldStreamer(std::string field) : field_(std::move(field)) {}

namespace {

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

bool parse_hex4(std::string_view s, std::uint32_t& out) {
    if (s.size() < 4) return false;
    out = 0;
    for (int i = 0; i < 4; ++i) {
        const char c = s[i];
        out <<= 4;
        if (c >= '0' && c <= '9') out |= static_cast<std::uint32_t>(c - '0');
        else if (c >= 'a' && c <= 'f') out |= static_cast<std::uint32_t>(c - 'a' + 10);
        else if (c >= 'A' && c <= 'F') out |= static_cast<std::uint32_t>(c - 'A' + 10);
        else return false;
    }
    return true;
}

}  // namespace

std::string JsonStringFieldStreamer::feed(std::string_view fragment) {
    buffer_.append(fragment);
    std::string out;
    const std::string key = "\"" + field_ + "\"";

    while (state_ == State::Seeking) {
        const auto p = buffer_.find(key, cursor_);
        if (p == std::string::npos) {
            // Keep a tail that could still grow into the key.
            if (buffer_.size() > key.size()) cursor_ = std::max(cursor_, buffer_.size() - key.size());
            return out;
        }
        if (p > 0 && buffer_[p - 1] == '\\') {
            cursor_ = p + 1;
            continue;
        }
        std::size_t i = p + key.size();
        while (i < buffer_.size() && std::isspace(static_cast<unsigned char>(buffer_[i]))) ++i;
        if (i == buffer_.size()) { cursor_ = p; return out; }
        if (buffer_[i] != ':') { cursor_ = p + 1; continue; }
        ++i;
        while (i < buffer_.size() && std::isspace(static_cast<unsigned char>(buffer_[i]))) ++i;
        if (i == buffer_.size()) { cursor_ = p; return out; }
        if (buffer_[i] != '"') { cursor_ = p + 1; continue; }
        cursor_ = i + 1;
        state_ = State::InValue;
    }

    while (state_ == State::InValue && cursor_ < buffer_.size()) {
        const char c = buffer_[cursor_];
        if (c == '"') {
            state_ = State::Done;
            break;
        }
        if (c != '\\') {
            out += c;
            ++cursor_;
            continue;
        }
        if (cursor_ + 1 >= buffer_.size()) break;
        const char e = buffer_[cursor_ + 1];
        switch (e) {
            case '"': out += '"'; break;
            case '\\': out += '\\'; break;
            case '/': out += '/'; break;
            case 'b': out += '\b'; break;
            case 'f': out += '\f'; break;
            case 'n': out += '\n'; break;
            case 'r': out += '\r'; break;
            case 't': out += '\t'; break;
            case 'u': {
                std::uint32_t cp = 0;
                std::string_view rest(buffer_);
                rest.remove_prefix(cursor_ + 2);
                if (rest.size() < 4) return out;
                if (!parse_hex4(rest, cp)) {
                    cursor_ += 2;
                    continue;
                }
                std::size_t consumed = 6;
                if (cp >= 0xD800 && cp <= 0xDBFF) {
                    if (rest.size() < 10) return out;
                    std::uint32_t low = 0;
                    if (rest[4] == '\\' && rest[5] == 'u' && parse_hex4(rest.substr(6), low) && low >= 0xDC00 &&
                        low <= 0xDFFF) {
                        cp = 0x10000 + ((cp - 0xD800) << 10) + (low - 0xDC00);
                        consumed = 12;
                    }
                }
                append_utf8(out, cp);
                cursor_ += consumed;
                continue;
            }
            default: out += e; break;
        }
        cursor_ += 2;
    }
    return out;
}

// ---------------------------------------------------------------------------
// OpenAIProvider

namespace {

void split_base_url(const std::string& url, std::string& origin, std::string& prefix) {
    const auto scheme_end = url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = url.find('/', host_start);
    if (path_start == std::string::npos) {
        origin = url;
        prefix.clear();
    } else {
        origin = url.substr(0, path_start);
        prefix = url.substr(path_start);
        while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    }
}

json message_to_json(const ChatMessage& m) {
    json j{{"role", to_string(m.role)}};
    if (m.images.empty()) {
        j["content"] = m.content;
    } else {
        json parts = json::array();
        if (!m.content.empty()) parts.push_back({{"type", "text"}, {"text", m.content}});
        for (const auto& img : m.images) {
            const std::string mime = img.mime_type.empty() ? "image/png" : img.mime_type;
            parts.push_back({{"type", "image_url"},
                             {"image_url", {{"url", "data:" + mime + ";base64," + util::base64_encode(img.bytes)}}}});
        }
        j["content"] = parts;
    }
    if (!m.tool_calls.empty()) {
        if (m.content.empty()) j["content"] = nullptr;
        json calls = json::array();
        for (const auto& c : m.tool_calls)
            calls.push_back({{"id", c.id}, {"type", "function"}, {"function", {{"name", c.name}, {"arguments", c.arguments}}}});
        j["tool_calls"] = calls;
    }
    if (m.role == Role::Tool) j["tool_call_id"] = m.tool_call_id;
    return j;
}

std::unique_ptr<httplib::Client> make_client(const std::string& origin, double timeout_seconds) {
    auto client = std::make_unique<httplib::Client>(origin);
    const auto secs = static_cast<time_t>(timeout_seconds);
    const auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
    client->set_connection_timeout(secs, usecs);
    client->set_read_timeout(secs, usecs);
    client->set_write_timeout(secs, usecs);
    return client;
}

httplib::Headers auth_headers(const ProviderConfig& config) {
    httplib::Headers headers;
    if (!config.api_key_env.empty()) {
        if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    return headers;
}

[[noreturn]] void throw_for_status(int status, const std::string& body) {
    const std::string msg = "provider returned HTTP " + std::to_string(status) + ": " +
                            redact_secrets(body.substr(0, 300));
    if (status == 429 || status >= 500) throw TransientError(msg);
    throw GatewayError(msg);
}

}  // namespace

OpenAIProvider::OpenAIProvider(ProviderConfig config) : config_(std::move(config)) {
    config_.validate();
    split_base_url(config_.base_url, origin_, prefix_);
}

json OpenAIProvider::chat_body(const ChatRequest& request, bool stream) const {
    json messages = json::array();
    for (const auto& m : request.messages) messages.push_back(message_to_json(m));
    json body{{"model", config_.chat_model}, {"messages", messages}, {"temperature", request.temperature}};
    if (!request.tools.empty()) {
        json tools = json::array();
        for (const auto& t : request.tools)
            tools.push_back({{"type", "function"},
                             {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}});
        body["tools"] = tools;
        body["tool_choice"] = request.require_tool ? "required" : "auto";
        body["parallel_tool_calls"] = false;
    }
    if (stream) body["stream"] = true;
    return body;
}

ChatCompletion OpenAIProvider::parse_completion(const json& body) {
    if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty())
        throw GatewayError("completion response has no choices");
    const json& msg = body["choices"][0].value("message", json::object());
    ChatCompletion out;
    if (msg.contains("content") && msg["content"].is_string()) out.content = msg["content"].get<std::string>();
    if (msg.contains("tool_calls") && msg["tool_calls"].is_array()) {
        for (const auto& c : msg["tool_calls"]) {
            const json& fn = c.value("function", json::object());
            out.tool_calls.push_back({c.value("id", ""), fn.value("name", ""), fn.value("arguments", "")});
        }
    }
    return out;
}

json OpenAIProvider::post_json(const std::string& path, const json& body) {
    auto client = make_client(origin_, config_.timeout_seconds);
    spdlog::debug("POST {}{} ({} bytes)", origin_, prefix_ + path, body.dump().size());
    auto res = client->Post(prefix_ + path, auth_headers(config_), body.dump(), "application/json");
    if (!res) throw TransientError("request to " + origin_ + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw_for_status(res->status, res->body);
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw GatewayError("provider returned invalid JSON");
    return parsed;
}

ChatCompletion OpenAIProvider::chat(const ChatRequest& request, const TextDeltaHandler& on_text) {
    const bool stream = static_cast<bool>(on_text) && !request.stream_field.empty();
    if (!stream) return parse_completion(post_json("/chat/completions", chat_body(request, false)));

    auto client = make_client(origin_, config_.timeout_seconds);
    httplib::Request req;
    req.method = "POST";
    req.path = prefix_ + "/chat/completions";
    req.headers = auth_headers(config_);
    req.headers.emplace("Accept", "text/event-stream");
    req.body = chat_body(request, true).dump();
    req.set_header("Content-Type", "application/json");

    ChatCompletion out;
    std::vector<JsonStringFieldStreamer> streamers;
    std::string pending;
    std::string error_body;
    int status = 0;
    std::exception_ptr handler_error;

    auto handle_event = [&](const std::string& data) {
        if (data == "[DONE]") return;
        json chunk = json::parse(data, nullptr, false);
        if (!chunk.is_object() || !chunk.contains("choices") || chunk["choices"].empty()) return;
        const json& delta = chunk["choices"][0].value("delta", json::object());
        if (delta.contains("content") && delta["content"].is_string()) out.content += delta["content"].get<std::string>();
        if (!delta.contains("tool_calls")) return;
        for (const auto& tc : delta["tool_calls"]) {
            const auto index = tc.value("index", std::size_t{0});
            while (out.tool_calls.size() <= index) {
                out.tool_calls.emplace_back();
                streamers.emplace_back(request.stream_field);
            }
            auto& call = out.tool_calls[index];
            if (tc.contains("id") && tc["id"].is_string()) call.id = tc["id"].get<std::string>();
            if (!tc.contains("function")) continue;
            const json& fn = tc["function"];
            if (fn.contains("name") && fn["name"].is_string()) call.name += fn["name"].get<std::string>();
            if (fn.contains("arguments") && fn["arguments"].is_string()) {
                const auto piece = fn["arguments"].get<std::string>();
                call.arguments += piece;
                // Only the first call is ever acted on, so only it is streamed.
                if (auto text = streamers[index].feed(piece); index == 0 && !text.empty()) on_text(text);
            }
        }
    };

    req.response_handler = [&](const httplib::Response& r) {
        status = r.status;
        return true;
    };
    req.content_receiver = [&](const char* data, size_t len, uint64_t, uint64_t) {
        if (status != 200) {
            error_body.append(data, len);
            return true;
        }
        pending.append(data, len);
        std::size_t pos;
        while ((pos = pending.find('\n')) != std::string::npos) {
            std::string line = pending.substr(0, pos);
            pending.erase(0, pos + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.rfind("data:", 0) == 0) {
                std::string payload = line.substr(5);
                if (!payload.empty() && payload.front() == ' ') payload.erase(0, 1);
                try {
                    handle_event(payload);
                } catch (...) {
                    // Raised by the delta handler; stop reading and rethrow below.
                    handler_error = std::current_exception();
                    return false;
                }
            }
        }
        return true;
    };

    httplib::Response res;
    httplib::Error err = httplib::Error::Success;
    const bool sent = client->send(req, res, err);
    if (handler_error) std::rethrow_exception(handler_error);
    if (!sent)
        throw TransientError("streaming request to " + origin_ + " failed: " + httplib::to_string(err));
    if (status != 200) throw_for_status(status, error_body);
    return out;
}

std::vector<Vector> OpenAIProvider::embed_text(const std::vector<std::string>& texts) {
    json body{{"model", config_.text_embedding_model}, {"input", texts}};
    json res = post_json("/embeddings", body);
    if (!res.contains("data") || !res["data"].is_array() || res["data"].size() != texts.size())
        throw GatewayError("embedding response size mismatch");
    std::vector<Vector> out(texts.size());
    for (const auto& item : res["data"]) {
        const auto index = item.value("index", std::size_t{0});
        if (index >= out.size()) throw GatewayError("embedding index out of range");
        out[index] = item.at("embedding").get<Vector>();
        simd::normalize(out[index]);
    }
    return out;
}

std::vector<Vector> OpenAIProvider::embed_image_text(const std::vector<std::string>& texts) {
    json body{{"model", config_.image_embedding_model}, {"input", texts}};
    json res = post_json(config_.image_embedding_path, body);
    if (!res.contains("data") || !res["data"].is_array() || res["data"].size() != texts.size())
        throw GatewayError("image-space text embedding response size mismatch");
    std::vector<Vector> out(texts.size());
    for (const auto& item : res["data"]) {
        const auto index = item.value("index", std::size_t{0});
        if (index >= out.size()) throw GatewayError("embedding index out of range");
        out[index] = item.at("embedding").get<Vector>();
    }
    return out;
}

Vector OpenAIProvider::embed_image(std::span<const std::uint8_t> bytes) {
    std::string mime = util::sniff_image_type(bytes);
    if (mime.empty()) mime = "application/octet-stream";
    json body{{"model", config_.image_embedding_model},
              {"input", json::array({"data:" + mime + ";base64," + util::base64_encode(bytes)})}};
    json res = post_json(config_.image_embedding_path, body);
    if (!res.contains("data") || !res["data"].is_array() || res["data"].empty())
        throw GatewayError("image embedding response has no data");
    return res["data"][0].at("embedding").get<Vector>();
}

}  // namespace mudoc::gateway

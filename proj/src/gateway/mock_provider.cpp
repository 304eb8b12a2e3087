#include "mudoc/gateway/mock_provider.hpp"

#include <algorithm>
#include <cstdio>
#include <regex>

#include "mudoc/simd/kernels.hpp"

namespace mudoc::gateway {

using nlohmann::json;

MockStep MockStep::text(std::string content) {
    MockStep step;
    step.completion.content = std::move(content);
    return step;
}

MockStep MockStep::tool(std::string name, const json& arguments, std::vector<std::string> stream_tokens) {
    MockStep step;
    step.completion.tool_calls.push_back({"call_0", std::move(name), arguments.dump()});
    step.stream_tokens = std::move(stream_tokens);
    return step;
}

MockStep MockStep::raw_tool(std::string name, std::string raw_arguments) {
    MockStep step;
    step.completion.tool_calls.push_back({"call_0", std::move(name), std::move(raw_arguments)});
    step.verbatim = true;
    return step;
}

MockStep MockStep::transient_failure() {
    MockStep step;
    step.failure = Failure::Transient;
    return step;
}

MockStep MockStep::permanent_failure() {
    MockStep step;
    step.failure = Failure::Permanent;
    return step;
}

namespace {

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::span<const std::uint8_t> as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

bool has_tool(const ChatRequest& request, std::string_view name) {
    return std::any_of(request.tools.begin(), request.tools.end(),
                       [&](const ToolSchema& t) { return t.name == name; });
}

bool tool_has_property(const ChatRequest& request, std::string_view tool, const char* property) {
    for (const auto& t : request.tools)
        if (t.name == tool) return t.parameters.contains("properties") && t.parameters["properties"].contains(property);
    return false;
}

void stream_in_pieces(const std::string& text, std::size_t piece, const TextDeltaHandler& on_text) {
    for (std::size_t i = 0; i < text.size(); i += piece) on_text(std::string_view(text).substr(i, piece));
}

json policy_trace(std::string_view reasoning) {
    return {{"query_reflection", "The learner asks about the topic directly."},
            {"search_content_reflection", "Checked the retrieved material for coverage."},
            {"action_reasoning", std::string(reasoning)}};
}

ChatCompletion tool_completion(const std::string& name, const json& args) {
    ChatCompletion c;
    c.tool_calls.push_back({"call_policy", name, args.dump()});
    return c;
}

}  // namespace

MockProvider::MockProvider(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {}

Vector MockProvider::hash_vector(std::span<const std::uint8_t> bytes, std::uint64_t seed, std::size_t dimension) {
    std::uint64_t state = fnv1a(bytes, seed);
    Vector v(dimension);
    for (auto& x : v) {
        const std::uint64_t r = splitmix64(state) >> 40;  // 24 bits
        x = static_cast<float>(r) / 8388608.0f - 1.0f;
    }
    return v;
}

void MockProvider::script(const std::string& tag, std::vector<MockStep> steps) {
    std::lock_guard lock(mutex_);
    auto& queue = scripts_[tag];
    for (auto& s : steps) queue.push_back(std::move(s));
    scripted_tags_.insert(tag);
}

std::size_t MockProvider::remaining(const std::string& tag) const {
    std::lock_guard lock(mutex_);
    auto it = scripts_.find(tag);
    return it == scripts_.end() ? 0 : it->second.size();
}

ChatCompletion MockProvider::chat(const ChatRequest& request, const TextDeltaHandler& on_text) {
    ++chat_calls_;
    MockStep step;
    bool scripted = false;
    {
        std::lock_guard lock(mutex_);
        scripted = scripted_tags_.contains(request.tag);
        if (scripted) {
            auto& queue = scripts_[request.tag];
            if (queue.empty()) throw GatewayError("mock script exhausted for tag '" + request.tag + "'");
            step = std::move(queue.front());
            queue.pop_front();
        }
    }
    if (!scripted) return policy_response(request, on_text);

    switch (step.failure) {
        case MockStep::Failure::Transient: throw TransientError("mock transient failure");
        case MockStep::Failure::Permanent: throw GatewayError("mock permanent failure");
        case MockStep::Failure::None: break;
    }
    if (!step.verbatim && !request.tools.empty() && !step.completion.tool_calls.empty() &&
        !has_tool(request, step.completion.tool_calls.front().name))
        return policy_response(request, on_text);
    if (on_text && !request.stream_field.empty()) {
        if (!step.stream_tokens.empty()) {
            for (const auto& t : step.stream_tokens) on_text(t);
        } else {
            for (const auto& call : step.completion.tool_calls) {
                json args = json::parse(call.arguments, nullptr, false);
                if (args.is_object() && args.contains(request.stream_field) &&
                    args[request.stream_field].is_string())
                    on_text(args[request.stream_field].get<std::string>());
            }
        }
    }
    return step.completion;
}

ChatCompletion MockProvider::policy_response(const ChatRequest& request, const TextDeltaHandler& on_text) const {
    const std::string last_user = [&] {
        for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it)
            if (it->role == Role::User && it->images.empty()) return it->content;
        return std::string{};
    }();

    if (request.purpose == "summarize") {
        std::string summary = last_user.substr(0, 160);
        if (summary.empty()) summary = "empty";
        ChatCompletion c;
        c.content = "Summary: " + summary;
        return c;
    }

    if (request.purpose == "describe_image") {
        std::vector<std::uint8_t> all;
        for (const auto& m : request.messages)
            for (const auto& img : m.images) all.insert(all.end(), img.bytes.begin(), img.bytes.end());
        char hex[17];
        std::snprintf(hex, sizeof hex, "%016llx",
                      static_cast<unsigned long long>(fnv1a(all, seed_)));
        ChatCompletion c;
        c.content = json{{"caption", std::string("Figure ") + std::string(hex, 8)},
                         {"description", "Figure extracted from the document (" +
                                             std::to_string(all.size()) + " bytes)."}}
                        .dump();
        return c;
    }

    if (request.purpose == "docsearch_filter") {
        static const std::regex line_re(R"(^- ([A-Za-z0-9_.\-]+:[0-9]+) \|)", std::regex::multiline);
        json ids = json::array();
        for (auto it = std::sregex_iterator(last_user.begin(), last_user.end(), line_re);
             it != std::sregex_iterator(); ++it)
            ids.push_back((*it)[1].str());
        ChatCompletion c;
        c.content = json{{"block_ids", ids}}.dump();
        return c;
    }

    if (request.purpose == "agent_step") {
        // Tool results that belong to the current turn.
        std::size_t turn_start = 0;
        for (std::size_t i = 0; i < request.messages.size(); ++i)
            if (request.messages[i].role == Role::User && request.messages[i].images.empty()) turn_start = i;
        std::string results;
        for (std::size_t i = turn_start; i < request.messages.size(); ++i)
            if (request.messages[i].role == Role::Tool) results += request.messages[i].content + "\n";

        if (results.empty() && has_tool(request, "content_search")) {
            json args = policy_trace("Search the textbook for the requested concept.");
            args["text_queries"] = json::array({last_user});
            if (tool_has_property(request, "content_search", "image_queries"))
                args["image_queries"] = json::array({last_user});
            return tool_completion("content_search", args);
        }

        static const std::regex cite_re(R"(\[\[cite:[A-Za-z0-9_.\-]+:[0-9]+(,[0-9]+)*\]\])");
        static const std::regex figure_re(R"(block://([A-Za-z0-9_.\-]+)/([0-9]+) \| caption: ([^|\n]*))");
        std::string content;
        std::smatch m;
        if (std::regex_search(results, m, cite_re)) {
            content = "According to the textbook, this is explained in the retrieved section " + m.str(0) + ".";
            if (std::regex_search(results, m, figure_re)) {
                const std::string caption = m[3].str();
                content += "\n<figure><img src=\"block://" + m[1].str() + "/" + m[2].str() +
                           "\"><figcaption>" + caption.substr(0, caption.find_last_not_of(' ') + 1) +
                           "</figcaption></figure>\n";
            }
            content += " Can you explain this idea in your own words?";
        } else {
            content = "I could not find this in the textbook. Could you rephrase your question?";
        }
        json args = policy_trace("Enough context has been retrieved to answer.");
        args["content"] = content;
        if (on_text && request.stream_field == "content") stream_in_pieces(content, kPolicyTokenBytes, on_text);
        return tool_completion("final_response", args);
    }

    ChatCompletion c;
    c.content = "ok";
    return c;
}

std::vector<Vector> MockProvider::embed_text(const std::vector<std::string>& texts) {
    ++embed_calls_;
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        Vector v = hash_vector(as_bytes(t), seed_, dimension_);
        simd::normalize(v);
        out.push_back(std::move(v));
    }
    return out;
}

Vector MockProvider::embed_image(std::span<const std::uint8_t> bytes) {
    ++embed_calls_;
    return hash_vector(bytes, seed_ ^ kImageSalt, dimension_);
}

}  // namespace mudoc::gateway

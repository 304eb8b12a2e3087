#include <doctest.h>
#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <thread>

#include "mudoc/error.hpp"
#include "mudoc/gateway/gateway.hpp"
#include "mudoc/gateway/mock_provider.hpp"
#include "mudoc/gateway/openai_provider.hpp"
#include "support.hpp"

using namespace mudoc;
using namespace mudoc::gateway;
using nlohmann::json;

namespace {

// Recomputes the mock embedding rule from its description: FNV-1a over the
// bytes with the seed folded into the offset basis, then SplitMix64 draws
// whose top 24 bits map linearly onto [-1, 1).
std::vector<float> hash_oracle(const std::string& bytes, std::uint64_t seed, std::size_t dim) {
    std::uint64_t h = 14695981039346656037ULL ^ seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::vector<float> v;
    for (std::size_t i = 0; i < dim; ++i) {
        h += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = h;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z ^= z >> 31;
        v.push_back(static_cast<float>(z >> 40) / float(1 << 23) - 1.0f);
    }
    return v;
}

// Fails the first `failures` calls with a transient error, counting requests.
class CountingProvider : public Provider {
public:
    explicit CountingProvider(int failures) : failures_(failures) {}
    std::string name() const override { return "counting"; }
    ChatCompletion chat(const ChatRequest&, const TextDeltaHandler&) override {
        if (++calls <= failures_) throw TransientError("flaky");
        return {"ok", {}};
    }
    std::vector<Vector> embed_text(const std::vector<std::string>& texts) override {
        if (++calls <= failures_) throw TransientError("flaky");
        return std::vector<Vector>(texts.size(), Vector{3, 4});
    }
    Vector embed_image(std::span<const std::uint8_t>) override { return {1}; }
    int calls = 0;

private:
    int failures_;
};

ChatRequest request(const std::string& tag, const std::string& purpose = "test") {
    ChatRequest r;
    r.tag = tag;
    r.purpose = purpose;
    r.messages.push_back({Role::User, "hello"});
    return r;
}

}  // namespace

TEST_CASE("mock text embeddings are deterministic unit vectors in input order") {
    MockProvider mock(32);
    const auto a = mock.embed_text({"abc", "xyz", "abc"});
    REQUIRE(a.size() == 3);
    CHECK(a[0] == a[2]);
    CHECK(a[0] != a[1]);
    double n = 0;
    for (float x : a[0]) n += double(x) * x;
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));

    auto expected = hash_oracle("abc", MockProvider::kDefaultSeed, 32);
    double en = 0;
    for (float x : expected) en += double(x) * x;
    for (std::size_t i = 0; i < 32; ++i) CHECK(a[0][i] == doctest::Approx(expected[i] / std::sqrt(en)).epsilon(1e-6));
}

TEST_CASE("mock image embedding equals the seeded-hash oracle") {
    MockProvider mock(16);
    const std::string bytes = "\x89PNG\r\n\x1a\nabc";
    const auto v = mock.embed_image({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
    CHECK(v == hash_oracle(bytes, MockProvider::kDefaultSeed ^ MockProvider::kImageSalt, 16));
    MockProvider other(16, 42);
    CHECK(other.embed_text({"abc"}) != mock.embed_text({"abc"}));
}

TEST_CASE("scripted steps come back in order, then the script runs dry") {
    auto mock = std::make_shared<MockProvider>();
    Gateway gw(mock, {0, std::chrono::milliseconds{0}, 1.0});
    mock->script("t", {MockStep::text("one"), MockStep::text("two")});
    CHECK(gw.chat(request("t")).content == "one");
    CHECK(gw.chat(request("t")).content == "two");
    CHECK_THROWS_AS(gw.chat(request("t")), GatewayError);
    // Unscripted tags use the built-in policy.
    CHECK(gw.chat(request("other", "summarize")).content.rfind("Summary: ", 0) == 0);
}

TEST_CASE("retry accounting: success on attempt k makes exactly k requests") {
    for (int k = 1; k <= 3; ++k) {
        auto provider = std::make_shared<CountingProvider>(k - 1);
        Gateway gw(provider, {2, std::chrono::milliseconds{0}, 1.0});
        CHECK(gw.chat(request("x")).content == "ok");
        CHECK(provider->calls == k);
    }
    auto provider = std::make_shared<CountingProvider>(3);
    Gateway gw(provider, {2, std::chrono::milliseconds{0}, 1.0});
    CHECK_THROWS_AS(gw.chat(request("x")), GatewayError);
    CHECK(provider->calls == 3);

    auto embedder = std::make_shared<CountingProvider>(1);
    Gateway egw(embedder, {2, std::chrono::milliseconds{0}, 1.0});
    const auto v = egw.embed_text({"a"});
    CHECK(embedder->calls == 2);
    CHECK(v[0][0] == doctest::Approx(0.6));
}

TEST_CASE("permanent failures are not retried") {
    auto mock = std::make_shared<MockProvider>();
    Gateway gw(mock, {2, std::chrono::milliseconds{0}, 1.0});
    mock->script("p", {MockStep::permanent_failure(), MockStep::text("never")});
    CHECK_THROWS_AS(gw.chat(request("p")), GatewayError);
    CHECK(mock->chat_calls() == 1);
    mock->script("q", {MockStep::transient_failure(), MockStep::text("after")});
    CHECK(gw.chat(request("q")).content == "after");
}

TEST_CASE("concurrent callers get their own scripted replies") {
    auto mock = std::make_shared<MockProvider>();
    Gateway gw(mock, {2, std::chrono::milliseconds{0}, 1.0}, 8);
    constexpr int kSessions = 8, kCalls = 50;
    for (int s = 0; s < kSessions; ++s) {
        std::vector<MockStep> steps;
        for (int c = 0; c < kCalls; ++c) {
            if (c % 7 == 3) steps.push_back(MockStep::transient_failure());
            steps.push_back(MockStep::text("s" + std::to_string(s) + "-" + std::to_string(c)));
        }
        mock->script("session" + std::to_string(s), std::move(steps));
    }
    std::vector<int> mismatches(kSessions, 0);
    {
        std::vector<std::jthread> threads;
        for (int s = 0; s < kSessions; ++s) {
            threads.emplace_back([&, s] {
                for (int c = 0; c < kCalls; ++c) {
                    const auto reply = gw.chat(request("session" + std::to_string(s))).content;
                    if (reply != "s" + std::to_string(s) + "-" + std::to_string(c)) ++mismatches[s];
                }
            });
        }
    }
    for (int s = 0; s < kSessions; ++s) CHECK(mismatches[s] == 0);
}

TEST_CASE("scripted tool calls outside the offered tools fall back to the policy") {
    auto mock = std::make_shared<MockProvider>();
    Gateway gw(mock, {0, std::chrono::milliseconds{0}, 1.0});
    auto req = request("t", "agent_step");
    req.tools.push_back({"final_response", "", json::object()});
    mock->script("t", {MockStep::tool("content_search", {{"text_queries", {"x"}}}),
                       MockStep::raw_tool("content_search", "{oops")});
    const auto first = gw.chat(req);
    REQUIRE(first.tool_calls.size() == 1);
    CHECK(first.tool_calls[0].name == "final_response");
    const auto second = gw.chat(req);
    CHECK(second.tool_calls[0].name == "content_search");
    CHECK(second.tool_calls[0].arguments == "{oops");
}

TEST_CASE("empty embedding inputs are rejected before reaching the provider") {
    testing::MockRig rig;
    CHECK_THROWS_AS(rig.gateway->embed_text({""}), ValidationError);
    CHECK_THROWS_AS(rig.gateway->embed_image({}), ValidationError);
    CHECK(rig.gateway->embed_text({}).empty());
    CHECK(rig.mock->embed_calls() == 0);
}

TEST_CASE("secrets are redacted") {
    const auto out = redact_secrets("Authorization: Bearer abc.def-123 and key sk-ABCDEFGH12345678");
    CHECK(out.find("abc.def-123") == std::string::npos);
    CHECK(out.find("sk-ABCDEFGH12345678") == std::string::npos);
    CHECK(out.find("[redacted]") != std::string::npos);
}

TEST_CASE("provider config validation and json") {
    ProviderConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.timeout_seconds = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.retry_budget = -1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.chat_model = "m";
    const auto back = ProviderConfig::from_json(cfg.to_json());
    CHECK(back.chat_model == "m");
    CHECK(back.retry_budget == 2);
    CHECK(back.timeout_seconds == 60.0);
}

TEST_CASE("json string field streamer") {
    JsonStringFieldStreamer s("content");
    std::string out;
    const std::string raw = R"({"action_reasoning":"x \"content\": no","content":"Line \"one\"\nété end","z":1})";
    for (std::size_t i = 0; i < raw.size(); i += 3) out += s.feed(raw.substr(i, 3));
    CHECK(out == "Line \"one\"\n\xc3\xa9t\xc3\xa9 end");
    CHECK(s.finished());

    JsonStringFieldStreamer one("content");
    std::string byte_out;
    for (char c : raw) byte_out += one.feed(std::string(1, c));
    CHECK(byte_out == out);
}

namespace {

// Minimal OpenAI-compatible endpoint on an ephemeral port.
struct FakeServer {
    httplib::Server server;
    int port = 0;
    std::jthread thread;
    std::string last_auth;
    json last_body;
    int fail_first = 0;
    std::atomic<int> requests{0};

    FakeServer() {
        server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++requests;
            last_auth = req.get_header_value("Authorization");
            last_body = json::parse(req.body);
            if (fail_first > 0) {
                --fail_first;
                res.status = 503;
                res.set_content("busy", "text/plain");
                return;
            }
            if (last_body.value("stream", false)) {
                const json args{{"query_reflection", "q"},
                                {"search_content_reflection", "s"},
                                {"action_reasoning", "r"},
                                {"content", "Hello \"world\""}};
                const auto a = args.dump();
                std::string body;
                auto event = [&](const json& delta) {
                    body += "data: " + json{{"choices", {{{"delta", delta}}}}}.dump() + "\n\n";
                };
                event({{"tool_calls", {{{"index", 0}, {"id", "c1"}, {"function", {{"name", "final_response"}, {"arguments", ""}}}}}}});
                for (std::size_t i = 0; i < a.size(); i += 5)
                    event({{"tool_calls", {{{"index", 0}, {"function", {{"arguments", a.substr(i, 5)}}}}}}});
                body += "data: [DONE]\n\n";
                res.set_content(body, "text/event-stream");
                return;
            }
            res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "plain"}}}}}}}.dump(),
                            "application/json");
        });
        server.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
            ++requests;
            const auto body = json::parse(req.body);
            json data = json::array();
            const auto& input = body["input"];
            const std::size_t n = input.is_array() ? input.size() : 1;
            for (std::size_t i = n; i-- > 0;) data.push_back({{"index", i}, {"embedding", {3.0, 4.0}}});
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::jthread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~FakeServer() { server.stop(); }

    ProviderConfig config() const {
        ProviderConfig cfg;
        cfg.name = "fake";
        cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
        cfg.api_key_env = "MUDOC_TEST_FAKE_KEY";
        cfg.timeout_seconds = 5;
        cfg.initial_backoff = std::chrono::milliseconds{1};
        return cfg;
    }
};

}  // namespace

TEST_CASE("OpenAI-compatible provider: streaming tool call, embeddings, auth header") {
    FakeServer fake;
    setenv("MUDOC_TEST_FAKE_KEY", "sk-testkey12345678", 1);
    auto provider = std::make_shared<OpenAIProvider>(fake.config());
    Gateway gw(provider, {1, std::chrono::milliseconds{1}, 1.0});

    ChatRequest req = request("t", "agent_step");
    req.tools.push_back({"final_response", "answer", {{"type", "object"}}});
    req.require_tool = true;
    req.stream_field = "content";
    std::string streamed;
    const auto c = gw.chat(req, [&](std::string_view t) { streamed += t; });
    CHECK(streamed == "Hello \"world\"");
    REQUIRE(c.tool_calls.size() == 1);
    CHECK(c.tool_calls[0].name == "final_response");
    CHECK(json::parse(c.tool_calls[0].arguments)["content"] == "Hello \"world\"");
    CHECK(fake.last_auth == "Bearer sk-testkey12345678");
    CHECK(fake.last_body["parallel_tool_calls"] == false);
    CHECK(fake.last_body["tools"][0]["function"]["name"] == "final_response");

    CHECK(gw.chat(request("t")).content == "plain");

    const auto v = gw.embed_text({"a", "b"});
    REQUIRE(v.size() == 2);
    CHECK(v[0][0] == doctest::Approx(0.6));
    unsetenv("MUDOC_TEST_FAKE_KEY");
}

TEST_CASE("OpenAI-compatible provider retries 5xx and gives up with GatewayError") {
    FakeServer fake;
    auto provider = std::make_shared<OpenAIProvider>(fake.config());
    Gateway gw(provider, {2, std::chrono::milliseconds{1}, 1.0});
    fake.fail_first = 2;
    CHECK(gw.chat(request("t")).content == "plain");
    CHECK(fake.requests == 3);
    fake.fail_first = 5;
    CHECK_THROWS_AS(gw.chat(request("t")), GatewayError);
}

TEST_CASE("misconfigured URL ends in GatewayError after retries") {
    ProviderConfig cfg;
    cfg.base_url = "http://127.0.0.1:1/v1";
    cfg.timeout_seconds = 1;
    auto provider = std::make_shared<OpenAIProvider>(cfg);
    Gateway gw(provider, {1, std::chrono::milliseconds{1}, 1.0});
    CHECK_THROWS_AS(gw.chat(request("t")), GatewayError);
    CHECK_THROWS_AS(gw.embed_text({"x"}), GatewayError);
}

#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "mudoc/gateway/provider.hpp"

namespace mudoc::gateway {

// One scripted chat completion.
struct MockStep {
    enum class Failure { None, Transient, Permanent };

    ChatCompletion completion;
    // Text forwarded to the delta handler, piece by piece, when the request
    // names a stream_field. Defaults to nothing streamed.
    std::vector<std::string> stream_tokens;
    Failure failure = Failure::None;
    // Returned as-is even when the request does not offer the named tool.
    bool verbatim = false;

    static MockStep text(std::string content);
    // Tool call with JSON arguments. When `stream_tokens` is empty and the
    // arguments hold a string under "content", that string is streamed whole.
    static MockStep tool(std::string name, const nlohmann::json& arguments,
                         std::vector<std::string> stream_tokens = {});
    // Tool call whose argument text is taken verbatim (may be invalid JSON).
    static MockStep raw_tool(std::string name, std::string raw_arguments);
    static MockStep transient_failure();
    static MockStep permanent_failure();
};

// Deterministic offline provider.
//
// Chat: requests are matched to a per-tag script queue. A tag that has been
// scripted fails with GatewayError once its queue runs dry. Tags that were
// never scripted get a built-in deterministic policy keyed on the request
// purpose, so the whole pipeline can run offline. A scripted tool call naming
// a tool the request does not offer is consumed and answered by the policy
// instead, as a provider restricted to the offered tools would; raw_tool
// steps are exempt.
//
// Embeddings: seeded FNV-1a hash of the input bytes drives a SplitMix64
// stream; each component is the top 24 bits mapped to [-1, 1). Text vectors
// are then L2-normalized; image vectors are returned raw.
class MockProvider : public Provider {
public:
    static constexpr std::uint64_t kDefaultSeed = 0x6d75646f63ULL;
    static constexpr std::uint64_t kImageSalt = 0x9e3779b97f4a7c15ULL;

    explicit MockProvider(std::size_t dimension = 64, std::uint64_t seed = kDefaultSeed);

    std::string name() const override { return "mock"; }

    ChatCompletion chat(const ChatRequest& request, const TextDeltaHandler& on_text) override;
    std::vector<Vector> embed_text(const std::vector<std::string>& texts) override;
    Vector embed_image(std::span<const std::uint8_t> bytes) override;

    // Appends steps to the script for `tag`.
    void script(const std::string& tag, std::vector<MockStep> steps);
    std::size_t remaining(const std::string& tag) const;

    std::size_t dimension() const { return dimension_; }
    std::uint64_t seed() const { return seed_; }

    std::size_t chat_calls() const { return chat_calls_.load(); }
    std::size_t embed_calls() const { return embed_calls_.load(); }

    // Chunk size used when the built-in policy streams its text.
    static constexpr std::size_t kPolicyTokenBytes = 7;

    static Vector hash_vector(std::span<const std::uint8_t> bytes, std::uint64_t seed,
                              std::size_t dimension);

private:
    ChatCompletion policy_response(const ChatRequest& request, const TextDeltaHandler& on_text) const;

    std::size_t dimension_;
    std::uint64_t seed_;
    mutable std::mutex mutex_;
    std::map<std::string, std::deque<MockStep>> scripts_;
    std::set<std::string> scripted_tags_;
    std::atomic<std::size_t> chat_calls_{0};
    std::atomic<std::size_t> embed_calls_{0};
};

}  // namespace mudoc::gateway

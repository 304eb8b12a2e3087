#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "mudoc/gateway/gateway.hpp"
#include "mudoc/gateway/mock_provider.hpp"
#include "mudoc/ingest/pipeline.hpp"
#include "mudoc/retrieval/index.hpp"
#include "mudoc/retrieval/search.hpp"

namespace testing {

std::filesystem::path toy_dir();

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& stem);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Mock provider behind a gateway that retries without sleeping.
struct MockRig {
    std::shared_ptr<mudoc::gateway::MockProvider> mock;
    std::unique_ptr<mudoc::gateway::Gateway> gateway;

    explicit MockRig(std::size_t dimension = 64, int retry_budget = 2);
};

// The 20-block biology document under tests/data/toy, ingested with the mock
// provider. min_chunk_chars defaults low enough to give several chunks.
mudoc::retrieval::IndexHandle ingest_toy(mudoc::gateway::Gateway& gateway, std::size_t min_chunk_chars = 1500);

// Random index with hand-built vectors. Documents hold text blocks drawn from
// a small vocabulary and a few figures; every text block is its own chunk.
struct RandomCorpus {
    mudoc::retrieval::IndexHandle index;
    std::size_t dimension = 0;
};
RandomCorpus random_corpus(std::mt19937_64& rng, std::size_t docs, std::size_t blocks_per_doc, std::size_t dimension);

std::vector<float> random_vector(std::mt19937_64& rng, std::size_t dimension);

// Delegates to a Retriever and records every call.
class RecordingBackend : public mudoc::retrieval::SearchBackend {
public:
    RecordingBackend(mudoc::retrieval::IndexHandle index, mudoc::gateway::Gateway& gateway);

    std::vector<mudoc::retrieval::ScoredChunk> search_text(std::string_view query, std::size_t k) override;
    std::vector<mudoc::retrieval::ScoredImage> search_images(std::string_view query, std::size_t k) override;
    const mudoc::retrieval::Index& index() const override { return retriever_.index(); }
    const mudoc::retrieval::RetrievalConfig& config() const override { return retriever_.config(); }

    std::atomic<std::size_t> text_calls{0};
    std::atomic<std::size_t> image_calls{0};
    std::atomic<std::size_t> max_text_k{0};
    std::atomic<std::size_t> max_image_k{0};
    // Query text containing this marker makes the search throw IndexError.
    std::string fail_marker = "FAIL-RETRIEVAL";

private:
    mudoc::retrieval::Retriever retriever_;
};

// Random model output mixing plain text (including '[', '<', ']' and
// multi-byte characters), canonical citation and figure markers, and broken
// near-misses, together with a random split into tokens.
struct MarkedText {
    std::string raw;
    std::vector<std::string> tokens;
};
MarkedText random_marked_text(std::mt19937_64& rng, const std::vector<std::string>& doc_ids, std::uint32_t max_id);
std::vector<std::string> random_split(std::mt19937_64& rng, const std::string& raw);

// Runs `scripts` random agent turns (scripted tool calls, malformed replies,
// provider failures, retrieval failures) against a random corpus and checks
// the turn invariants. Each violation is described by one string.
struct AgentFuzzReport {
    std::size_t turns = 0;
    std::size_t completed = 0;
    std::size_t failed = 0;
    std::size_t forced = 0;
    std::size_t texdoc_turns = 0;
    std::size_t texdoc_image_calls = 0;
    std::size_t texdoc_figure_events = 0;
    std::size_t mudoc_image_calls = 0;
    std::size_t mudoc_figure_events = 0;
    std::vector<std::string> violations;  // text-only mode violations mention "text-only mode"
};
AgentFuzzReport agent_fuzz(std::uint64_t seed, std::size_t scripts);

namespace oracle {

// Expected transformer output, found by an anchored-regex scan from left to
// right. `known` decides whether a referenced block exists (figure == true
// asks for a figure block).
struct MarkerScan {
    std::string text_only;      // raw with accepted markers removed
    std::string reserialized;   // raw with dropped figures removed
    std::size_t citations = 0;
    std::size_t figures = 0;
};
MarkerScan scan_markers(const std::string& raw, bool drop_figures,
                        const std::function<bool(const std::string&, std::uint32_t, bool figure)>& known);

// Lowercase ASCII alphanumeric runs; other bytes >= 0x80 stay inside words.
std::vector<std::string> tokenize(const std::string& text);

// Okapi BM25 computed directly from the documents, one document at a time,
// summing over distinct query terms with idf floored at 0.
double bm25(const std::vector<std::string>& query, const std::vector<std::vector<std::string>>& docs,
            std::size_t doc_index, double k1 = 1.2, double b = 0.75);

struct PoolEntry {
    std::size_t target = 0;
    double dense = 0.0;
    double sparse = 0.0;
    std::string doc_id;
    std::uint32_t first_block = 0;
};

struct Ranked {
    std::size_t target = 0;
    double hybrid = 0.0;
};

// Brute force: normalize each signal over the pool, weight, sort all
// candidates, keep k. Scores within 1e-12 tie and fall to first block, doc, target.
std::vector<Ranked> weighted_sort(const std::vector<PoolEntry>& pool, double w_dense, double w_sparse, std::size_t k);

double cosine(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace oracle

}  // namespace testing

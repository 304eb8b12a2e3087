#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mudoc/gateway/gateway.hpp"
#include "mudoc/retrieval/index.hpp"

namespace mudoc::retrieval {

struct RetrievalConfig {
    double text_dense_weight = 0.75;
    double text_sparse_weight = 0.25;
    double image_sparse_weight = 0.75;
    double image_dense_weight = 0.25;
    Bm25Params bm25{};
    std::size_t initial_k = 3;
    std::size_t content_text_k = 10;
    std::size_t content_image_k = 5;
    std::size_t docsearch_k = 10;
    // Candidates kept from each signal before hybrid re-ranking.
    std::size_t candidate_pool = 50;

    // Throws ValidationError when a weight pair does not sum to 1 or a k is 0.
    void validate() const;
};

struct HybridWeights {
    double dense = 0.75;
    double sparse = 0.25;
};

// One entry of a hybrid-ranking pool.
struct Candidate {
    std::size_t target = 0;  // caller-defined id (chunk or image index)
    double dense = 0.0;
    double sparse = 0.0;
    std::string_view doc_id;
    ingest::BlockId first_block = 0;
};

struct RankedCandidate {
    Candidate candidate;
    double hybrid = 0.0;
};

// Min-max normalization over the pool: max -> 1, min -> 0. A pool whose
// values are all equal (including a single candidate) maps to 1.
std::vector<double> min_max_normalize(std::span<const double> values);

// Normalizes both signals over the pool, combines them with `weights`, and
// returns the best `k` by descending hybrid score. Ties go to the lower first
// block id, then the lower doc id, then the lower target.
std::vector<RankedCandidate> hybrid_rank(std::vector<Candidate> pool, HybridWeights weights, std::size_t k);

struct ScoredChunk {
    std::size_t chunk_index = 0;
    std::string chunk_id;
    double dense_score = 0.0;   // max cosine over content and summary vectors
    double sparse_score = 0.0;  // BM25 over content + summary
    double hybrid_score = 0.0;
};

struct ScoredImage {
    std::size_t image_index = 0;
    std::string doc_id;
    ingest::BlockId block_id = 0;
    double dense_score = 0.0;   // cosine against the combined vector
    double sparse_score = 0.0;  // BM25 over caption + description
    double hybrid_score = 0.0;
};

// Text retrieval, dense-weighted. `query_vector` is the query's text embedding.
std::vector<ScoredChunk> search_text(const Index& index, std::string_view query, std::span<const float> query_vector,
                                     std::size_t k, const RetrievalConfig& config = {});

// Image retrieval, sparse-weighted. `query_vector` lives in the image space.
std::vector<ScoredImage> search_images(const Index& index, std::string_view query,
                                       std::span<const float> query_vector, std::size_t k,
                                       const RetrievalConfig& config = {});

// Merged run of text blocks from one document.
struct TextSpan {
    std::string doc_id;
    std::vector<ingest::BlockId> block_ids;
    std::string text;
    std::vector<std::string> chunk_ids;
    double best_score = 0.0;  // highest hybrid score among merged chunks
};

// Groups results per document, merges chunks that share any block, and
// orders spans by (doc_id, first block id).
std::vector<TextSpan> postprocess_text(std::span<const ScoredChunk> results, const Index& index);

// What the agent and DocSearch need from retrieval; allows recording and
// substitution in tests.
class SearchBackend {
public:
    virtual ~SearchBackend() = default;
    virtual std::vector<ScoredChunk> search_text(std::string_view query, std::size_t k) = 0;
    virtual std::vector<ScoredImage> search_images(std::string_view query, std::size_t k) = 0;
    virtual const Index& index() const = 0;
    virtual const RetrievalConfig& config() const = 0;
};

// Embeds queries through the gateway and searches an immutable index.
class Retriever : public SearchBackend {
public:
    Retriever(IndexHandle index, gateway::Gateway& gateway, RetrievalConfig config = {});

    std::vector<ScoredChunk> search_text(std::string_view query, std::size_t k) override;
    std::vector<ScoredImage> search_images(std::string_view query, std::size_t k) override;
    const Index& index() const override { return *index_; }
    const RetrievalConfig& config() const override { return config_; }

private:
    IndexHandle index_;
    gateway::Gateway& gateway_;
    RetrievalConfig config_;
};

}  // namespace mudoc::retrieval

#include "mudoc/retrieval/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mudoc/error.hpp"

namespace mudoc::retrieval {

void RetrievalConfig::validate() const {
    auto sums_to_one = [](double a, double b) { return std::abs(a + b - 1.0) <= 1e-12 && a >= 0.0 && b >= 0.0; };
    if (!sums_to_one(text_dense_weight, text_sparse_weight)) throw ValidationError("text weights must sum to 1");
    if (!sums_to_one(image_dense_weight, image_sparse_weight)) throw ValidationError("image weights must sum to 1");
    if (initial_k == 0 || content_text_k == 0 || content_image_k == 0 || docsearch_k == 0 || candidate_pool == 0)
        throw ValidationError("retrieval k values must be positive");
}

std::vector<double> min_max_normalize(std::span<const double> values) {
    std::vector<double> out(values.size(), 1.0);
    if (values.empty()) return out;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
    return out;
}

namespace {

// Scores equal to 12 decimal places count as tied, so sums such as
// 0.75 * 0.8 + 0.25 * 0.4 and 0.75 * 0.6 + 0.25 * 1.0 compare equal.
long long tie_key(double score) { return std::llround(score * 1e12); }

bool ranks_before(const RankedCandidate& a, const RankedCandidate& b) {
    const auto ka = tie_key(a.hybrid), kb = tie_key(b.hybrid);
    if (ka != kb) return ka > kb;
    if (a.candidate.first_block != b.candidate.first_block) return a.candidate.first_block < b.candidate.first_block;
    if (a.candidate.doc_id != b.candidate.doc_id) return a.candidate.doc_id < b.candidate.doc_id;
    return a.candidate.target < b.candidate.target;
}

// Indices of the `n` largest values; ties favour the lower index.
std::vector<std::size_t> top_indices(const std::vector<double>& values, std::size_t n) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    n = std::min(n, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                      [&](std::size_t a, std::size_t b) { return values[a] != values[b] ? values[a] > values[b] : a < b; });
    idx.resize(n);
    return idx;
}

std::vector<std::size_t> candidate_pool(const std::vector<double>& dense, const std::vector<double>& sparse,
                                        std::size_t per_signal) {
    std::set<std::size_t> pool;
    for (auto i : top_indices(dense, per_signal)) pool.insert(i);
    for (auto i : top_indices(sparse, per_signal)) pool.insert(i);
    return {pool.begin(), pool.end()};
}

}  // namespace

std::vector<RankedCandidate> hybrid_rank(std::vector<Candidate> pool, HybridWeights weights, std::size_t k) {
    std::vector<double> dense(pool.size()), sparse(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        dense[i] = pool[i].dense;
        sparse[i] = pool[i].sparse;
    }
    const auto nd = min_max_normalize(dense);
    const auto ns = min_max_normalize(sparse);
    std::vector<RankedCandidate> ranked;
    ranked.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
        ranked.push_back({pool[i], weights.dense * nd[i] + weights.sparse * ns[i]});
    std::sort(ranked.begin(), ranked.end(), ranks_before);
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
}

std::vector<ScoredChunk> search_text(const Index& index, std::string_view query, std::span<const float> query_vector,
                                     std::size_t k, const RetrievalConfig& config) {
    if (k == 0) throw ValidationError("search_text: k must be positive");
    if (index.text_count() == 0) return {};

    const auto content = index.content_vectors().cosine_all(query_vector);
    const auto summary = index.summary_vectors().cosine_all(query_vector);
    std::vector<double> dense(content.size());
    for (std::size_t i = 0; i < dense.size(); ++i) dense[i] = std::max(content[i], summary[i]);
    const auto terms = tokenize(query);
    const auto sparse = index.text_bm25().score_all(terms);

    std::vector<Candidate> pool;
    for (auto i : candidate_pool(dense, sparse, config.candidate_pool)) {
        const auto& c = index.chunks()[i];
        pool.push_back({i, dense[i], sparse[i], c.doc_id, c.first_block()});
    }
    std::vector<ScoredChunk> out;
    for (const auto& r : hybrid_rank(std::move(pool), {config.text_dense_weight, config.text_sparse_weight}, k)) {
        const auto i = r.candidate.target;
        out.push_back({i, index.chunks()[i].chunk_id, dense[i], sparse[i], r.hybrid});
    }
    return out;
}

std::vector<ScoredImage> search_images(const Index& index, std::string_view query,
                                       std::span<const float> query_vector, std::size_t k,
                                       const RetrievalConfig& config) {
    if (k == 0) throw ValidationError("search_images: k must be positive");
    if (index.image_count() == 0) return {};

    const auto dense = index.combined_vectors().cosine_all(query_vector);
    const auto sparse = index.image_bm25().score_all(tokenize(query));

    std::vector<Candidate> pool;
    for (auto i : candidate_pool(dense, sparse, config.candidate_pool)) {
        const auto& r = index.images()[i];
        pool.push_back({i, dense[i], sparse[i], r.doc_id, r.block_id});
    }
    std::vector<ScoredImage> out;
    for (const auto& r : hybrid_rank(std::move(pool), {config.image_dense_weight, config.image_sparse_weight}, k)) {
        const auto i = r.candidate.target;
        const auto& rec = index.images()[i];
        out.push_back({i, rec.doc_id, rec.block_id, dense[i], sparse[i], r.hybrid});
    }
    return out;
}

std::vector<TextSpan> postprocess_text(std::span<const ScoredChunk> results, const Index& index) {
    struct Item {
        const ingest::Chunk* chunk;
        double score;
    };
    std::vector<Item> items;
    std::set<std::size_t> seen;
    for (const auto& r : results) {
        if (r.chunk_index >= index.chunks().size()) throw IndexError("result references unknown chunk");
        if (seen.insert(r.chunk_index).second) items.push_back({&index.chunks()[r.chunk_index], r.hybrid_score});
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.chunk->doc_id != b.chunk->doc_id) return a.chunk->doc_id < b.chunk->doc_id;
        if (a.chunk->first_block() != b.chunk->first_block()) return a.chunk->first_block() < b.chunk->first_block();
        return a.chunk->block_ids.back() < b.chunk->block_ids.back();
    });

    std::vector<TextSpan> spans;
    std::vector<std::set<ingest::BlockId>> members;
    for (const auto& it : items) {
        const auto& c = *it.chunk;
        // Chunks are runs of consecutive text blocks, so sorted chunks share a
        // block exactly when the next one starts at or before the current end.
        if (!spans.empty() && spans.back().doc_id == c.doc_id && c.first_block() <= spans.back().block_ids.back()) {
            members.back().insert(c.block_ids.begin(), c.block_ids.end());
            spans.back().block_ids.assign(members.back().begin(), members.back().end());
            spans.back().chunk_ids.push_back(c.chunk_id);
            spans.back().best_score = std::max(spans.back().best_score, it.score);
        } else {
            spans.push_back({c.doc_id, c.block_ids, {}, {c.chunk_id}, it.score});
            members.emplace_back(c.block_ids.begin(), c.block_ids.end());
        }
    }
    for (auto& s : spans) {
        for (std::size_t i = 0; i < s.block_ids.size(); ++i) {
            if (i > 0) s.text += '\n';
            s.text += index.catalog().at(s.doc_id, s.block_ids[i]).text;
        }
    }
    return spans;
}

Retriever::Retriever(IndexHandle index, gateway::Gateway& gateway, RetrievalConfig config)
    : index_(std::move(index)), gateway_(gateway), config_(config) {
    if (!index_) throw ValidationError("retriever requires an index");
    config_.validate();
}

std::vector<ScoredChunk> Retriever::search_text(std::string_view query, std::size_t k) {
    if (query.empty()) throw ValidationError("empty search query");
    if (index_->text_count() == 0) return {};
    const auto q = gateway_.embed_text({std::string(query)});
    return retrieval::search_text(*index_, query, q.front(), k, config_);
}

std::vector<ScoredImage> Retriever::search_images(std::string_view query, std::size_t k) {
    if (query.empty()) throw ValidationError("empty search query");
    if (index_->image_count() == 0) return {};
    const auto q = gateway_.embed_image_text({std::string(query)});
    return retrieval::search_images(*index_, query, q.front(), k, config_);
}

}  // namespace mudoc::retrieval

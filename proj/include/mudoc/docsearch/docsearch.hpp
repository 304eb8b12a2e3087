#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mudoc/gateway/gateway.hpp"
#include "mudoc/retrieval/search.hpp"

namespace mudoc::docsearch {

struct NavigationResult {
    std::string doc_id;
    ingest::BlockId block_id = 0;
    ingest::BlockKind kind = ingest::BlockKind::Text;
    int page = 1;
    ingest::BoundingBox bbox;
    std::string snippet;  // first 200 characters of text, or the caption
    int rank = 1;         // 1-based

    nlohmann::json to_json() const;
};

inline constexpr std::size_t kSnippetChars = 200;
inline constexpr std::size_t kMaxResults = 10;

// One block offered to the relevance filter, in hybrid order.
struct FilterCandidate {
    std::string doc_id;
    ingest::BlockId block_id = 0;
    ingest::BlockKind kind = ingest::BlockKind::Text;
    std::string snippet;

    std::string key() const { return doc_id + ":" + std::to_string(block_id); }
};

// Blocks of the retrieved text spans and images, best hybrid score first;
// blocks within a span stay in reading order. Empty text blocks are skipped.
std::vector<FilterCandidate> gather_candidates(std::string_view query, retrieval::SearchBackend& backend);

// The filter prompt lists candidates as "- <doc_id>:<block_id> | <kind> | <snippet>".
std::string format_candidates(std::string_view query, const std::vector<FilterCandidate>& candidates);

// Ids chosen by the filter reply, restricted to `candidates`, deduplicated, in
// reply order. Throws ProtocolError when the reply is not the expected JSON.
std::vector<std::string> parse_filter_reply(std::string_view reply, const std::vector<FilterCandidate>& candidates);

// Stateless search: hybrid retrieval, then an LLM picks and orders the most
// relevant blocks. Falls back to hybrid order if the filter fails. Throws
// ValidationError for an empty query.
std::vector<NavigationResult> doc_search(std::string_view query, retrieval::SearchBackend& backend,
                                         gateway::Gateway& gateway, const std::string& tag = "docsearch");

}  // namespace mudoc::docsearch

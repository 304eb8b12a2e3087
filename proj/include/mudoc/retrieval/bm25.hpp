#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace mudoc::retrieval {

// Lowercases ASCII and splits on anything that is not a letter or digit.
// Bytes >= 0x80 are kept inside tokens so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct CorpusStats {
    std::size_t document_count = 0;
    double average_length = 0.0;
    std::unordered_map<std::string, std::size_t> document_frequency;

    static CorpusStats from_documents(std::span<const std::vector<std::string>> documents);
};

// Okapi BM25 of one document. Each distinct query term contributes
//   idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg_len))
// with idf = max(0, ln((N - df + 0.5) / (df + 0.5))). An empty corpus scores 0.
double bm25_score(std::span<const std::string> query_terms, std::span<const std::string> document_terms,
                  const CorpusStats& stats, Bm25Params params = {});

// Inverted index scoring a query against every document at once; agrees with
// bm25_score on each document.
class Bm25Index {
public:
    Bm25Index() = default;
    explicit Bm25Index(std::span<const std::vector<std::string>> documents, Bm25Params params = {});

    std::vector<double> score_all(std::span<const std::string> query_terms) const;

    std::size_t size() const { return doc_lengths_.size(); }
    const Bm25Params& params() const { return params_; }

    nlohmann::json to_json() const;
    static Bm25Index from_json(const nlohmann::json& j);

private:
    struct Posting {
        std::uint32_t doc;
        std::uint32_t tf;
    };

    Bm25Params params_;
    std::vector<std::uint32_t> doc_lengths_;
    double average_length_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

}  // namespace mudoc::retrieval

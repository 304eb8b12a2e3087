#include "mudoc/retrieval/bm25.hpp"

#include <cmath>
#include <map>
#include <set>

#include "mudoc/error.hpp"

namespace mudoc::retrieval {

using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z')) {
            current += ch;
        } else if (c >= 'A' && c <= 'Z') {
            current += static_cast<char>(c - 'A' + 'a');
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

namespace {

double idf(std::size_t n, std::size_t df) {
    const double v = std::log((static_cast<double>(n) - static_cast<double>(df) + 0.5) /
                              (static_cast<double>(df) + 0.5));
    return v > 0.0 ? v : 0.0;
}

double term_weight(double tf, double len, double avg, const Bm25Params& p) {
    const double norm = avg > 0.0 ? len / avg : 0.0;
    return tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm));
}

}  // namespace

CorpusStats CorpusStats::from_documents(std::span<const std::vector<std::string>> documents) {
    CorpusStats s;
    s.document_count = documents.size();
    std::size_t total = 0;
    for (const auto& d : documents) {
        total += d.size();
        for (const auto& t : std::set<std::string>(d.begin(), d.end())) ++s.document_frequency[t];
    }
    s.average_length = documents.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(documents.size());
    return s;
}

double bm25_score(std::span<const std::string> query_terms, std::span<const std::string> document_terms,
                  const CorpusStats& stats, Bm25Params params) {
    if (stats.document_count == 0 || document_terms.empty()) return 0.0;
    std::map<std::string_view, std::size_t> tf;
    for (const auto& t : document_terms) ++tf[t];
    double score = 0.0;
    for (const auto& term : std::set<std::string_view>(query_terms.begin(), query_terms.end())) {
        auto it = tf.find(term);
        if (it == tf.end()) continue;
        auto df_it = stats.document_frequency.find(std::string(term));
        const std::size_t df = df_it == stats.document_frequency.end() ? 0 : df_it->second;
        score += idf(stats.document_count, df) *
                 term_weight(static_cast<double>(it->second), static_cast<double>(document_terms.size()),
                             stats.average_length, params);
    }
    return score;
}

Bm25Index::Bm25Index(std::span<const std::vector<std::string>> documents, Bm25Params params) : params_(params) {
    doc_lengths_.reserve(documents.size());
    std::size_t total = 0;
    for (std::uint32_t d = 0; d < documents.size(); ++d) {
        doc_lengths_.push_back(static_cast<std::uint32_t>(documents[d].size()));
        total += documents[d].size();
        std::map<std::string_view, std::uint32_t> tf;
        for (const auto& t : documents[d]) ++tf[t];
        for (const auto& [term, count] : tf) postings_[std::string(term)].push_back({d, count});
    }
    average_length_ = documents.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(documents.size());
}

std::vector<double> Bm25Index::score_all(std::span<const std::string> query_terms) const {
    std::vector<double> scores(doc_lengths_.size(), 0.0);
    if (doc_lengths_.empty()) return scores;
    for (const auto& term : std::set<std::string_view>(query_terms.begin(), query_terms.end())) {
        auto it = postings_.find(std::string(term));
        if (it == postings_.end()) continue;
        const double w = idf(doc_lengths_.size(), it->second.size());
        if (w == 0.0) continue;
        for (const auto& p : it->second)
            scores[p.doc] += w * term_weight(p.tf, doc_lengths_[p.doc], average_length_, params_);
    }
    return scores;
}

json Bm25Index::to_json() const {
    json postings = json::object();
    for (const auto& [term, list] : postings_) {
        json arr = json::array();
        for (const auto& p : list) arr.push_back({p.doc, p.tf});
        postings[term] = std::move(arr);
    }
    return {{"k1", params_.k1}, {"b", params_.b}, {"doc_lengths", doc_lengths_}, {"postings", postings}};
}

Bm25Index Bm25Index::from_json(const json& j) {
    Bm25Index idx;
    try {
        idx.params_ = {j.at("k1").get<double>(), j.at("b").get<double>()};
        idx.doc_lengths_ = j.at("doc_lengths").get<std::vector<std::uint32_t>>();
        std::size_t total = 0;
        for (auto len : idx.doc_lengths_) total += len;
        idx.average_length_ =
            idx.doc_lengths_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(idx.doc_lengths_.size());
        for (const auto& [term, arr] : j.at("postings").items()) {
            auto& list = idx.postings_[term];
            for (const auto& p : arr) {
                const auto doc = p.at(0).get<std::uint32_t>();
                if (doc >= idx.doc_lengths_.size()) throw IndexError("posting references unknown document");
                list.push_back({doc, p.at(1).get<std::uint32_t>()});
            }
        }
    } catch (const json::exception& e) {
        throw IndexError(std::string("malformed inverted index: ") + e.what());
    }
    return idx;
}

}  // namespace mudoc::retrieval

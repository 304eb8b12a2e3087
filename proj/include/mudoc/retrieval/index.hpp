#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mudoc/ingest/types.hpp"
#include "mudoc/retrieval/bm25.hpp"

namespace mudoc::retrieval {

inline constexpr const char* kIndexFormat = "mudoc-index/1";

// Row-major table of equal-length float vectors.
class VectorTable {
public:
    VectorTable() = default;
    explicit VectorTable(std::size_t dimension) : dimension_(dimension) {}

    // Throws IndexError when the vector's length differs from the table's.
    void append(std::span<const float> v);

    std::size_t dimension() const { return dimension_; }
    std::size_t rows() const { return dimension_ == 0 ? 0 : data_.size() / dimension_; }
    std::span<const float> row(std::size_t i) const { return {data_.data() + i * dimension_, dimension_}; }
    std::span<const float> data() const { return data_; }

    // Cosine of `query` against every row (rows need not be unit norm).
    std::vector<double> cosine_all(std::span<const float> query) const;

private:
    std::size_t dimension_ = 0;
    std::vector<float> data_;
    std::vector<float> norms_;
};

using BlockKey = std::pair<std::string, ingest::BlockId>;

// Immutable searchable corpus produced by ingest. Safe for concurrent reads.
class Index {
public:
    // Validates the parts and derives BM25 indices and vector tables. Every
    // chunk and image record must carry its vectors.
    static Index build(ingest::DocumentCatalog catalog, std::vector<ingest::Chunk> chunks,
                       std::vector<ingest::ImageRecord> images,
                       std::map<BlockKey, std::vector<std::uint8_t>> image_bytes, Bm25Params params = {});

    const ingest::DocumentCatalog& catalog() const { return catalog_; }
    const std::vector<ingest::Chunk>& chunks() const { return chunks_; }
    const std::vector<ingest::ImageRecord>& images() const { return images_; }

    std::size_t text_count() const { return chunks_.size(); }
    std::size_t image_count() const { return images_.size(); }

    const Bm25Index& text_bm25() const { return text_bm25_; }
    const Bm25Index& image_bm25() const { return image_bm25_; }
    const VectorTable& content_vectors() const { return content_; }
    const VectorTable& summary_vectors() const { return summary_; }
    const VectorTable& combined_vectors() const { return combined_; }

    const std::vector<std::uint8_t>* image_bytes(std::string_view doc_id, ingest::BlockId block_id) const;
    const ingest::ImageRecord* image_record(std::string_view doc_id, ingest::BlockId block_id) const;

    // Directory layout: meta.json, vectors.bin, inverted.json, images/, pages/.
    void save(const std::filesystem::path& dir) const;
    static Index load(const std::filesystem::path& dir);

    // Optional pre-rendered page images, keyed by (doc_id, page).
    void set_page_images(std::map<std::pair<std::string, int>, std::vector<std::uint8_t>> pages) {
        page_images_ = std::move(pages);
    }
    const std::vector<std::uint8_t>* page_image(std::string_view doc_id, int page) const;

private:
    ingest::DocumentCatalog catalog_;
    std::vector<ingest::Chunk> chunks_;
    std::vector<ingest::ImageRecord> images_;
    std::map<BlockKey, std::vector<std::uint8_t>> image_bytes_;
    std::map<std::pair<std::string, int>, std::vector<std::uint8_t>> page_images_;
    Bm25Index text_bm25_;
    Bm25Index image_bm25_;
    VectorTable content_;
    VectorTable summary_;
    VectorTable combined_;
};

using IndexHandle = std::shared_ptr<const Index>;

// Token list used as the sparse document of a chunk: content then summary.
std::vector<std::string> chunk_terms(const ingest::Chunk& chunk);

}  // namespace mudoc::retrieval

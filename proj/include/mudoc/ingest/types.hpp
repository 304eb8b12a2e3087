#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mudoc::ingest {

using BlockId = std::uint32_t;

enum class BlockKind { Text, Figure };

const char* to_string(BlockKind kind);

// Page-normalized rectangle; all components lie in [0, 1].
struct BoundingBox {
    double x = 0.0;
    double y = 0.0;
    double width = 0.0;
    double height = 0.0;

    bool operator==(const BoundingBox&) const = default;
};

// One layout unit of a source document.
struct Block {
    std::string doc_id;
    BlockId block_id = 0;
    int page = 1;
    BoundingBox bbox;
    BlockKind kind = BlockKind::Text;
    std::string text;
    // Figure blocks only: path of the extracted image, relative to the
    // directory holding the layout file.
    std::optional<std::string> image_ref;
};

struct LayoutDocument {
    std::string doc_id;
    int pages = 0;
    std::vector<Block> blocks;  // reading order, block_id == position
};

// Ordered run of consecutive text blocks; the unit of text retrieval.
struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::vector<BlockId> block_ids;
    std::string text;
    std::size_t char_count = 0;
    std::string summary;
    std::vector<float> content_vector;
    std::vector<float> summary_vector;

    BlockId first_block() const { return block_ids.front(); }
};

// A figure block together with its generated text and vectors.
struct ImageRecord {
    std::string doc_id;
    BlockId block_id = 0;
    std::string caption;
    std::string description;
    std::vector<float> image_vector;
    std::vector<float> caption_vector;
    std::vector<float> combined_vector;

    std::string search_text() const { return caption + "\n" + description; }
};

// Exact rational in (0, 1).
struct Fraction {
    std::int64_t numerator = 1;
    std::int64_t denominator = 2;

    // Accepts "p/q" or a decimal such as "0.5"; throws ValidationError when
    // the value is not strictly between 0 and 1.
    static Fraction parse(std::string_view text);

    // ceil(numerator * n / denominator)
    std::size_t ceil_times(std::size_t n) const;
};

struct IngestConfig {
    std::size_t min_chunk_chars = 8000;
    Fraction overlap_fraction{1, 2};
    int max_in_flight = 4;

    void validate() const;
};

// All parsed documents, addressable by (doc_id, block_id).
class DocumentCatalog {
public:
    void add(LayoutDocument doc);

    const LayoutDocument* document(std::string_view doc_id) const;
    const Block* find(std::string_view doc_id, BlockId block_id) const;
    // Throws NotFound.
    const Block& at(std::string_view doc_id, BlockId block_id) const;

    const std::map<std::string, LayoutDocument, std::less<>>& documents() const { return docs_; }
    std::size_t block_count() const;

private:
    std::map<std::string, LayoutDocument, std::less<>> docs_;
};

}  // namespace mudoc::ingest

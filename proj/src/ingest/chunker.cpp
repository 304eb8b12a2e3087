#include "mudoc/ingest/chunker.hpp"

#include <algorithm>

#include "mudoc/util.hpp"

namespace mudoc::ingest {

std::vector<Chunk> build_chunks(std::span<const Block> blocks, const IngestConfig& config) {
    config.validate();

    std::vector<const Block*> text;
    for (const auto& b : blocks)
        if (b.kind == BlockKind::Text) text.push_back(&b);

    std::vector<std::size_t> lengths(text.size());
    std::transform(text.begin(), text.end(), lengths.begin(),
                   [](const Block* b) { return util::utf8_length(b->text); });

    std::vector<Chunk> chunks;
    const std::size_t n = text.size();
    std::size_t start = 0;
    std::size_t prev_end = 0;  // one past the last member of the previous chunk

    while (start < n) {
        std::size_t end = start;
        std::size_t chars = 0;
        while (end < n) {
            chars += lengths[end] + (end > start ? 1 : 0);
            ++end;
            const bool long_enough = chars >= config.min_chunk_chars;
            const bool two_blocks = end - start >= 2;
            const bool advances = end > prev_end;
            if (long_enough && two_blocks && advances) break;
        }

        Chunk c;
        c.doc_id = text[start]->doc_id;
        c.chunk_id = c.doc_id + "#" + std::to_string(chunks.size());
        for (std::size_t i = start; i < end; ++i) {
            if (i > start) c.text += '\n';
            c.text += text[i]->text;
            c.block_ids.push_back(text[i]->block_id);
        }
        c.char_count = chars;
        chunks.push_back(std::move(c));

        if (end == n) break;
        const std::size_t count = end - start;
        const std::size_t step = std::min(config.overlap_fraction.ceil_times(count), count - 1);
        prev_end = end;
        start += step;
    }
    return chunks;
}

}  // namespace mudoc::ingest

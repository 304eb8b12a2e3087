#pragma once

#include <span>
#include <vector>

#include "mudoc/ingest/types.hpp"

namespace mudoc::ingest {

// Groups the text blocks of one document into overlapping chunks.
//
// A chunk accumulates consecutive text blocks until its text (members joined
// by '\n') holds at least min_chunk_chars code points, it has at least two
// blocks, and it reaches past the end of the previous chunk. The next chunk
// starts at member index ceil(overlap * count), clamped so at least the last
// member is shared. The final chunk may fall short of the minimum. Figure
// blocks never join chunks. Summaries and vectors are left empty.
std::vector<Chunk> build_chunks(std::span<const Block> blocks, const IngestConfig& config);

}  // namespace mudoc::ingest

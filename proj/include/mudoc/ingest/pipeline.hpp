#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mudoc/gateway/gateway.hpp"
#include "mudoc/ingest/types.hpp"
#include "mudoc/retrieval/index.hpp"

namespace mudoc::ingest {

// Summary of chunk text through the gateway. Throws PreconditionError for an
// empty chunk and IngestError when the gateway gives up or answers empty.
std::string summarize_chunk(const Chunk& chunk, gateway::Gateway& gateway);

struct ImageDescription {
    std::string caption;
    std::string description;
};

// Caption and long description of an image. Throws ImageError when the bytes
// are not a recognizable image and IngestError on gateway failure.
ImageDescription describe_image(std::span<const std::uint8_t> bytes, gateway::Gateway& gateway);

// Runs fn(i) for i in [0, n) on at most `max_in_flight` threads. The first
// exception thrown is rethrown after all workers stop.
void bounded_parallel_for(std::size_t n, int max_in_flight, const std::function<void(std::size_t)>& fn);

// Embeds chunk content and summaries, image bytes and captions, and builds
// the searchable index. Chunks need summaries and records need captions.
// Throws IndexError on vector dimension mismatches.
retrieval::IndexHandle embed_and_index(DocumentCatalog catalog, std::vector<Chunk> chunks,
                                       std::vector<ImageRecord> images,
                                       std::map<retrieval::BlockKey, std::vector<std::uint8_t>> image_bytes,
                                       gateway::Gateway& gateway, int max_in_flight = 4);

struct IngestReport {
    retrieval::IndexHandle index;
    std::size_t documents = 0;
    std::size_t blocks = 0;
    std::vector<std::string> warnings;
};

// Full batch: every *.json layout file in `input_dir` (sorted by name) is
// parsed, chunked, summarized, described, and embedded. Figure image paths
// resolve relative to `input_dir`. Page images found at
// <input_dir>/<doc_id>/pages/<n>.{png,jpg,jpeg} are carried into the index.
IngestReport ingest_directory(const std::filesystem::path& input_dir, const IngestConfig& config,
                              gateway::Gateway& gateway);

// Same pipeline over documents already in memory; `load_image` maps an
// image_ref to its bytes.
IngestReport ingest_documents(std::vector<LayoutDocument> documents, const IngestConfig& config,
                              gateway::Gateway& gateway,
                              const std::function<std::vector<std::uint8_t>(const Block&)>& load_image);

}  // namespace mudoc::ingest

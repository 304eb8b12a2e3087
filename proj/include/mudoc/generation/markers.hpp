#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mudoc/ingest/types.hpp"

namespace mudoc::retrieval {
class Index;
}

namespace mudoc::generation {

// Inline citation: [[cite:<doc_id>:<id>(,<id>)*]]
//   doc_id: one or more of [A-Za-z0-9_.-]
//   id:     0 or a decimal without leading zeros
struct CitationRef {
    std::string doc_id;
    std::vector<ingest::BlockId> block_ids;
    bool operator==(const CitationRef&) const = default;
};

// Inline figure. Canonical form:
//   <figure><img src="block://<doc_id>/<id>"><figcaption>CAPTION</figcaption></figure>
// The parser also takes attribute/whitespace variations and single quotes.
struct FigureRef {
    std::string doc_id;
    ingest::BlockId block_id = 0;
    std::string caption;
    bool operator==(const FigureRef&) const = default;
};

inline constexpr std::string_view kCitationOpen = "[[cite:";
inline constexpr std::string_view kFigureOpen = "<figure";
inline constexpr std::string_view kFigureClose = "</figure>";

std::string serialize(const CitationRef& ref);
std::string serialize(const FigureRef& ref);

enum class PrefixState { Invalid, Partial, Complete };

struct PrefixMatch {
    PrefixState state = PrefixState::Invalid;
    std::size_t length = 0;  // bytes of the marker when Complete
};

// Whether `text` (starting at a '[') begins with a complete citation, could
// still become one with more input, or cannot.
PrefixMatch match_citation(std::string_view text);

// Parses one complete citation marker (the whole string).
std::optional<CitationRef> parse_citation(std::string_view marker);

// Parses one complete <figure>...</figure> element (the whole string).
std::optional<FigureRef> parse_figure(std::string_view element);

struct BlockLocation {
    std::string doc_id;
    ingest::BlockId block_id = 0;
    ingest::BlockKind kind = ingest::BlockKind::Text;
    int page = 1;
    ingest::BoundingBox bbox;
};

// Page and box of every cited block, in block id order. Throws NotFound for
// an unknown document or block and ValidationError for an empty id list.
std::vector<BlockLocation> resolve_citation(const CitationRef& ref, const ingest::DocumentCatalog& catalog);

}  // namespace mudoc::generation

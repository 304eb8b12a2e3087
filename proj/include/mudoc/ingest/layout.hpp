#pragma once

#include <string_view>

#include "mudoc/ingest/types.hpp"

namespace mudoc::ingest {

// Parses one layout-analysis document:
//
//   { "doc_id": str, "pages": int,
//     "blocks": [ { "id": int, "page": int, "bbox": [x, y, w, h],
//                   "kind": "text" | "figure", "text": str?, "image_file": str? } ] }
//
// Blocks are put in reading order (ascending input id) and renumbered
// 0..n-1. Structural problems throw ParseError naming the record; values that
// break a Block invariant throw ValidationError.
LayoutDocument parse_layout(std::string_view raw);

}  // namespace mudoc::ingest

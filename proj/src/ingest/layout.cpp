#include "mudoc/ingest/layout.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "mudoc/error.hpp"

namespace mudoc::ingest {

using nlohmann::json;

namespace {

std::string record_name(std::size_t index) { return "blocks[" + std::to_string(index) + "]"; }

const json& require(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw ParseError(where + ": missing \"" + key + "\"");
    return obj[key];
}

std::int64_t require_int(const json& obj, const char* key, const std::string& where) {
    const json& v = require(obj, key, where);
    if (!v.is_number_integer()) throw ParseError(where + ": \"" + key + "\" must be an integer");
    return v.get<std::int64_t>();
}

}  // namespace

LayoutDocument parse_layout(std::string_view raw) {
    json root = json::parse(raw, nullptr, false);
    if (root.is_discarded()) throw ParseError("layout document is not valid JSON");
    if (!root.is_object()) throw ParseError("layout document must be a JSON object");

    LayoutDocument doc;
    const json& doc_id = require(root, "doc_id", "document");
    if (!doc_id.is_string() || doc_id.get<std::string>().empty())
        throw ParseError("document: \"doc_id\" must be a non-empty string");
    doc.doc_id = doc_id.get<std::string>();
    const auto pages = require_int(root, "pages", "document");
    if (pages < 0) throw ValidationError("document: \"pages\" must be non-negative");
    doc.pages = static_cast<int>(pages);

    const json& blocks = require(root, "blocks", "document");
    if (!blocks.is_array()) throw ParseError("document: \"blocks\" must be an array");

    struct Pending {
        std::int64_t input_id;
        Block block;
    };
    std::vector<Pending> pending;
    std::set<std::int64_t> seen;

    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const json& rec = blocks[i];
        const std::string where = record_name(i);
        if (!rec.is_object()) throw ParseError(where + ": must be an object");

        Pending p;
        p.input_id = require_int(rec, "id", where);
        if (p.input_id < 0) throw ValidationError(where + ": negative id");
        if (!seen.insert(p.input_id).second) throw ParseError(where + ": duplicate id " + std::to_string(p.input_id));

        Block& b = p.block;
        b.doc_id = doc.doc_id;
        const auto page = require_int(rec, "page", where);
        if (page < 1) throw ValidationError(where + ": page must be >= 1");
        if (page > doc.pages) throw ValidationError(where + ": page exceeds document page count");
        b.page = static_cast<int>(page);

        const json& bbox = require(rec, "bbox", where);
        if (!bbox.is_array() || bbox.size() != 4 ||
            !std::all_of(bbox.begin(), bbox.end(), [](const json& v) { return v.is_number(); }))
            throw ParseError(where + ": \"bbox\" must be an array of four numbers");
        b.bbox = {bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(), bbox[3].get<double>()};
        for (double v : {b.bbox.x, b.bbox.y, b.bbox.width, b.bbox.height})
            if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(where + ": bbox component out of [0,1]");
        if (!(b.bbox.width > 0.0 && b.bbox.height > 0.0))
            throw ValidationError(where + ": bbox width and height must be positive");

        const json& kind = require(rec, "kind", where);
        if (!kind.is_string()) throw ParseError(where + ": \"kind\" must be a string");
        const auto kind_name = kind.get<std::string>();
        if (kind_name == "text") b.kind = BlockKind::Text;
        else if (kind_name == "figure") b.kind = BlockKind::Figure;
        else throw ParseError(where + ": unknown kind \"" + kind_name + "\"");

        if (rec.contains("text") && !rec["text"].is_null()) {
            if (!rec["text"].is_string()) throw ParseError(where + ": \"text\" must be a string");
            b.text = rec["text"].get<std::string>();
        }
        if (rec.contains("image_file") && !rec["image_file"].is_null()) {
            if (!rec["image_file"].is_string()) throw ParseError(where + ": \"image_file\" must be a string");
            b.image_ref = rec["image_file"].get<std::string>();
        }
        if (b.kind == BlockKind::Figure && (!b.image_ref || b.image_ref->empty()))
            throw ValidationError(where + ": figure block without image_file");
        if (b.kind == BlockKind::Text && b.image_ref)
            throw ValidationError(where + ": text block must not carry image_file");

        pending.push_back(std::move(p));
    }

    std::stable_sort(pending.begin(), pending.end(),
                     [](const Pending& a, const Pending& b) { return a.input_id < b.input_id; });
    doc.blocks.reserve(pending.size());
    for (std::size_t i = 0; i < pending.size(); ++i) {
        pending[i].block.block_id = static_cast<BlockId>(i);
        doc.blocks.push_back(std::move(pending[i].block));
    }
    return doc;
}

}  // namespace mudoc::ingest

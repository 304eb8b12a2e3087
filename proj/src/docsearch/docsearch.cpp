#include "mudoc/docsearch/docsearch.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>

#include "mudoc/error.hpp"
#include "mudoc/util.hpp"

namespace mudoc::docsearch {

using nlohmann::json;

namespace {

constexpr const char* kFilterInstruction =
    "You pick search results for a student navigating a textbook. From the candidate blocks the user lists, "
    "choose the ones most relevant to the search query, most relevant first, at most ten. Reply with a JSON "
    "object {\"block_ids\": [\"DOC_ID:BLOCK_ID\", ...]} using only ids from the list.";

std::string one_line(std::string_view s) {
    std::string out(s);
    std::replace(out.begin(), out.end(), '\n', ' ');
    std::replace(out.begin(), out.end(), '\r', ' ');
    return out;
}

}  // namespace

json NavigationResult::to_json() const {
    return {{"doc_id", doc_id},
            {"block_id", block_id},
            {"kind", ingest::to_string(kind)},
            {"page", page},
            {"bbox", {bbox.x, bbox.y, bbox.width, bbox.height}},
            {"snippet", snippet},
            {"rank", rank}};
}

std::vector<FilterCandidate> gather_candidates(std::string_view query, retrieval::SearchBackend& backend) {
    const auto& index = backend.index();
    const auto& cfg = backend.config();
    const auto spans = retrieval::postprocess_text(backend.search_text(query, cfg.docsearch_k), index);
    const auto images = backend.search_images(query, cfg.content_image_k);

    // Interleave spans and images by score; spans carry their best chunk score.
    struct Group {
        double score;
        int order;
        std::vector<FilterCandidate> blocks;
    };
    std::vector<Group> groups;
    int order = 0;
    for (const auto& s : spans) {
        Group g{s.best_score, order++, {}};
        for (auto id : s.block_ids) {
            const auto& b = index.catalog().at(s.doc_id, id);
            if (b.text.empty()) continue;
            g.blocks.push_back({b.doc_id, b.block_id, b.kind, std::string(util::utf8_prefix(b.text, kSnippetChars))});
        }
        groups.push_back(std::move(g));
    }
    for (const auto& img : images) {
        const auto* rec = index.image_record(img.doc_id, img.block_id);
        groups.push_back({img.hybrid_score, order++,
                          {{img.doc_id, img.block_id, ingest::BlockKind::Figure, rec ? rec->caption : std::string{}}}});
    }
    std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) { return a.score > b.score; });

    std::vector<FilterCandidate> out;
    std::set<std::string> seen;
    for (auto& g : groups)
        for (auto& c : g.blocks)
            if (seen.insert(c.key()).second) out.push_back(std::move(c));
    return out;
}

std::string format_candidates(std::string_view query, const std::vector<FilterCandidate>& candidates) {
    std::string out = "Search query: " + one_line(query) + "\n\nCandidates:\n";
    for (const auto& c : candidates)
        out += "- " + c.key() + " | " + ingest::to_string(c.kind) + " | " + one_line(c.snippet) + "\n";
    return out;
}

std::vector<std::string> parse_filter_reply(std::string_view reply, const std::vector<FilterCandidate>& candidates) {
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open)
        throw ProtocolError("filter reply holds no JSON object");
    const json parsed = json::parse(reply.substr(open, close - open + 1), nullptr, false);
    if (!parsed.is_object() || !parsed.contains("block_ids") || !parsed["block_ids"].is_array())
        throw ProtocolError("filter reply lacks a block_ids list");

    std::set<std::string> allowed;
    for (const auto& c : candidates) allowed.insert(c.key());
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& item : parsed["block_ids"]) {
        if (!item.is_string()) continue;
        auto id = item.get<std::string>();
        if (!allowed.contains(id)) {
            spdlog::debug("docsearch: filter chose unknown id {}; dropped", id);
            continue;
        }
        if (seen.insert(id).second) out.push_back(std::move(id));
    }
    return out;
}

std::vector<NavigationResult> doc_search(std::string_view query, retrieval::SearchBackend& backend,
                                         gateway::Gateway& gateway, const std::string& tag) {
    if (query.find_first_not_of(" \t\r\n") == std::string_view::npos) throw ValidationError("empty search query");
    const auto candidates = gather_candidates(query, backend);
    if (candidates.empty()) return {};

    std::vector<std::string> chosen;
    try {
        gateway::ChatRequest req;
        req.purpose = "docsearch_filter";
        req.tag = tag;
        req.temperature = 0.0;
        req.messages.push_back({gateway::Role::System, kFilterInstruction});
        req.messages.push_back({gateway::Role::User, format_candidates(query, candidates)});
        chosen = parse_filter_reply(gateway.chat(req).content, candidates);
    } catch (const Error& e) {
        spdlog::warn("docsearch: relevance filter failed ({}); using hybrid order", e.what());
        chosen.clear();
        for (const auto& c : candidates) chosen.push_back(c.key());
    }
    if (chosen.size() > kMaxResults) chosen.resize(kMaxResults);

    const auto& catalog = backend.index().catalog();
    std::vector<NavigationResult> out;
    for (const auto& key : chosen) {
        const auto it = std::find_if(candidates.begin(), candidates.end(),
                                     [&](const FilterCandidate& c) { return c.key() == key; });
        const auto& b = catalog.at(it->doc_id, it->block_id);
        out.push_back({b.doc_id, b.block_id, b.kind, b.page, b.bbox, it->snippet, static_cast<int>(out.size()) + 1});
    }
    return out;
}

}  // namespace mudoc::docsearch

#include "mudoc/generation/markers.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <regex>

#include "mudoc/error.hpp"

namespace mudoc::generation {

namespace {

constexpr std::size_t kMaxDocIdChars = 128;
constexpr std::size_t kMaxIdDigits = 10;
constexpr std::size_t kMaxIds = 64;

bool doc_char(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '.' ||
           c == '-';
}

bool digit(char c) { return c >= '0' && c <= '9'; }

bool fits_block_id(std::string_view digits) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    return ec == std::errc{} && p == digits.data() + digits.size() && v <= std::numeric_limits<ingest::BlockId>::max();
}

}  // namespace

std::string serialize(const CitationRef& ref) {
    std::string out(kCitationOpen);
    out += ref.doc_id;
    out += ':';
    for (std::size_t i = 0; i < ref.block_ids.size(); ++i) {
        if (i > 0) out += ',';
        out += std::to_string(ref.block_ids[i]);
    }
    out += "]]";
    return out;
}

std::string serialize(const FigureRef& ref) {
    return "<figure><img src=\"block://" + ref.doc_id + "/" + std::to_string(ref.block_id) + "\"><figcaption>" +
           ref.caption + "</figcaption></figure>";
}

PrefixMatch match_citation(std::string_view text) {
    const auto partial = PrefixMatch{PrefixState::Partial, 0};
    const auto invalid = PrefixMatch{PrefixState::Invalid, 0};

    const std::size_t head = std::min(text.size(), kCitationOpen.size());
    if (text.substr(0, head) != kCitationOpen.substr(0, head)) return invalid;
    if (text.size() <= kCitationOpen.size()) return partial;

    std::size_t i = kCitationOpen.size();
    const std::size_t doc_start = i;
    while (i < text.size() && doc_char(text[i])) {
        if (++i - doc_start > kMaxDocIdChars) return invalid;
    }
    if (i == text.size()) return partial;
    if (i == doc_start || text[i] != ':') return invalid;
    ++i;

    for (std::size_t ids = 0;; ++ids) {
        if (ids == kMaxIds) return invalid;
        if (i == text.size()) return partial;
        const std::size_t id_start = i;
        if (!digit(text[i])) return invalid;
        if (text[i] == '0') {
            ++i;
        } else {
            while (i < text.size() && digit(text[i])) {
                if (++i - id_start > kMaxIdDigits) return invalid;
            }
            if (i == text.size()) return partial;
        }
        if (!fits_block_id(text.substr(id_start, i - id_start))) return invalid;
        if (i == text.size()) return partial;
        if (text[i] == ',') {
            ++i;
            continue;
        }
        if (text[i] != ']') return invalid;
        ++i;
        if (i == text.size()) return partial;
        if (text[i] != ']') return invalid;
        return {PrefixState::Complete, i + 1};
    }
}

std::optional<CitationRef> parse_citation(std::string_view marker) {
    const auto m = match_citation(marker);
    if (m.state != PrefixState::Complete || m.length != marker.size()) return std::nullopt;
    CitationRef ref;
    const auto body = marker.substr(kCitationOpen.size(), marker.size() - kCitationOpen.size() - 2);
    const auto colon = body.find(':');
    ref.doc_id = std::string(body.substr(0, colon));
    std::string_view ids = body.substr(colon + 1);
    while (!ids.empty()) {
        const auto comma = ids.find(',');
        const auto part = ids.substr(0, comma);
        ingest::BlockId v = 0;
        std::from_chars(part.data(), part.data() + part.size(), v);
        ref.block_ids.push_back(v);
        if (comma == std::string_view::npos) break;
        ids.remove_prefix(comma + 1);
    }
    return ref;
}

std::optional<FigureRef> parse_figure(std::string_view element) {
    static const std::regex shell(R"(^<figure(\s[^>]*)?>[\s\S]*</figure>$)", std::regex::icase);
    static const std::regex img(
        R"(<img\s[^>]*?src\s*=\s*(["'])block://([A-Za-z0-9_.\-]+)/(0|[1-9][0-9]{0,9})\1[^>]*>)",
        std::regex::icase);
    static const std::regex caption(R"(<figcaption(\s[^>]*)?>([\s\S]*?)</figcaption>)", std::regex::icase);

    const std::string s(element);
    if (!std::regex_match(s, shell)) return std::nullopt;
    // A figure element holds exactly one figure.
    if (s.find(kFigureOpen, 1) != std::string::npos) return std::nullopt;
    std::smatch m;
    if (!std::regex_search(s, m, img)) return std::nullopt;
    if (!fits_block_id(m[3].str())) return std::nullopt;
    FigureRef ref;
    ref.doc_id = m[2].str();
    ref.block_id = static_cast<ingest::BlockId>(std::stoul(m[3].str()));
    if (std::regex_search(s, m, caption)) ref.caption = m[2].str();
    return ref;
}

std::vector<BlockLocation> resolve_citation(const CitationRef& ref, const ingest::DocumentCatalog& catalog) {
    if (ref.block_ids.empty()) throw ValidationError("citation lists no blocks");
    auto ids = ref.block_ids;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<BlockLocation> out;
    out.reserve(ids.size());
    for (auto id : ids) {
        const auto& b = catalog.at(ref.doc_id, id);
        out.push_back({b.doc_id, b.block_id, b.kind, b.page, b.bbox});
    }
    return out;
}

}  // namespace mudoc::generation

#include "mudoc/ingest/types.hpp"

#include <charconv>
#include <numeric>

#include "mudoc/error.hpp"

namespace mudoc::ingest {

const char* to_string(BlockKind kind) { return kind == BlockKind::Text ? "text" : "figure"; }

namespace {

std::int64_t parse_int(std::string_view s, std::string_view whole) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw ValidationError("invalid fraction '" + std::string(whole) + "'");
    return v;
}

}  // namespace

Fraction Fraction::parse(std::string_view text) {
    Fraction f;
    if (const auto slash = text.find('/'); slash != std::string_view::npos) {
        f.numerator = parse_int(text.substr(0, slash), text);
        f.denominator = parse_int(text.substr(slash + 1), text);
    } else {
        const auto dot = text.find('.');
        if (dot == std::string_view::npos) {
            f.numerator = parse_int(text, text);
            f.denominator = 1;
        } else {
            const auto frac_digits = text.substr(dot + 1);
            if (frac_digits.size() > 12) throw ValidationError("fraction has too many digits");
            std::int64_t den = 1;
            for (std::size_t i = 0; i < frac_digits.size(); ++i) den *= 10;
            const std::string digits = std::string(text.substr(0, dot)) + std::string(frac_digits);
            f.numerator = parse_int(digits, text);
            f.denominator = den;
        }
    }
    if (f.denominator <= 0 || f.numerator <= 0 || f.numerator >= f.denominator)
        throw ValidationError("overlap fraction must lie strictly between 0 and 1, got '" + std::string(text) + "'");
    const auto g = std::gcd(f.numerator, f.denominator);
    f.numerator /= g;
    f.denominator /= g;
    return f;
}

std::size_t Fraction::ceil_times(std::size_t n) const {
    const auto prod = numerator * static_cast<std::int64_t>(n);
    return static_cast<std::size_t>((prod + denominator - 1) / denominator);
}

void IngestConfig::validate() const {
    if (min_chunk_chars == 0) throw ValidationError("min_chunk_chars must be positive");
    if (overlap_fraction.denominator <= 0 || overlap_fraction.numerator <= 0 ||
        overlap_fraction.numerator >= overlap_fraction.denominator)
        throw ValidationError("overlap fraction must lie strictly between 0 and 1");
    if (max_in_flight <= 0) throw ValidationError("max_in_flight must be positive");
}

void DocumentCatalog::add(LayoutDocument doc) {
    const std::string id = doc.doc_id;
    if (docs_.contains(id)) throw ValidationError("duplicate doc_id '" + id + "'");
    docs_.emplace(id, std::move(doc));
}

const LayoutDocument* DocumentCatalog::document(std::string_view doc_id) const {
    auto it = docs_.find(doc_id);
    return it == docs_.end() ? nullptr : &it->second;
}

const Block* DocumentCatalog::find(std::string_view doc_id, BlockId block_id) const {
    const auto* doc = document(doc_id);
    if (!doc || block_id >= doc->blocks.size()) return nullptr;
    return &doc->blocks[block_id];
}

const Block& DocumentCatalog::at(std::string_view doc_id, BlockId block_id) const {
    if (const auto* b = find(doc_id, block_id)) return *b;
    throw NotFound("unknown block " + std::string(doc_id) + ":" + std::to_string(block_id));
}

std::size_t DocumentCatalog::block_count() const {
    std::size_t n = 0;
    for (const auto& [_, d] : docs_) n += d.blocks.size();
    return n;
}

}  // namespace mudoc::ingest

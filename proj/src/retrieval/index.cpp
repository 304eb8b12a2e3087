#include "mudoc/retrieval/index.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mudoc/error.hpp"
#include "mudoc/simd/kernels.hpp"
#include "mudoc/util.hpp"

namespace mudoc::retrieval {

using nlohmann::json;
namespace fs = std::filesystem;

void VectorTable::append(std::span<const float> v) {
    if (v.empty()) throw IndexError("cannot store an empty vector");
    if (dimension_ == 0 && data_.empty()) dimension_ = v.size();
    if (v.size() != dimension_)
        throw IndexError("vector dimension " + std::to_string(v.size()) + " does not match table dimension " +
                         std::to_string(dimension_));
    data_.insert(data_.end(), v.begin(), v.end());
    norms_.push_back(simd::l2_norm(v));
}

std::vector<double> VectorTable::cosine_all(std::span<const float> query) const {
    const std::size_t n = rows();
    std::vector<double> out(n, 0.0);
    if (n == 0) return out;
    if (query.size() != dimension_)
        throw IndexError("query dimension " + std::to_string(query.size()) + " does not match index dimension " +
                         std::to_string(dimension_));
    const double qn = simd::l2_norm(query);
    if (qn == 0.0) return out;
    std::vector<float> dots(n);
    simd::kernels().dot_rows(query.data(), data_.data(), dimension_, n, dots.data());
    for (std::size_t i = 0; i < n; ++i) {
        if (norms_[i] == 0.0f) continue;
        out[i] = std::clamp(static_cast<double>(dots[i]) / (qn * norms_[i]), -1.0, 1.0);
    }
    return out;
}

std::vector<std::string> chunk_terms(const ingest::Chunk& chunk) {
    auto terms = tokenize(chunk.text);
    auto summary = tokenize(chunk.summary);
    terms.insert(terms.end(), std::make_move_iterator(summary.begin()), std::make_move_iterator(summary.end()));
    return terms;
}

Index Index::build(ingest::DocumentCatalog catalog, std::vector<ingest::Chunk> chunks,
                   std::vector<ingest::ImageRecord> images,
                   std::map<BlockKey, std::vector<std::uint8_t>> image_bytes, Bm25Params params) {
    Index idx;
    std::vector<std::vector<std::string>> text_docs;
    text_docs.reserve(chunks.size());
    for (const auto& c : chunks) {
        if (c.block_ids.empty()) throw IndexError("chunk " + c.chunk_id + " has no blocks");
        for (auto id : c.block_ids) {
            const auto* b = catalog.find(c.doc_id, id);
            if (!b || b->kind != ingest::BlockKind::Text)
                throw IndexError("chunk " + c.chunk_id + " references a missing text block");
        }
        if (c.content_vector.size() != c.summary_vector.size())
            throw IndexError("chunk " + c.chunk_id + ": content and summary vector dimensions differ");
        idx.content_.append(c.content_vector);
        idx.summary_.append(c.summary_vector);
        text_docs.push_back(chunk_terms(c));
    }
    if (idx.content_.dimension() != idx.summary_.dimension())
        throw IndexError("content and summary vector dimensions differ");

    std::vector<std::vector<std::string>> image_docs;
    image_docs.reserve(images.size());
    for (const auto& r : images) {
        const auto* b = catalog.find(r.doc_id, r.block_id);
        if (!b || b->kind != ingest::BlockKind::Figure)
            throw IndexError("image record references a missing figure block " + r.doc_id + ":" +
                             std::to_string(r.block_id));
        if (r.image_vector.size() != r.caption_vector.size() || r.combined_vector.size() != r.image_vector.size())
            throw IndexError("image record " + r.doc_id + ":" + std::to_string(r.block_id) +
                             " has mismatched vector dimensions");
        idx.combined_.append(r.combined_vector);
        image_docs.push_back(tokenize(r.search_text()));
    }

    idx.text_bm25_ = Bm25Index(text_docs, params);
    idx.image_bm25_ = Bm25Index(image_docs, params);
    idx.catalog_ = std::move(catalog);
    idx.chunks_ = std::move(chunks);
    idx.images_ = std::move(images);
    idx.image_bytes_ = std::move(image_bytes);
    return idx;
}

const std::vector<std::uint8_t>* Index::image_bytes(std::string_view doc_id, ingest::BlockId block_id) const {
    auto it = image_bytes_.find({std::string(doc_id), block_id});
    return it == image_bytes_.end() ? nullptr : &it->second;
}

const ingest::ImageRecord* Index::image_record(std::string_view doc_id, ingest::BlockId block_id) const {
    for (const auto& r : images_)
        if (r.doc_id == doc_id && r.block_id == block_id) return &r;
    return nullptr;
}

const std::vector<std::uint8_t>* Index::page_image(std::string_view doc_id, int page) const {
    auto it = page_images_.find({std::string(doc_id), page});
    return it == page_images_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kVectorMagic[8] = {'M', 'U', 'D', 'O', 'C', 'V', 'E', 'C'};
constexpr std::uint32_t kVectorVersion = 1;

json block_to_json(const ingest::Block& b) {
    json j{{"id", b.block_id},
           {"page", b.page},
           {"bbox", {b.bbox.x, b.bbox.y, b.bbox.width, b.bbox.height}},
           {"kind", ingest::to_string(b.kind)},
           {"text", b.text}};
    if (b.image_ref) j["image_file"] = *b.image_ref;
    return j;
}

void write_table(std::ofstream& out, std::size_t dim, const std::vector<const std::vector<float>*>& rows) {
    const std::uint64_t n = rows.size();
    const std::uint64_t d = dim;
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(&d), sizeof d);
    for (const auto* r : rows) out.write(reinterpret_cast<const char*>(r->data()), static_cast<std::streamsize>(r->size() * sizeof(float)));
}

std::vector<std::vector<float>> read_table(std::ifstream& in) {
    std::uint64_t n = 0, d = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    in.read(reinterpret_cast<char*>(&d), sizeof d);
    if (!in) throw IndexError("truncated vectors file");
    std::vector<std::vector<float>> rows(n, std::vector<float>(d));
    for (auto& r : rows) in.read(reinterpret_cast<char*>(r.data()), static_cast<std::streamsize>(d * sizeof(float)));
    if (!in) throw IndexError("truncated vectors file");
    return rows;
}

json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IndexError("missing index file " + p.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw IndexError("corrupt index file " + p.string());
    if (j.value("format", "") != kIndexFormat)
        throw IndexError("unsupported index format in " + p.string() + " (expected " + kIndexFormat + ")");
    return j;
}

}  // namespace

void Index::save(const fs::path& dir) const {
    fs::create_directories(dir / "images");
    json docs = json::array();
    for (const auto& [id, d] : catalog_.documents()) {
        json blocks = json::array();
        for (const auto& b : d.blocks) blocks.push_back(block_to_json(b));
        docs.push_back({{"doc_id", id}, {"pages", d.pages}, {"blocks", blocks}});
    }
    json chunks = json::array();
    for (const auto& c : chunks_)
        chunks.push_back({{"chunk_id", c.chunk_id},
                          {"doc_id", c.doc_id},
                          {"block_ids", c.block_ids},
                          {"text", c.text},
                          {"char_count", c.char_count},
                          {"summary", c.summary}});
    json images = json::array();
    for (const auto& r : images_)
        images.push_back({{"doc_id", r.doc_id}, {"block_id", r.block_id}, {"caption", r.caption}, {"description", r.description}});

    json pages = json::array();
    for (const auto& [key, bytes] : page_images_) {
        const auto rel = fs::path("pages") / key.first / (std::to_string(key.second) + ".img");
        fs::create_directories(dir / rel.parent_path());
        util::write_file((dir / rel).string(), std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
        pages.push_back({{"doc_id", key.first}, {"page", key.second}, {"file", rel.generic_string()}});
    }
    json stored_images = json::array();
    for (const auto& [key, bytes] : image_bytes_) {
        const auto rel = fs::path("images") / key.first / (std::to_string(key.second) + ".img");
        fs::create_directories(dir / rel.parent_path());
        util::write_file((dir / rel).string(), std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
        stored_images.push_back({{"doc_id", key.first}, {"block_id", key.second}, {"file", rel.generic_string()}});
    }

    json meta{{"format", kIndexFormat},
              {"documents", docs},
              {"chunks", chunks},
              {"images", images},
              {"image_files", stored_images},
              {"page_files", pages},
              {"bm25", {{"k1", text_bm25_.params().k1}, {"b", text_bm25_.params().b}}}};
    util::write_file((dir / "meta.json").string(), meta.dump());

    json inverted{{"format", kIndexFormat}, {"text", text_bm25_.to_json()}, {"image", image_bm25_.to_json()}};
    util::write_file((dir / "inverted.json").string(), inverted.dump());

    std::ofstream out(dir / "vectors.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw IndexError("cannot write vectors file in " + dir.string());
    out.write(kVectorMagic, sizeof kVectorMagic);
    const std::uint32_t version = kVectorVersion, tables = 5;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&tables), sizeof tables);
    std::vector<const std::vector<float>*> content, summary, image, caption, combined;
    for (const auto& c : chunks_) {
        content.push_back(&c.content_vector);
        summary.push_back(&c.summary_vector);
    }
    for (const auto& r : images_) {
        image.push_back(&r.image_vector);
        caption.push_back(&r.caption_vector);
        combined.push_back(&r.combined_vector);
    }
    write_table(out, content_.dimension(), content);
    write_table(out, summary_.dimension(), summary);
    write_table(out, images_.empty() ? 0 : images_.front().image_vector.size(), image);
    write_table(out, images_.empty() ? 0 : images_.front().caption_vector.size(), caption);
    write_table(out, combined_.dimension(), combined);
    if (!out) throw IndexError("failed writing vectors file");
}

Index Index::load(const fs::path& dir) {
    const json meta = read_json_file(dir / "meta.json");
    const json inverted = read_json_file(dir / "inverted.json");

    ingest::DocumentCatalog catalog;
    std::vector<ingest::Chunk> chunks;
    std::vector<ingest::ImageRecord> images;
    std::map<BlockKey, std::vector<std::uint8_t>> image_bytes;
    std::map<std::pair<std::string, int>, std::vector<std::uint8_t>> page_images;
    try {
        for (const auto& d : meta.at("documents")) {
            ingest::LayoutDocument doc;
            doc.doc_id = d.at("doc_id").get<std::string>();
            doc.pages = d.at("pages").get<int>();
            for (const auto& jb : d.at("blocks")) {
                ingest::Block b;
                b.doc_id = doc.doc_id;
                b.block_id = jb.at("id").get<ingest::BlockId>();
                b.page = jb.at("page").get<int>();
                const auto& bb = jb.at("bbox");
                b.bbox = {bb.at(0).get<double>(), bb.at(1).get<double>(), bb.at(2).get<double>(), bb.at(3).get<double>()};
                b.kind = jb.at("kind").get<std::string>() == "figure" ? ingest::BlockKind::Figure : ingest::BlockKind::Text;
                b.text = jb.value("text", "");
                if (jb.contains("image_file")) b.image_ref = jb["image_file"].get<std::string>();
                if (b.block_id != doc.blocks.size()) throw IndexError("block ids are not dense in " + doc.doc_id);
                doc.blocks.push_back(std::move(b));
            }
            catalog.add(std::move(doc));
        }
        for (const auto& jc : meta.at("chunks")) {
            ingest::Chunk c;
            c.chunk_id = jc.at("chunk_id").get<std::string>();
            c.doc_id = jc.at("doc_id").get<std::string>();
            c.block_ids = jc.at("block_ids").get<std::vector<ingest::BlockId>>();
            c.text = jc.at("text").get<std::string>();
            c.char_count = jc.at("char_count").get<std::size_t>();
            c.summary = jc.at("summary").get<std::string>();
            chunks.push_back(std::move(c));
        }
        for (const auto& ji : meta.at("images")) {
            ingest::ImageRecord r;
            r.doc_id = ji.at("doc_id").get<std::string>();
            r.block_id = ji.at("block_id").get<ingest::BlockId>();
            r.caption = ji.at("caption").get<std::string>();
            r.description = ji.at("description").get<std::string>();
            images.push_back(std::move(r));
        }
        for (const auto& jf : meta.at("image_files")) {
            const auto bytes = util::read_file((dir / jf.at("file").get<std::string>()).string());
            image_bytes[{jf.at("doc_id").get<std::string>(), jf.at("block_id").get<ingest::BlockId>()}] = bytes;
        }
        for (const auto& jp : meta.at("page_files")) {
            const auto bytes = util::read_file((dir / jp.at("file").get<std::string>()).string());
            page_images[{jp.at("doc_id").get<std::string>(), jp.at("page").get<int>()}] = bytes;
        }
    } catch (const json::exception& e) {
        throw IndexError(std::string("malformed index metadata: ") + e.what());
    } catch (const std::runtime_error& e) {
        if (dynamic_cast<const Error*>(&e)) throw;
        throw IndexError(e.what());
    }

    std::ifstream in(dir / "vectors.bin", std::ios::binary);
    if (!in) throw IndexError("missing vectors file in " + dir.string());
    char magic[8];
    std::uint32_t version = 0, tables = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&tables), sizeof tables);
    if (!in || std::memcmp(magic, kVectorMagic, sizeof magic) != 0 || version != kVectorVersion || tables != 5)
        throw IndexError("unsupported vectors file format");
    auto content = read_table(in), summary = read_table(in), image = read_table(in), caption = read_table(in),
         combined = read_table(in);
    if (content.size() != chunks.size() || summary.size() != chunks.size() || image.size() != images.size() ||
        caption.size() != images.size() || combined.size() != images.size())
        throw IndexError("vector table sizes do not match metadata");
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        chunks[i].content_vector = std::move(content[i]);
        chunks[i].summary_vector = std::move(summary[i]);
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        images[i].image_vector = std::move(image[i]);
        images[i].caption_vector = std::move(caption[i]);
        images[i].combined_vector = std::move(combined[i]);
    }

    Bm25Params params{meta.at("bm25").value("k1", 1.2), meta.at("bm25").value("b", 0.75)};
    Index idx = build(std::move(catalog), std::move(chunks), std::move(images), std::move(image_bytes), params);
    idx.page_images_ = std::move(page_images);
    idx.text_bm25_ = Bm25Index::from_json(inverted.at("text"));
    idx.image_bm25_ = Bm25Index::from_json(inverted.at("image"));
    if (idx.text_bm25_.size() != idx.chunks_.size() || idx.image_bm25_.size() != idx.images_.size())
        throw IndexError("inverted index sizes do not match metadata");
    return idx;
}

}  // namespace mudoc::retrieval

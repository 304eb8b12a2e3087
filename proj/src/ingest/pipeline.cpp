#include "mudoc/ingest/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "mudoc/error.hpp"
#include "mudoc/ingest/chunker.hpp"
#include "mudoc/ingest/layout.hpp"
#include "mudoc/simd/kernels.hpp"
#include "mudoc/util.hpp"

namespace mudoc::ingest {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSummaryInstruction =
    "You summarize passages from an educational textbook. Write a succinct summary (three to five "
    "sentences) of the passage the user sends, naming the key terms it defines and the processes it "
    "describes. Reply with the summary text only.";

constexpr const char* kImageInstruction =
    "You describe figures from an educational textbook. Reply with a JSON object with two string "
    "fields: \"caption\", a short caption naming what the figure shows, and \"description\", a "
    "detailed description of the figure including every label, stage, and key term visible in it.";

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string summarize_chunk(const Chunk& chunk, gateway::Gateway& gateway) {
    if (trim(chunk.text).empty()) throw PreconditionError("chunk " + chunk.chunk_id + " has no text to summarize");
    gateway::ChatRequest req;
    req.purpose = "summarize";
    req.tag = "ingest";
    req.temperature = 0.0;
    req.messages.push_back({gateway::Role::System, kSummaryInstruction});
    req.messages.push_back({gateway::Role::User, chunk.text});
    std::string summary;
    try {
        summary = trim(gateway.chat(req).content);
    } catch (const GatewayError& e) {
        throw IngestError("summarizing " + chunk.chunk_id + " failed: " + e.what());
    }
    if (summary.empty()) throw IngestError("empty summary for " + chunk.chunk_id);
    return summary;
}

ImageDescription describe_image(std::span<const std::uint8_t> bytes, gateway::Gateway& gateway) {
    if (bytes.empty()) throw ImageError("image is empty");
    const std::string mime = util::sniff_image_type(bytes);
    if (mime.empty()) throw ImageError("image bytes are not a recognized format");

    gateway::ChatRequest req;
    req.purpose = "describe_image";
    req.tag = "ingest";
    req.temperature = 0.0;
    req.messages.push_back({gateway::Role::System, kImageInstruction});
    gateway::ChatMessage user{gateway::Role::User, "Describe this figure."};
    user.images.push_back({mime, {bytes.begin(), bytes.end()}});
    req.messages.push_back(std::move(user));

    std::string content;
    try {
        content = gateway.chat(req).content;
    } catch (const GatewayError& e) {
        throw IngestError(std::string("describing image failed: ") + e.what());
    }

    ImageDescription out;
    const auto open = content.find('{');
    const auto close = content.rfind('}');
    json parsed = open != std::string::npos && close != std::string::npos && close > open
                      ? json::parse(content.substr(open, close - open + 1), nullptr, false)
                      : json();
    if (parsed.is_object() && parsed.contains("caption") && parsed["caption"].is_string()) {
        out.caption = trim(parsed["caption"].get<std::string>());
        if (parsed.contains("description") && parsed["description"].is_string())
            out.description = trim(parsed["description"].get<std::string>());
    } else {
        // Plain text reply: first line is the caption, the rest the description.
        const auto text = trim(content);
        const auto nl = text.find('\n');
        out.caption = trim(text.substr(0, nl));
        out.description = nl == std::string::npos ? std::string{} : trim(text.substr(nl + 1));
    }
    if (out.caption.empty() || out.description.empty())
        throw IngestError("image description reply lacks a caption or description");
    return out;
}

void bounded_parallel_for(std::size_t n, int max_in_flight, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, max_in_flight)));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first;
    std::mutex error_mutex;
    auto work = [&] {
        for (std::size_t i; !failed && (i = next++) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first) first = std::current_exception();
                failed = true;
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (first) std::rethrow_exception(first);
}

retrieval::IndexHandle embed_and_index(DocumentCatalog catalog, std::vector<Chunk> chunks,
                                       std::vector<ImageRecord> images,
                                       std::map<retrieval::BlockKey, std::vector<std::uint8_t>> image_bytes,
                                       gateway::Gateway& gateway, int max_in_flight) {
    for (const auto& c : chunks)
        if (c.summary.empty()) throw PreconditionError("chunk " + c.chunk_id + " has no summary");
    for (const auto& r : images)
        if (r.caption.empty()) throw PreconditionError("image " + r.doc_id + ":" + std::to_string(r.block_id) + " has no caption");

    try {
        bounded_parallel_for(chunks.size(), max_in_flight, [&](std::size_t i) {
            auto v = gateway.embed_text({chunks[i].text, chunks[i].summary});
            chunks[i].content_vector = std::move(v[0]);
            chunks[i].summary_vector = std::move(v[1]);
        });
        bounded_parallel_for(images.size(), max_in_flight, [&](std::size_t i) {
            auto& r = images[i];
            auto it = image_bytes.find({r.doc_id, r.block_id});
            if (it == image_bytes.end())
                throw IngestError("no image bytes for " + r.doc_id + ":" + std::to_string(r.block_id));
            r.image_vector = gateway.embed_image(it->second);
            r.caption_vector = gateway.embed_image_text({r.caption}).front();
            if (r.image_vector.size() != r.caption_vector.size())
                throw IndexError("image vector dimension " + std::to_string(r.image_vector.size()) +
                                 " differs from caption vector dimension " + std::to_string(r.caption_vector.size()));
            r.combined_vector = simd::mean2(r.image_vector, r.caption_vector);
        });
    } catch (const GatewayError& e) {
        throw IngestError(std::string("embedding failed: ") + e.what());
    }

    return std::make_shared<const retrieval::Index>(
        retrieval::Index::build(std::move(catalog), std::move(chunks), std::move(images), std::move(image_bytes)));
}

IngestReport ingest_documents(std::vector<LayoutDocument> documents, const IngestConfig& config,
                              gateway::Gateway& gateway,
                              const std::function<std::vector<std::uint8_t>(const Block&)>& load_image) {
    config.validate();
    IngestReport report;
    DocumentCatalog catalog;
    std::vector<Chunk> chunks;
    std::vector<ImageRecord> images;
    std::map<retrieval::BlockKey, std::vector<std::uint8_t>> image_bytes;

    for (auto& doc : documents) {
        report.blocks += doc.blocks.size();
        for (auto& c : build_chunks(doc.blocks, config)) {
            if (trim(c.text).empty()) {
                report.warnings.push_back("chunk " + c.chunk_id + " has no text; skipped");
                spdlog::warn("chunk {} has no text; skipped", c.chunk_id);
                continue;
            }
            chunks.push_back(std::move(c));
        }
        for (const auto& b : doc.blocks) {
            if (b.kind != BlockKind::Figure) continue;
            auto bytes = load_image(b);
            ImageRecord r;
            r.doc_id = b.doc_id;
            r.block_id = b.block_id;
            images.push_back(std::move(r));
            image_bytes[{b.doc_id, b.block_id}] = std::move(bytes);
        }
        catalog.add(std::move(doc));
    }
    report.documents = catalog.documents().size();

    bounded_parallel_for(chunks.size(), config.max_in_flight,
                         [&](std::size_t i) { chunks[i].summary = summarize_chunk(chunks[i], gateway); });
    bounded_parallel_for(images.size(), config.max_in_flight, [&](std::size_t i) {
        auto& r = images[i];
        auto d = describe_image(image_bytes.at({r.doc_id, r.block_id}), gateway);
        r.caption = std::move(d.caption);
        r.description = std::move(d.description);
    });

    report.index = embed_and_index(std::move(catalog), std::move(chunks), std::move(images), std::move(image_bytes),
                                   gateway, config.max_in_flight);
    return report;
}

IngestReport ingest_directory(const fs::path& input_dir, const IngestConfig& config, gateway::Gateway& gateway) {
    if (!fs::is_directory(input_dir)) throw IngestError("input directory not found: " + input_dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(input_dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());

    std::vector<LayoutDocument> docs;
    for (const auto& f : files) {
        const auto raw = util::read_file(f.string());
        try {
            docs.push_back(parse_layout(std::string_view(reinterpret_cast<const char*>(raw.data()), raw.size())));
        } catch (const ParseError& e) {
            throw ParseError(f.filename().string() + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(f.filename().string() + ": " + e.what());
        }
    }

    auto load_image = [&](const Block& b) {
        const auto path = input_dir / *b.image_ref;
        try {
            return util::read_file(path.string());
        } catch (const std::runtime_error&) {
            throw ImageError("cannot read image " + path.string() + " for " + b.doc_id + ":" + std::to_string(b.block_id));
        }
    };
    auto report = ingest_documents(std::move(docs), config, gateway, load_image);

    std::map<std::pair<std::string, int>, std::vector<std::uint8_t>> pages;
    for (const auto& [doc_id, doc] : report.index->catalog().documents()) {
        for (int p = 1; p <= doc.pages; ++p) {
            for (const char* ext : {".png", ".jpg", ".jpeg"}) {
                const auto path = input_dir / doc_id / "pages" / (std::to_string(p) + ext);
                if (fs::is_regular_file(path)) {
                    pages[{doc_id, p}] = util::read_file(path.string());
                    break;
                }
            }
        }
    }
    if (!pages.empty()) {
        auto copy = std::make_shared<retrieval::Index>(*report.index);
        copy->set_page_images(std::move(pages));
        report.index = std::move(copy);
    }
    return report;
}

}  // namespace mudoc::ingest

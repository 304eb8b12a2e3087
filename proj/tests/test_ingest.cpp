#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>

#include <nlohmann/json.hpp>

#include "mudoc/error.hpp"
#include "mudoc/ingest/chunker.hpp"
#include "mudoc/ingest/pipeline.hpp"
#include "mudoc/simd/kernels.hpp"
#include "mudoc/util.hpp"
#include "support.hpp"

using namespace mudoc;
using namespace mudoc::ingest;
using gateway::MockStep;
using nlohmann::json;

namespace {

const std::vector<std::uint8_t> kPngA{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n', 'A'};
const std::vector<std::uint8_t> kPngB{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n', 'B'};

Chunk chunk_with_text(std::string text) {
    Chunk c;
    c.chunk_id = "d#0";
    c.doc_id = "d";
    c.block_ids = {0};
    c.text = std::move(text);
    return c;
}

LayoutDocument document(std::size_t text_blocks, std::size_t chars, std::vector<std::string> figures = {}) {
    LayoutDocument doc{"d", 1, {}};
    BlockId id = 0;
    for (std::size_t i = 0; i < text_blocks; ++i) {
        Block b;
        b.doc_id = "d";
        b.block_id = id++;
        b.bbox = {0, 0, 1, 1};
        b.text = std::string(chars, static_cast<char>('a' + i % 26));
        doc.blocks.push_back(b);
    }
    for (auto& f : figures) {
        Block b;
        b.doc_id = "d";
        b.block_id = id++;
        b.bbox = {0, 0, 1, 1};
        b.kind = BlockKind::Figure;
        b.image_ref = f;
        doc.blocks.push_back(b);
    }
    return doc;
}

// Describes each image according to its own bytes, so crossed wires show.
class PairingProvider : public gateway::MockProvider {
public:
    std::map<std::vector<std::uint8_t>, std::pair<std::string, std::string>> answers;

    gateway::ChatCompletion chat(const gateway::ChatRequest& r, const gateway::TextDeltaHandler& h) override {
        if (r.purpose != "describe_image") return MockProvider::chat(r, h);
        for (const auto& m : r.messages)
            for (const auto& img : m.images)
                if (auto it = answers.find(img.bytes); it != answers.end())
                    return {json{{"caption", it->second.first}, {"description", it->second.second}}.dump(), {}};
        throw GatewayError("unexpected image");
    }
};

// Image-space vectors of a different width than image vectors.
class SkewedProvider : public gateway::MockProvider {
public:
    SkewedProvider() : MockProvider(8) {}
    std::vector<gateway::Vector> embed_image_text(const std::vector<std::string>& texts) override {
        return MockProvider(16).embed_text(texts);
    }
};

// Every other text embedding call answers with a different width.
class FlappingProvider : public gateway::MockProvider {
public:
    std::vector<gateway::Vector> embed_text(const std::vector<std::string>& texts) override {
        std::lock_guard lock(m);
        return MockProvider(++calls % 2 ? 8 : 12).embed_text(texts);
    }
    std::mutex m;
    int calls = 0;
};

gateway::Gateway gateway_for(std::shared_ptr<gateway::Provider> p, int budget = 2) {
    return gateway::Gateway(std::move(p), {budget, std::chrono::milliseconds{0}, 1.0});
}

auto image_loader(std::map<std::string, std::vector<std::uint8_t>> files) {
    return [files](const Block& b) { return files.at(*b.image_ref); };
}

}  // namespace

TEST_CASE("scripted summary is stored verbatim") {
    testing::MockRig rig;
    rig.mock->script("ingest", {MockStep::text("S1")});
    CHECK(summarize_chunk(chunk_with_text("mitosis"), *rig.gateway) == "S1");
}

TEST_CASE("empty chunk text is a precondition violation") {
    testing::MockRig rig;
    CHECK_THROWS_AS(summarize_chunk(chunk_with_text("  \n"), *rig.gateway), PreconditionError);
}

TEST_CASE("summary failures surface as IngestError") {
    testing::MockRig rig(64, 0);
    rig.mock->script("ingest", {MockStep::transient_failure()});
    CHECK_THROWS_AS(summarize_chunk(chunk_with_text("x"), *rig.gateway), IngestError);
    rig.mock->script("ingest", {MockStep::text("")});
    CHECK_THROWS_AS(summarize_chunk(chunk_with_text("x"), *rig.gateway), IngestError);
}

TEST_CASE("three chunks summarized through one transient failure") {
    testing::MockRig rig(64, 2);
    rig.mock->script("ingest", {MockStep::transient_failure(), MockStep::text("S1"), MockStep::text("S2"),
                                MockStep::text("S3")});
    IngestConfig cfg;
    cfg.min_chunk_chars = 100;
    cfg.max_in_flight = 1;
    // Four 60-char blocks give chunks [0,1] [1,2] [2,3].
    auto doc = document(4, 60);
    REQUIRE(build_chunks(doc.blocks, cfg).size() == 3);
    const auto report = ingest_documents({doc}, cfg, *rig.gateway, {});
    REQUIRE(report.index->text_count() == 3);
    std::vector<std::string> summaries;
    for (const auto& c : report.index->chunks()) summaries.push_back(c.summary);
    CHECK(summaries == std::vector<std::string>{"S1", "S2", "S3"});
    CHECK(rig.mock->remaining("ingest") == 0);
}

TEST_CASE("scripted image description is stored verbatim") {
    testing::MockRig rig;
    rig.mock->script("ingest", {MockStep::text(json{{"caption", "meiosis diagram"},
                                                    {"description", "long description of the stages"}}.dump())});
    const auto d = describe_image(kPngA, *rig.gateway);
    CHECK(d.caption == "meiosis diagram");
    CHECK(d.description == "long description of the stages");
}

TEST_CASE("plain-text description falls back to first line and the rest") {
    testing::MockRig rig;
    rig.mock->script("ingest", {MockStep::text("Cell diagram\nShows the nucleus and membrane.")});
    const auto d = describe_image(kPngA, *rig.gateway);
    CHECK(d.caption == "Cell diagram");
    CHECK(d.description == "Shows the nucleus and membrane.");
    rig.mock->script("ingest", {MockStep::text("only a caption")});
    CHECK_THROWS_AS(describe_image(kPngA, *rig.gateway), IngestError);
}

TEST_CASE("undecodable images are ImageErrors") {
    testing::MockRig rig;
    CHECK_THROWS_AS(describe_image({}, *rig.gateway), ImageError);
    const std::vector<std::uint8_t> junk{'h', 'e', 'l', 'l', 'o'};
    CHECK_THROWS_AS(describe_image(junk, *rig.gateway), ImageError);
    CHECK(util::sniff_image_type(kPngA) == "image/png");
    CHECK(util::sniff_image_type(std::vector<std::uint8_t>{0xFF, 0xD8, 0xFF, 0xE0}) == "image/jpeg");
}

TEST_CASE("distinct images keep their own descriptions under concurrency") {
    auto provider = std::make_shared<PairingProvider>();
    std::map<std::string, std::vector<std::uint8_t>> files;
    std::vector<std::string> names;
    for (int i = 0; i < 12; ++i) {
        auto bytes = kPngA;
        bytes.push_back(static_cast<std::uint8_t>(i));
        const auto name = "f" + std::to_string(i) + ".png";
        files[name] = bytes;
        names.push_back(name);
        provider->answers[bytes] = {"caption " + std::to_string(i), "description " + std::to_string(i)};
    }
    auto gw = gateway_for(provider);
    IngestConfig cfg;
    cfg.max_in_flight = 4;
    const auto report = ingest_documents({document(2, 50, names)}, cfg, gw, image_loader(files));
    REQUIRE(report.index->image_count() == 12);
    for (const auto& r : report.index->images()) {
        const auto i = std::to_string(r.block_id - 2);
        CHECK(r.caption == "caption " + i);
        CHECK(r.description == "description " + i);
        CHECK(*report.index->image_bytes(r.doc_id, r.block_id) == files.at("f" + i + ".png"));
    }
}

TEST_CASE("index vectors satisfy the stored invariants") {
    testing::MockRig rig;
    const auto index = testing::ingest_toy(*rig.gateway);
    CHECK(index->catalog().block_count() == 20);
    CHECK(index->image_count() == 2);
    for (const auto& c : index->chunks()) {
        CHECK(!c.summary.empty());
        CHECK(c.content_vector.size() == c.summary_vector.size());
        CHECK(simd::l2_norm(c.content_vector) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(simd::l2_norm(c.summary_vector) == doctest::Approx(1.0).epsilon(1e-6));
    }
    for (const auto& r : index->images()) {
        CHECK(!r.caption.empty());
        CHECK(!r.description.empty());
        REQUIRE(r.image_vector.size() == r.caption_vector.size());
        for (std::size_t i = 0; i < r.image_vector.size(); ++i)
            CHECK(r.combined_vector[i] == (r.image_vector[i] + r.caption_vector[i]) / 2.0f);
    }
}

TEST_CASE("ten chunks and four images are counted") {
    testing::MockRig rig;
    std::map<std::string, std::vector<std::uint8_t>> files;
    std::vector<std::string> names;
    for (int i = 0; i < 4; ++i) {
        auto bytes = kPngB;
        bytes.push_back(static_cast<std::uint8_t>(i));
        names.push_back("g" + std::to_string(i));
        files[names.back()] = bytes;
    }
    IngestConfig cfg;
    cfg.min_chunk_chars = 10;
    cfg.overlap_fraction = Fraction::parse("0.99");
    // With 11 text blocks, each chunk takes two and steps by one: ten chunks.
    const auto report = ingest_documents({document(11, 20, names)}, cfg, *rig.gateway, image_loader(files));
    CHECK(report.index->text_count() == 10);
    CHECK(report.index->image_count() == 4);
}

TEST_CASE("image and caption vectors of different widths are an IndexError") {
    auto gw = gateway_for(std::make_shared<SkewedProvider>());
    CHECK_THROWS_AS(ingest_documents({document(1, 10, {"a"})}, {}, gw, image_loader({{"a", kPngA}})), IndexError);
}

TEST_CASE("text vectors of different widths are an IndexError") {
    auto gw = gateway_for(std::make_shared<FlappingProvider>());
    IngestConfig cfg;
    cfg.min_chunk_chars = 10;
    cfg.max_in_flight = 1;
    CHECK_THROWS_AS(ingest_documents({document(4, 20)}, cfg, gw, {}), IndexError);
}

TEST_CASE("embedding requires summaries and captions") {
    testing::MockRig rig;
    Chunk c = chunk_with_text("t");
    CHECK_THROWS_AS(embed_and_index({}, {c}, {}, {}, *rig.gateway), PreconditionError);
    ImageRecord r;
    r.doc_id = "d";
    CHECK_THROWS_AS(embed_and_index({}, {}, {r}, {}, *rig.gateway), PreconditionError);
}

TEST_CASE("whitespace-only chunks are skipped with a warning") {
    testing::MockRig rig;
    auto doc = document(1, 0);
    doc.blocks[0].text = "   ";
    const auto report = ingest_documents({doc}, {}, *rig.gateway, {});
    CHECK(report.index->text_count() == 0);
    CHECK(report.warnings.size() == 1);
}

TEST_CASE("bounded_parallel_for visits every index and rethrows the first error") {
    std::vector<int> seen(100, 0);
    bounded_parallel_for(100, 4, [&](std::size_t i) { seen[i]++; });
    CHECK(std::count(seen.begin(), seen.end(), 1) == 100);
    CHECK_THROWS_AS(bounded_parallel_for(10, 3, [](std::size_t i) {
                        if (i == 4) throw IngestError("boom");
                    }),
                    IngestError);
}

TEST_CASE("directory ingest reports bad files by name") {
    testing::MockRig rig;
    testing::TempDir dir("mudoc-ingest");
    std::ofstream(dir.path() / "broken.json") << "{\"doc_id\": \"x\", \"pages\": 1, \"blocks\": [{}]}";
    try {
        ingest_directory(dir.path(), {}, *rig.gateway);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("broken.json") != std::string::npos);
    }
    CHECK_THROWS_AS(ingest_directory(dir.path() / "nope", {}, *rig.gateway), IngestError);

    testing::TempDir missing("mudoc-ingest");
    std::ofstream(missing.path() / "doc.json")
        << R"({"doc_id":"x","pages":1,"blocks":[{"id":0,"page":1,"bbox":[0,0,1,1],"kind":"figure","image_file":"gone.png"}]})";
    CHECK_THROWS_AS(ingest_directory(missing.path(), {}, *rig.gateway), ImageError);
}

#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <regex>
#include <set>

#include "mudoc/agent/agent.hpp"
#include "mudoc/error.hpp"
#include "mudoc/simd/kernels.hpp"

namespace testing {

namespace fs = std::filesystem;
using namespace mudoc;
using nlohmann::json;

fs::path toy_dir() { return fs::path(MUDOC_TEST_DATA_DIR) / "toy"; }

TempDir::TempDir(const std::string& stem) {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            (stem + "-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

MockRig::MockRig(std::size_t dimension, int retry_budget)
    : mock(std::make_shared<gateway::MockProvider>(dimension)),
      gateway(std::make_unique<gateway::Gateway>(
          mock, gateway::RetryPolicy{retry_budget, std::chrono::milliseconds{0}, 1.0}, 8)) {}

retrieval::IndexHandle ingest_toy(gateway::Gateway& gw, std::size_t min_chunk_chars) {
    ingest::IngestConfig cfg;
    cfg.min_chunk_chars = min_chunk_chars;
    return ingest::ingest_directory(toy_dir(), cfg, gw).index;
}

std::vector<float> random_vector(std::mt19937_64& rng, std::size_t dimension) {
    std::normal_distribution<float> d(0.0f, 1.0f);
    std::vector<float> v(dimension);
    double n = 0.0;
    for (auto& x : v) {
        x = d(rng);
        n += double(x) * x;
    }
    n = std::sqrt(n);
    for (auto& x : v) x = static_cast<float>(x / n);
    return v;
}

RandomCorpus random_corpus(std::mt19937_64& rng, std::size_t docs, std::size_t blocks_per_doc, std::size_t dim) {
    static const std::vector<std::string> vocab = {"cell",   "membrane", "energy", "light",  "carbon", "oxygen",
                                                   "enzyme", "protein",  "dna",    "sugar",  "water",  "leaf",
                                                   "root",   "mitosis",  "gene",   "atp",    "nadph",  "stroma"};
    std::uniform_int_distribution<std::size_t> word(0, vocab.size() - 1);
    std::uniform_int_distribution<int> len(1, 12);
    std::bernoulli_distribution is_figure(0.2);
    auto sentence = [&] {
        std::string s;
        for (int i = len(rng); i > 0; --i) {
            if (!s.empty()) s += ' ';
            s += vocab[word(rng)];
        }
        return s;
    };

    ingest::DocumentCatalog catalog;
    std::vector<ingest::Chunk> chunks;
    std::vector<ingest::ImageRecord> images;
    std::map<retrieval::BlockKey, std::vector<std::uint8_t>> bytes;
    for (std::size_t d = 0; d < docs; ++d) {
        ingest::LayoutDocument doc;
        doc.doc_id = "doc" + std::to_string(d);
        doc.pages = static_cast<int>(blocks_per_doc);
        for (std::size_t b = 0; b < blocks_per_doc; ++b) {
            ingest::Block blk;
            blk.doc_id = doc.doc_id;
            blk.block_id = static_cast<ingest::BlockId>(b);
            blk.page = static_cast<int>(b) + 1;
            blk.bbox = {0.1, 0.1, 0.5, 0.2};
            if (is_figure(rng)) {
                blk.kind = ingest::BlockKind::Figure;
                blk.image_ref = "f.png";
                ingest::ImageRecord r;
                r.doc_id = doc.doc_id;
                r.block_id = blk.block_id;
                r.caption = sentence();
                r.description = sentence();
                r.image_vector = random_vector(rng, dim);
                r.caption_vector = random_vector(rng, dim);
                r.combined_vector = simd::mean2(r.image_vector, r.caption_vector);
                images.push_back(std::move(r));
                bytes[{doc.doc_id, blk.block_id}] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
            } else {
                blk.text = sentence();
                ingest::Chunk c;
                c.chunk_id = doc.doc_id + "#" + std::to_string(b);
                c.doc_id = doc.doc_id;
                c.block_ids = {blk.block_id};
                c.text = blk.text;
                c.char_count = c.text.size();
                c.summary = sentence();
                c.content_vector = random_vector(rng, dim);
                c.summary_vector = random_vector(rng, dim);
                chunks.push_back(std::move(c));
            }
            doc.blocks.push_back(std::move(blk));
        }
        catalog.add(std::move(doc));
    }
    RandomCorpus out;
    out.dimension = dim;
    out.index = std::make_shared<const retrieval::Index>(
        retrieval::Index::build(std::move(catalog), std::move(chunks), std::move(images), std::move(bytes)));
    return out;
}

RecordingBackend::RecordingBackend(retrieval::IndexHandle index, gateway::Gateway& gw)
    : retriever_(std::move(index), gw) {}

namespace {
void raise_max(std::atomic<std::size_t>& slot, std::size_t v) {
    auto cur = slot.load();
    while (v > cur && !slot.compare_exchange_weak(cur, v)) {
    }
}
}  // namespace

std::vector<retrieval::ScoredChunk> RecordingBackend::search_text(std::string_view query, std::size_t k) {
    ++text_calls;
    raise_max(max_text_k, k);
    if (query.find(fail_marker) != std::string_view::npos) throw IndexError("injected retrieval failure");
    return retriever_.search_text(query, k);
}

std::vector<retrieval::ScoredImage> RecordingBackend::search_images(std::string_view query, std::size_t k) {
    ++image_calls;
    raise_max(max_image_k, k);
    if (query.find(fail_marker) != std::string_view::npos) throw IndexError("injected retrieval failure");
    return retriever_.search_images(query, k);
}

MarkedText random_marked_text(std::mt19937_64& rng, const std::vector<std::string>& doc_ids, std::uint32_t max_id) {
    static const std::vector<std::string> plain = {
        "Crossing over ", "occurs ", "early", ". ", "\n", "[", "]", "[[", "]]", "<", ">", "a < b ", "x[1] ",
        "\xc3\xa9t\xc3\xa9 ", "\xe2\x86\x92 ", "\xf0\x9f\x8c\xb1", ", ", ":", "cite", "<b>bold</b> ", "<fig", "figure "};
    static const std::vector<std::string> broken = {
        "[[cite:bio:]]", "[[cite:bio:01]]", "[[cite::1]]", "[[cite:bio:1,]]", "[[cite:bio:1", "[[cit",
        "[[cite:bio 1]]", "[[cite:b!o:1]]", "[[cite:bio:99999999999]]",
        "<figure><img src=\"block://bio/x\"></figure>", "<figure>", "<figur", "</figure>",
        "<figure><img src=\"http://bio/1\"><figcaption>c</figcaption></figure>"};
    std::uniform_int_distribution<std::size_t> pieces(1, 30), pick_plain(0, plain.size() - 1),
        pick_broken(0, broken.size() - 1), pick_doc(0, doc_ids.size() - 1), nids(1, 4);
    std::uniform_int_distribution<std::uint32_t> id(0, max_id);
    std::uniform_int_distribution<int> kind(0, 9);
    static const std::vector<std::string> captions = {"Plant cell", "Stages of meiosis", "", "ATP synthase (inner membrane)"};
    std::uniform_int_distribution<std::size_t> pick_caption(0, captions.size() - 1);

    MarkedText out;
    for (std::size_t p = pieces(rng); p > 0; --p) {
        const int k = kind(rng);
        if (k <= 4) {
            out.raw += plain[pick_plain(rng)];
        } else if (k <= 6) {
            out.raw += "[[cite:" + doc_ids[pick_doc(rng)] + ":";
            for (std::size_t i = nids(rng); i > 0; --i) {
                out.raw += std::to_string(id(rng));
                if (i > 1) out.raw += ',';
            }
            out.raw += "]]";
        } else if (k <= 8) {
            out.raw += "<figure><img src=\"block://" + doc_ids[pick_doc(rng)] + "/" + std::to_string(id(rng)) +
                       "\"><figcaption>" + captions[pick_caption(rng)] + "</figcaption></figure>";
        } else {
            out.raw += broken[pick_broken(rng)];
        }
    }
    out.tokens = random_split(rng, out.raw);
    return out;
}

std::vector<std::string> random_split(std::mt19937_64& rng, const std::string& raw) {
    std::uniform_int_distribution<std::size_t> len(0, 9);
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < raw.size();) {
        const auto n = std::min(raw.size() - i, len(rng));
        tokens.push_back(raw.substr(i, n));  // empty tokens allowed
        i += n;
    }
    return tokens;
}

namespace {

json reflections(std::mt19937_64& rng) {
    static const std::vector<std::string> words = {"meiosis", "membrane", "unclear term", "", "needs a search"};
    std::uniform_int_distribution<std::size_t> w(0, words.size() - 1);
    return {{"query_reflection", words[w(rng)]},
            {"search_content_reflection", words[w(rng)]},
            {"action_reasoning", words[w(rng)]}};
}

std::string fuzz_query(std::mt19937_64& rng) {
    static const std::vector<std::string> q = {"cell membrane", "meiosis stages", "energy ATP", "nucleus",
                                               "FAIL-RETRIEVAL please", "diagram", "\xc3\xa9nergie"};
    return q[std::uniform_int_distribution<std::size_t>(0, q.size() - 1)(rng)];
}

std::vector<gateway::MockStep> random_script(std::mt19937_64& rng, const std::vector<std::string>& docs) {
    using gateway::MockStep;
    std::vector<MockStep> steps;
    std::uniform_int_distribution<int> len(1, 12), kind(0, 99), nq(0, 3);
    for (int n = len(rng); n > 0; --n) {
        const int k = kind(rng);
        json args = reflections(rng);
        if (k < 20) {
            args["query"] = fuzz_query(rng);
            steps.push_back(MockStep::tool("initial_search", args));
        } else if (k < 50) {
            json text = json::array(), images = json::array();
            for (int i = nq(rng); i > 0; --i) text.push_back(fuzz_query(rng));
            for (int i = nq(rng); i > 0; --i) images.push_back(fuzz_query(rng));
            if (text.empty() && images.empty()) text.push_back(fuzz_query(rng));
            args["text_queries"] = text;
            args["image_queries"] = images;
            steps.push_back(MockStep::tool("content_search", args));
        } else if (k < 58) {
            args["question"] = "Do you mean the cell or the membrane?";
            steps.push_back(MockStep::tool("confirm_intent", args));
        } else if (k < 75) {
            auto t = random_marked_text(rng, docs, 30);
            args["content"] = t.raw.empty() ? std::string("ok") : t.raw;
            steps.push_back(MockStep::tool("final_response", args, t.tokens));
        } else if (k < 83) {
            steps.push_back(MockStep::raw_tool(k % 2 ? "content_search" : "final_response", "{not json"));
        } else if (k < 88) {
            steps.push_back(MockStep::raw_tool("summon_oracle", "{}"));
        } else if (k < 93) {
            steps.push_back(MockStep::text("I will just answer without a tool."));
        } else if (k < 97) {
            steps.push_back(MockStep::transient_failure());
        } else {
            steps.push_back(MockStep::permanent_failure());
        }
    }
    return steps;
}

bool same_history(const std::vector<gateway::ChatMessage>& a, const std::vector<gateway::ChatMessage>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].role != b[i].role || a[i].content != b[i].content || a[i].tool_calls.size() != b[i].tool_calls.size() ||
            a[i].tool_call_id != b[i].tool_call_id || a[i].images.size() != b[i].images.size())
            return false;
    return true;
}

}  // namespace

AgentFuzzReport agent_fuzz(std::uint64_t seed, std::size_t scripts) {
    std::mt19937_64 rng(seed);
    MockRig rig(32, 1);
    auto corpus = random_corpus(rng, 3, 24, 32);
    RecordingBackend backend(corpus.index, *rig.gateway);
    std::vector<std::string> docs;
    for (const auto& [id, _] : corpus.index->catalog().documents()) docs.push_back(id);
    docs.push_back("unknown-doc");

    AgentFuzzReport report;
    auto violation = [&](std::size_t n, const std::string& what) {
        report.violations.push_back("script " + std::to_string(n) + ": " + what);
    };
    for (std::size_t n = 0; n < scripts; ++n) {
        agent::AgentState state;
        state.session_id = "fuzz-" + std::to_string(n);
        state.mode = n % 2 == 0 ? AgentMode::MuDoC : AgentMode::TexDoC;
        state.max_iterations = n % 7 == 3 ? static_cast<int>(1 + n % 5) : 6;
        // Two turns per session so rollback is checked against real history.
        for (int turn = 0; turn < 2; ++turn) {
            rig.mock->script(state.session_id, random_script(rng, docs));
            const auto before = state.history;
            const auto image_calls = backend.image_calls.load();
            const auto completed_before = state.completed_turns;
            const auto r = agent::run_turn(state, "Explain turn " + std::to_string(turn), *rig.gateway, backend);
            ++report.turns;

            const auto iters = r.record.iterations.size();
            if (iters > static_cast<std::size_t>(state.max_iterations))
                violation(n, "ran " + std::to_string(iters) + " iterations");
            for (const auto& it : r.record.iterations) {
                if (it.action == "initial_search" && it.text_results > 3) violation(n, "initial_search above 3");
                if (it.action == "content_search" && it.text_results > 10) violation(n, "text results above 10");
                if (it.image_results > 5) violation(n, "image results above 5");
                if (it.forced && it.action != "final_response") violation(n, "forced iteration did not answer");
                if (it.forced != (it.iteration == state.max_iterations)) violation(n, "wrong forced flag");
            }
            std::size_t figures = 0;
            for (const auto& e : r.events) figures += std::holds_alternative<generation::FigureRef>(e);

            const auto new_image_calls = backend.image_calls.load() - image_calls;
            if (state.mode == AgentMode::TexDoC) {
                ++report.texdoc_turns;
                report.texdoc_image_calls += new_image_calls;
                report.texdoc_figure_events += figures;
            } else {
                report.mudoc_image_calls += new_image_calls;
                report.mudoc_figure_events += figures;
            }
            if (state.mode == AgentMode::TexDoC) {
                if (new_image_calls != 0) violation(n, "image retrieval in text-only mode");
                if (figures != 0) violation(n, "figure event in text-only mode");
            }
            if (r.outcome == agent::TurnOutcome::Completed) {
                ++report.completed;
                if (iters > 0 && r.record.iterations.back().forced) ++report.forced;
                if (r.events.empty() || !std::holds_alternative<generation::Done>(r.events.back()))
                    violation(n, "completed turn does not end with done");
                if (r.record.ended_by != "final_response" && r.record.ended_by != "confirm_intent")
                    violation(n, "ended by " + r.record.ended_by);
                if (state.completed_turns != completed_before + 1) violation(n, "turn counter not advanced");
                std::size_t tool_results = 0, searches = 0;
                for (std::size_t i = before.size(); i < state.history.size(); ++i)
                    tool_results += state.history[i].role == gateway::Role::Tool;
                for (const auto& it : r.record.iterations)
                    searches += it.action == "initial_search" || it.action == "content_search";
                if (tool_results != searches || searches != r.search_actions)
                    violation(n, "tool results " + std::to_string(tool_results) + " vs searches " +
                                     std::to_string(searches));
                if (generation::serialize(r.events) != r.record.transcript) violation(n, "transcript mismatch");
            } else {
                ++report.failed;
                if (!same_history(before, state.history)) violation(n, "failed turn changed history");
                if (state.completed_turns != completed_before) violation(n, "failed turn advanced counter");
                if (r.events.empty() || !std::holds_alternative<generation::StreamError>(r.events.back()))
                    violation(n, "failed turn does not end with an error event");
            }
        }
    }
    if (backend.max_text_k.load() > 10) report.violations.push_back("text k above 10");
    if (backend.max_image_k.load() > 5) report.violations.push_back("image k above 5");
    return report;
}

namespace oracle {

MarkerScan scan_markers(const std::string& raw, bool drop_figures,
                        const std::function<bool(const std::string&, std::uint32_t, bool)>& known) {
    static const std::regex cite(R"(\[\[cite:([A-Za-z0-9_.\-]{1,128}):((?:0|[1-9][0-9]{0,9})(?:,(?:0|[1-9][0-9]{0,9})){0,63})\]\])");
    static const std::regex figure(
        R"re(<figure><img src="block://([A-Za-z0-9_.\-]+)/(0|[1-9][0-9]{0,9})"><figcaption>([^<]*)</figcaption></figure>)re");
    MarkerScan scan;
    std::size_t i = 0;
    while (i < raw.size()) {
        std::smatch m;
        const auto from = raw.begin() + static_cast<std::ptrdiff_t>(i);
        if (raw[i] == '[' && std::regex_search(from, raw.end(), m, cite, std::regex_constants::match_continuous)) {
            bool ok = true;
            const std::string ids = m[2].str();
            for (std::size_t p = 0; p < ids.size();) {
                auto q = ids.find(',', p);
                if (q == std::string::npos) q = ids.size();
                const auto v = std::stoull(ids.substr(p, q - p));
                ok = ok && v <= 0xFFFFFFFFULL && known(m[1].str(), static_cast<std::uint32_t>(v), false);
                p = q + 1;
            }
            if (ok) {
                ++scan.citations;
                scan.reserialized += m[0].str();
            } else {
                scan.text_only += m[0].str();
                scan.reserialized += m[0].str();
            }
            i += static_cast<std::size_t>(m.length(0));
            continue;
        }
        if (raw[i] == '<' && std::regex_search(from, raw.end(), m, figure, std::regex_constants::match_continuous)) {
            const auto v = std::stoull(m[2].str());
            if (drop_figures) {
                i += static_cast<std::size_t>(m.length(0));
                continue;
            }
            if (v <= 0xFFFFFFFFULL && known(m[1].str(), static_cast<std::uint32_t>(v), true)) {
                ++scan.figures;
                scan.reserialized += m[0].str();
                i += static_cast<std::size_t>(m.length(0));
                continue;
            }
        }
        scan.text_only += raw[i];
        scan.reserialized += raw[i];
        ++i;
    }
    return scan;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        const bool word = std::isalnum(c) || c >= 0x80;
        if (word) {
            cur += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

double bm25(const std::vector<std::string>& query, const std::vector<std::vector<std::string>>& docs,
            std::size_t doc_index, double k1, double b) {
    const double n = static_cast<double>(docs.size());
    if (docs.empty()) return 0.0;
    double total_len = 0.0;
    for (const auto& d : docs) total_len += static_cast<double>(d.size());
    const double avg = total_len / n;
    const auto& doc = docs[doc_index];
    const double len = static_cast<double>(doc.size());

    double score = 0.0;
    const std::set<std::string> distinct(query.begin(), query.end());
    for (const auto& term : distinct) {
        double df = 0.0;
        for (const auto& d : docs)
            if (std::find(d.begin(), d.end(), term) != d.end()) df += 1.0;
        const double tf = static_cast<double>(std::count(doc.begin(), doc.end(), term));
        if (tf == 0.0) continue;
        const double idf = std::max(0.0, std::log((n - df + 0.5) / (df + 0.5)));
        const double norm = avg > 0.0 ? len / avg : 0.0;
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
    }
    return score;
}

std::vector<Ranked> weighted_sort(const std::vector<PoolEntry>& pool, double w_dense, double w_sparse, std::size_t k) {
    auto norm = [&](auto get) {
        std::vector<double> out(pool.size(), 1.0);
        if (pool.empty()) return out;
        double lo = get(pool[0]), hi = lo;
        for (const auto& p : pool) {
            lo = std::min(lo, get(p));
            hi = std::max(hi, get(p));
        }
        if (hi > lo)
            for (std::size_t i = 0; i < pool.size(); ++i) out[i] = (get(pool[i]) - lo) / (hi - lo);
        return out;
    };
    const auto nd = norm([](const PoolEntry& p) { return p.dense; });
    const auto ns = norm([](const PoolEntry& p) { return p.sparse; });
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < pool.size(); ++i) scored.emplace_back(w_dense * nd[i] + w_sparse * ns[i], i);
    // Selection by repeated scan, so the oracle shares no sort code with the library.
    std::vector<Ranked> out;
    std::vector<bool> used(pool.size(), false);
    while (out.size() < std::min(k, pool.size())) {
        std::size_t best = pool.size();
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (used[i]) continue;
            if (best == pool.size()) {
                best = i;
                continue;
            }
            const double a = scored[i].first, bb = scored[best].first;
            const auto& pi = pool[i];
            const auto& pb = pool[best];
            bool better;
            if (std::llround(a * 1e12) != std::llround(bb * 1e12))
                better = a > bb;
            else if (pi.first_block != pb.first_block)
                better = pi.first_block < pb.first_block;
            else if (pi.doc_id != pb.doc_id)
                better = pi.doc_id < pb.doc_id;
            else
                better = pi.target < pb.target;
            if (better) best = i;
        }
        used[best] = true;
        out.push_back({pool[best].target, scored[best].first});
    }
    return out;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += double(a[i]) * b[i];
        na += double(a[i]) * a[i];
        nb += double(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace oracle

}  // namespace testing

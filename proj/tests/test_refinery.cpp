#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "air/refinery.hpp"

using namespace air;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Backend driven by a lambda; used to script failures and malformed output.
class ScriptedChatBackend : public ChatBackend {
public:
    using Fn = std::function<std::string(const std::string&, const std::string&)>;
    explicit ScriptedChatBackend(Fn fn) : fn_(std::move(fn)) {}
    std::string complete(const std::string& sys, const std::string& user) override {
        ++calls;
        return fn_(sys, user);
    }
    std::atomic<int> calls{0};

private:
    Fn fn_;
};

NewsArticle make_article(const std::string& id, const std::string& date, const std::string& headline,
                         const std::string& body) {
    NewsArticle a;
    a.id = id;
    a.datetime = date + " 08:00:00";
    a.date = Date::parse(date);
    a.headline = headline;
    a.body = body;
    return a;
}

RefineryConfig oil_config() {
    RefineryConfig cfg;
    cfg.subject = "crude oil";
    cfg.description = "crude oil market";
    cfg.targets = {"West Texas Intermediate Crude Oil Price"};
    cfg.retry_backoff_ms = 0;  // keep retry tests fast
    return cfg;
}

}  // namespace

TEST_CASE("stage1: subject-keyword mock filters exactly the matching articles") {
    RefineryConfig cfg = oil_config();
    MockChatBackend mock;
    std::vector<NewsArticle> arts{
        make_article("a1", "2024-02-05", "Oil rallies", "Crude oil surged on supply worries."),
        make_article("a2", "2024-02-05", "Football final", "The match went to penalties."),
        make_article("a3", "2024-02-06", "Inventories", "US crude oil stocks fell last week."),
    };
    Stage1Out out = stage1_summarize_filter(arts, cfg, mock);
    REQUIRE(out.summaries.size() == 3);
    CHECK(out.errors.empty());
    std::set<std::string> relevant;
    for (const auto& s : out.summaries)
        if (s.relevant) relevant.insert(s.id);
    CHECK(relevant == std::set<std::string>{"a1", "a3"});

    SUBCASE("empty corpus succeeds with empty output") {
        Stage1Out empty = stage1_summarize_filter({}, cfg, mock);
        CHECK(empty.summaries.empty());
        CHECK(empty.errors.empty());
    }
    SUBCASE("duplicate ids are rejected before any backend call") {
        ScriptedChatBackend counting([](const std::string&, const std::string&) { return "N/A"; });
        auto dup = arts;
        dup.push_back(make_article("a1", "2024-02-07", "x", "y"));
        CHECK_THROWS_AS(stage1_summarize_filter(dup, cfg, counting), DataError);
        CHECK(counting.calls == 0);
    }
}

TEST_CASE("stage1: transport failures retry then record a per-article error") {
    RefineryConfig cfg = oil_config();
    std::atomic<int> calls{0};
    ScriptedChatBackend flaky([&](const std::string&, const std::string&) -> std::string {
        ++calls;
        throw BackendError("connection reset");
    });
    auto arts = {make_article("a1", "2024-02-05", "Oil", "crude oil news")};
    Stage1Out out = stage1_summarize_filter(arts, cfg, flaky);
    CHECK(out.summaries.empty());
    REQUIRE(out.errors.size() == 1);
    CHECK(out.errors[0].stage == "summarize");
    CHECK(calls == kMaxAttemptsPerItem);  // never more than 4 attempts per item
}

TEST_CASE("stage2: valid responses, cap rule, and re-ask protocol") {
    RefineryConfig cfg = oil_config();
    std::vector<ArticleSummary> summaries;
    for (int i = 0; i < 3; ++i)
        summaries.push_back({"a" + std::to_string(i), Date{2024, 2, 5},
                             "summary line " + std::to_string(i), true});

    SUBCASE("a fixed five-event response is preserved in order") {
        ScriptedChatBackend fixed([](const std::string&, const std::string&) {
            nlohmann::json j = nlohmann::json::array();
            for (int i = 0; i < 5; ++i)
                j.push_back({{"name", "evt" + std::to_string(i)},
                             {"summary", "s" + std::to_string(i)},
                             {"rationale", "r" + std::to_string(i)}});
            return j.dump();
        });
        Stage2Out out = stage2_extract_events(summaries, cfg, fixed);
        REQUIRE(out.events.size() == 5);
        for (int i = 0; i < 5; ++i) CHECK(out.events[static_cast<size_t>(i)].name == "evt" + std::to_string(i));
    }

    SUBCASE("seven events are truncated to the per-day cap of five") {
        ScriptedChatBackend seven([](const std::string&, const std::string&) {
            nlohmann::json j = nlohmann::json::array();
            for (int i = 0; i < 7; ++i)
                j.push_back({{"name", "evt" + std::to_string(i)},
                             {"summary", "s"},
                             {"rationale", "r"}});
            return j.dump();
        });
        Stage2Out out = stage2_extract_events(summaries, cfg, seven);
        CHECK(out.events.size() == 5);
    }

    SUBCASE("persistently invalid JSON skips the date with an error record") {
        ScriptedChatBackend bad([](const std::string&, const std::string&) { return "not json at all"; });
        Stage2Out out = stage2_extract_events(summaries, cfg, bad);
        CHECK(out.events.empty());
        REQUIRE(out.errors.size() == 1);
        CHECK(out.errors[0].stage == "events");
        CHECK(bad.calls == kMaxAttemptsPerItem);
    }

    SUBCASE("a re-ask carries the format reminder and can succeed") {
        std::atomic<int> n{0};
        ScriptedChatBackend flipflop([&](const std::string&, const std::string& user) -> std::string {
            if (n++ == 0) return "oops";
            CHECK(user.find("Reminder:") != std::string::npos);
            return R"([{"name":"evt","summary":"s","rationale":"r"}])";
        });
        Stage2Out out = stage2_extract_events(summaries, cfg, flipflop);
        CHECK(out.events.size() == 1);
        CHECK(out.errors.empty());
        CHECK(flipflop.calls == 2);
    }
}

TEST_CASE("stage3: window boundaries are [d-19, d] inclusive") {
    RefineryConfig cfg = oil_config();
    MockChatBackend mock;
    const Date d{2024, 3, 1};
    std::vector<DailyEvent> events{
        {d.plus_days(-20), "too-old", "s", "r"},
        {d.plus_days(-19), "oldest-in", "s", "r"},
        {d, "newest-in", "s", "r"},
        {d.plus_days(1), "future", "s", "r"},
    };
    Stage3Out out = stage3_generate_insights(events, {d}, cfg, mock);
    REQUIRE(out.insights.size() == 1);
    const std::string& kd = out.insights[0].key_driver;
    CHECK(kd.find("oldest-in") != std::string::npos);
    CHECK(kd.find("newest-in") != std::string::npos);
    CHECK(kd.find("too-old") == std::string::npos);
    CHECK(kd.find("future") == std::string::npos);
}

TEST_CASE("stage3: empty window yields a flagged, empty insight without a backend call") {
    RefineryConfig cfg = oil_config();
    ScriptedChatBackend counting([](const std::string&, const std::string&) -> std::string {
        throw BackendError("should not be called");
    });
    Stage3Out out = stage3_generate_insights({}, {Date{2024, 3, 1}}, cfg, counting);
    REQUIRE(out.insights.size() == 1);
    CHECK(out.insights[0].empty_window);
    CHECK(out.insights[0].key_driver.empty());
    CHECK(counting.calls == 0);
}

TEST_CASE("stage3 window membership agrees with an independent filter on randomized corpora") {
    RefineryConfig cfg = oil_config();
    MockChatBackend mock;
    cfg.max_in_flight = 1;
    Rng rng(2024);
    const Date base{2024, 6, 3};
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<DailyEvent> events;
        const int n = rng.uniform_int(1, 12);
        for (int i = 0; i < n; ++i) {
            DailyEvent e;
            e.date = base.plus_days(rng.uniform_int(-35, 5));
            e.name = "e" + std::to_string(i);
            e.summary = "s";
            e.rationale = "r";
            events.push_back(e);
        }
        const Date d = base;
        Stage3Out out = stage3_generate_insights(events, {d}, cfg, mock);
        REQUIRE(out.insights.size() == 1);

        std::set<std::string> expected;
        for (const auto& e : events)
            if (e.date.serial() >= d.serial() - 19 && e.date.serial() <= d.serial())
                expected.insert(e.name);

        std::set<std::string> got;
        if (!out.insights[0].empty_window) {
            const std::string& kd = out.insights[0].key_driver;
            const std::string marker = ": ";
            size_t pos = kd.find(marker);
            REQUIRE(pos != std::string::npos);
            std::string rest = kd.substr(pos + marker.size());
            size_t start = 0;
            while (start < rest.size()) {
                size_t sep = rest.find("; ", start);
                if (sep == std::string::npos) {
                    got.insert(rest.substr(start));
                    break;
                }
                got.insert(rest.substr(start, sep - start));
                start = sep + 2;
            }
        }
        REQUIRE(got == expected);
    }
}

TEST_CASE("hash embedding backend: determinism, unit norm, near-orthogonal disjoint tokens") {
    HashEmbedBackend be(64, 17);
    RefineryConfig cfg = oil_config();
    auto a = embed_text("oil supply shock in february", be, cfg);
    auto b = embed_text("oil supply shock in february", be, cfg);
    CHECK(a == b);
    double norm = 0;
    for (double v : a) norm += v * v;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-12);

    auto c = embed_text("central bank policy meeting minutes", be, cfg);
    double dot = 0;
    for (size_t i = 0; i < a.size(); ++i) dot += a[i] * c[i];
    CHECK(std::abs(dot) < 0.2);  // verified once for this dimension and seed

    CHECK_THROWS_AS(embed_text("   ", be, cfg), ContractError);
}

TEST_CASE("pipeline golden run on the 30-article fixture") {
    const fs::path fixture = fs::path(AIR_TESTS_DIR) / "fixtures" / "articles.jsonl";
    auto corpus = load_articles_jsonl(fixture);
    REQUIRE(corpus.size() == 30);

    RefineryConfig cfg = oil_config();
    MockChatBackend chat;
    HashEmbedBackend embed(32, 7);
    const fs::path out_dir = fs::temp_directory_path() / "air_pipeline_golden";
    fs::remove_all(out_dir);
    PipelineResult res = run_pipeline(corpus, cfg, chat, embed, out_dir);

    CHECK(res.articles == 30);
    CHECK(res.relevant_summaries == 20);  // two of three per day mention the subject
    CHECK(!res.failed_threshold);
    CHECK(res.errors.empty());

    const std::vector<std::string> names{"summaries.jsonl", "events.jsonl", "insights.jsonl",
                                         "keydriver_emb.jsonl", "outlook_emb.jsonl"};
    const fs::path golden_dir = fs::path(AIR_TESTS_DIR) / "golden" / "pipeline";
    if (std::getenv("AIR_WRITE_GOLDENS")) {
        fs::create_directories(golden_dir);
        for (const auto& n : names)
            fs::copy_file(out_dir / n, golden_dir / n, fs::copy_options::overwrite_existing);
    }
    for (const auto& n : names) {
        REQUIRE(fs::exists(golden_dir / n));
        CHECK(slurp(out_dir / n) == slurp(golden_dir / n));
    }
    CHECK(!fs::exists(out_dir / "errors.jsonl"));  // clean run

    SUBCASE("re-running is byte-identical") {
        const fs::path out2 = fs::temp_directory_path() / "air_pipeline_golden2";
        fs::remove_all(out2);
        run_pipeline(corpus, cfg, chat, embed, out2);
        for (const auto& n : names) CHECK(slurp(out2 / n) == slurp(out_dir / n));
    }

    SUBCASE("per-date event cap holds in events.jsonl") {
        std::istringstream in(slurp(out_dir / "events.jsonl"));
        std::map<std::string, int> per_date;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto j = nlohmann::json::parse(line);
            ++per_date[j.at("date").get<std::string>()];
        }
        CHECK(!per_date.empty());
        for (const auto& [date, n] : per_date) CHECK(n <= 5);
    }
}

TEST_CASE("pipeline: empty corpus writes five empty but valid files") {
    RefineryConfig cfg = oil_config();
    MockChatBackend chat;
    HashEmbedBackend embed(16, 3);
    const fs::path out_dir = fs::temp_directory_path() / "air_pipeline_empty";
    fs::remove_all(out_dir);
    PipelineResult res = run_pipeline({}, cfg, chat, embed, out_dir);
    CHECK(!res.failed_threshold);
    CHECK(res.files.size() == 5);
    for (const auto& f : res.files) {
        CHECK(fs::exists(f));
        CHECK(fs::file_size(f) == 0);
    }
}

TEST_CASE("pipeline: majority failures in a stage trip the threshold") {
    RefineryConfig cfg = oil_config();
    ScriptedChatBackend failing([](const std::string&, const std::string&) -> std::string {
        throw BackendError("offline");
    });
    HashEmbedBackend embed(16, 3);
    std::vector<NewsArticle> arts{
        make_article("a1", "2024-02-05", "Oil", "crude oil body"),
        make_article("a2", "2024-02-06", "Oil again", "more crude oil body"),
    };
    const fs::path out_dir = fs::temp_directory_path() / "air_pipeline_fail";
    fs::remove_all(out_dir);
    PipelineResult res = run_pipeline(arts, cfg, failing, embed, out_dir);
    CHECK(res.failed_threshold);
    CHECK(fs::exists(out_dir / "errors.jsonl"));
    CHECK(res.errors.size() == 2);
}

TEST_CASE("http chat backend speaks the wire contract against a local server") {
    httplib::Server server;
    std::atomic<int> failures_left{2};
    nlohmann::json last_request;
    std::string last_auth;

    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        last_request = nlohmann::json::parse(req.body);
        last_auth = req.get_header_value("Authorization");
        if (failures_left.fetch_sub(1) > 0) {
            res.status = 500;
            res.set_content("backend overloaded", "text/plain");
            return;
        }
        nlohmann::json reply{{"choices", {{{"message", {{"content", "N/A"}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        auto j = nlohmann::json::parse(req.body);
        CHECK(j.at("input").get<std::string>() == "some insight text");
        nlohmann::json reply{{"data", {{{"embedding", {0.5, -0.5, 0.25}}}}}};
        res.set_content(reply.dump(), "application/json");
    });

    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    while (!server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    BackendConfig bc;
    bc.base_url = "http://127.0.0.1:" + std::to_string(port);
    bc.auth_env = "AIR_TEST_TOKEN";
    setenv("AIR_TEST_TOKEN", "sekret", 1);

    SUBCASE("retries ride out transient 500s and the request carries model/messages/temperature") {
        HttpChatBackend chat(bc);
        RefineryConfig cfg = oil_config();
        auto arts = {make_article("a1", "2024-02-05", "Oil", "crude oil body")};
        Stage1Out out = stage1_summarize_filter(arts, cfg, chat);
        REQUIRE(out.summaries.size() == 1);
        CHECK(!out.summaries[0].relevant);  // server said N/A
        CHECK(last_request.at("model").get<std::string>() == bc.chat_model);
        CHECK(last_request.at("temperature").get<int>() == 0);
        REQUIRE(last_request.at("messages").size() == 2);
        CHECK(last_request.at("messages").at(0).at("role").get<std::string>() == "system");
        CHECK(last_request.at("messages").at(1).at("role").get<std::string>() == "user");
        CHECK(last_auth == "Bearer sekret");
    }

    SUBCASE("embedding backend parses the data[0].embedding shape") {
        HttpEmbedBackend eb(bc);
        auto v = eb.embed("some insight text");
        CHECK(v == std::vector<double>{0.5, -0.5, 0.25});
    }

    SUBCASE("a missing auth variable is a configuration error") {
        BackendConfig bad = bc;
        bad.auth_env = "AIR_TEST_TOKEN_UNSET";
        unsetenv("AIR_TEST_TOKEN_UNSET");
        CHECK_THROWS_AS(HttpChatBackend{bad}, ConfigError);
    }

    server.stop();
    server_thread.join();
}

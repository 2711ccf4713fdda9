#include "air/refinery.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "air/backtest.hpp"  // fnv1a64
#include "air/parallel.hpp"

namespace air {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string flatten_ws(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!in_space && !out.empty()) out.push_back(' ');
            in_space = true;
        } else {
            out.push_back(c);
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

void backoff_sleep(int attempt, int base_ms) {
    if (base_ms <= 0) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(base_ms << attempt));
}

std::string line_value(const std::string& text, const std::string& prefix) {
    size_t pos = text.find(prefix);
    if (pos == std::string::npos) return "";
    pos += prefix.size();
    const size_t end = text.find('\n', pos);
    return trim(text.substr(pos, end == std::string::npos ? std::string::npos : end - pos));
}

}  // namespace

std::vector<NewsArticle> load_articles_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<NewsArticle> out;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": invalid JSON object");
        NewsArticle a;
        a.id = j.at("id").get<std::string>();
        a.datetime = j.at("datetime").get<std::string>();
        a.headline = j.value("headline", "");
        a.body = j.value("body", "");
        if (a.datetime.size() < 10)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": unparseable datetime '" +
                            a.datetime + "'");
        a.date = Date::parse(a.datetime.substr(0, 10));
        if (!seen.insert(a.id).second)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": duplicate article id '" +
                            a.id + "'");
        out.push_back(std::move(a));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prompts

std::string stage1_system_prompt() {
    return "You are a financial analyst assistant. You summarize news articles and filter out "
           "those that are irrelevant to a given market domain.";
}

std::string stage1_user_prompt(const RefineryConfig& cfg, const NewsArticle& article) {
    std::ostringstream os;
    os << "Subject: " << cfg.subject << '\n'
       << "Domain description: " << cfg.description << '\n'
       << "Article datetime: " << article.datetime << '\n'
       << "Headline: " << article.headline << '\n'
       << "Body:\n"
       << article.body << '\n'
       << "---\n"
       << "Summarize this article in one concise paragraph, keeping only information that is "
          "useful for forecasting the subject above. If the article is not related to the "
       << cfg.description << ", respond with exactly: N/A";
    return os.str();
}

std::string stage2_system_prompt() {
    return "You are a financial analyst assistant. You identify the most impactful market events "
           "of a single day from news summaries.";
}

std::string stage2_user_prompt(const RefineryConfig& cfg, Date date,
                               const std::vector<const ArticleSummary*>& summaries) {
    std::ostringstream os;
    os << "Subject: " << cfg.subject << '\n'
       << "Date: " << date.str() << '\n'
       << "News summaries for this date:\n";
    for (const ArticleSummary* s : summaries) os << "- " << flatten_ws(s->summary) << '\n';
    os << "---\n"
       << "Identify up to " << cfg.events_per_day
       << " representative events of this date for the subject. Respond with only a JSON list; "
          "each element must be an object with non-empty string fields \"name\", \"summary\", and "
          "\"rationale\" (why the event matters for the subject).";
    return os.str();
}

std::string stage3_system_prompt() {
    return "You are a financial analyst assistant. You distill multi-day event logs into "
           "forecasting insights.";
}

std::string stage3_user_prompt(const RefineryConfig& cfg, const std::string& target,
                               const std::vector<const DailyEvent*>& window_events) {
    std::ostringstream os;
    os << "Target: " << target << '\n'
       << "Events from the past " << cfg.window_days << " days:\n";
    for (const DailyEvent* e : window_events)
        os << '[' << e->date.str() << "] " << e->name << ": " << flatten_ws(e->summary)
           << " (rationale: " << flatten_ws(e->rationale) << ")\n";
    os << "---\n"
       << "Based only on these events, respond with a JSON object with two non-empty string "
          "fields: \"key_driver\" (an analysis of the observed changes in the target and their "
          "underlying causes) and \"outlook\" (a prediction of the target's movement over the "
          "coming weeks).";
    return os.str();
}

// ---------------------------------------------------------------------------
// HTTP backends

namespace {

std::string resolve_token(const BackendConfig& cfg) {
    if (cfg.auth_env.empty()) return "";
    const char* v = std::getenv(cfg.auth_env.c_str());
    if (!v || !*v)
        throw ConfigError("environment variable " + cfg.auth_env +
                          " is not set (required for the HTTP backend)");
    return v;
}

httplib::Headers auth_headers(const std::string& token) {
    httplib::Headers h;
    if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
    return h;
}

nlohmann::json post_json(const BackendConfig& cfg, const std::string& token, const std::string& path,
                         const nlohmann::json& body) {
    httplib::Client cli(cfg.base_url);
    cli.set_connection_timeout(std::chrono::duration<double>(cfg.timeout_s));
    cli.set_read_timeout(std::chrono::duration<double>(cfg.timeout_s));
    auto res = cli.Post(path, auth_headers(token), body.dump(), "application/json");
    if (!res) throw BackendError("no response from " + cfg.base_url + path);
    if (res->status != 200)
        throw BackendError("HTTP " + std::to_string(res->status) + " from " + path + ": " + res->body);
    nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded()) throw BackendError("invalid JSON from " + path);
    return j;
}

}  // namespace

HttpChatBackend::HttpChatBackend(BackendConfig cfg) : cfg_(std::move(cfg)), token_(resolve_token(cfg_)) {}

std::string HttpChatBackend::complete(const std::string& system_msg, const std::string& user_msg) {
    nlohmann::json body{{"model", cfg_.chat_model},
                        {"messages",
                         {{{"role", "system"}, {"content", system_msg}},
                          {{"role", "user"}, {"content", user_msg}}}},
                        {"temperature", 0}};
    nlohmann::json j = post_json(cfg_, token_, cfg_.chat_path, body);
    try {
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("chat response missing choices[0].message.content: ") + e.what());
    }
}

HttpEmbedBackend::HttpEmbedBackend(BackendConfig cfg) : cfg_(std::move(cfg)), token_(resolve_token(cfg_)) {}

std::vector<double> HttpEmbedBackend::embed(const std::string& text) {
    nlohmann::json body{{"model", cfg_.embed_model}, {"input", text}};
    nlohmann::json j = post_json(cfg_, token_, cfg_.embed_path, body);
    try {
        if (j.contains("data")) return j.at("data").at(0).at("embedding").get<std::vector<double>>();
        return j.at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("embedding response missing vector: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Deterministic mocks

std::string MockChatBackend::complete(const std::string& /*system_msg*/, const std::string& user_msg) {
    if (user_msg.find("\nHeadline: ") != std::string::npos) {
        const std::string subject = lower(line_value(user_msg, "Subject: "));
        const size_t body_pos = user_msg.find("Body:\n");
        const size_t body_end = user_msg.find("\n---", body_pos);
        const std::string body =
            body_pos == std::string::npos
                ? ""
                : user_msg.substr(body_pos + 6, body_end == std::string::npos ? std::string::npos
                                                                              : body_end - body_pos - 6);
        const std::string headline = line_value(user_msg, "Headline: ");
        if (lower(headline + " " + body).find(subject) == std::string::npos) return "N/A";
        std::string snippet = flatten_ws(body).substr(0, 120);
        return "Summary for " + subject + ": " + snippet;
    }

    if (user_msg.find("News summaries for this date:") != std::string::npos) {
        const std::string date = line_value(user_msg, "Date: ");
        const std::string subject = line_value(user_msg, "Subject: ");
        int cap = 5;
        if (const std::string n = line_value(user_msg, "Identify up to "); !n.empty())
            cap = std::max(1, std::atoi(n.c_str()));
        nlohmann::json events = nlohmann::json::array();
        std::istringstream lines(user_msg);
        std::string line;
        int i = 0;
        while (std::getline(lines, line) && static_cast<int>(events.size()) < cap) {
            if (line.rfind("- ", 0) != 0) continue;
            ++i;
            events.push_back({{"name", date + " event " + std::to_string(i)},
                              {"summary", trim(line.substr(2))},
                              {"rationale", "Coverage concerning " + subject + " on " + date + "."}});
        }
        return events.dump();
    }

    if (user_msg.find("Events from the past") != std::string::npos) {
        const std::string target = line_value(user_msg, "Target: ");
        std::vector<std::string> names;
        std::istringstream lines(user_msg);
        std::string line;
        while (std::getline(lines, line)) {
            if (line.empty() || line[0] != '[') continue;
            const size_t close = line.find("] ");
            const size_t colon = line.find(": ", close);
            if (close == std::string::npos || colon == std::string::npos) continue;
            names.push_back(line.substr(close + 2, colon - close - 2));
        }
        std::string joined;
        for (size_t i = 0; i < names.size(); ++i) {
            if (i) joined += "; ";
            joined += names[i];
        }
        nlohmann::json out{{"key_driver", "Drivers for " + target + ": " + joined},
                           {"outlook", "Outlook for " + target + ": movement consistent with " +
                                           (names.empty() ? std::string("recent conditions") : names.back()) +
                                           "."}};
        return out.dump();
    }

    throw BackendError("mock backend: unrecognized prompt");
}

std::vector<double> HashEmbedBackend::embed(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : lower(text)) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    if (tokens.empty()) tokens.push_back(trim(text));

    std::vector<double> acc(static_cast<size_t>(dim_), 0.0);
    for (const std::string& tok : tokens) {
        Rng rng(fnv1a64(tok.data(), tok.size()) ^ seed_);
        for (int j = 0; j < dim_; ++j) acc[static_cast<size_t>(j)] += rng.normal(0.0, 1.0);
    }
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0)
        for (double& v : acc) v /= norm;
    return acc;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

// Lenient JSON extraction: models often wrap payloads in fences or prose.
std::optional<nlohmann::json> extract_json(const std::string& text, char open, char close) {
    const size_t a = text.find(open);
    const size_t b = text.rfind(close);
    if (a == std::string::npos || b == std::string::npos || b < a) return std::nullopt;
    nlohmann::json j = nlohmann::json::parse(text.substr(a, b - a + 1), nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
}

std::optional<std::vector<DailyEvent>> parse_events_response(const std::string& text, Date date,
                                                             int cap) {
    auto j = extract_json(text, '[', ']');
    if (!j || !j->is_array()) return std::nullopt;
    std::vector<DailyEvent> events;
    for (const auto& item : *j) {
        if (!item.is_object()) return std::nullopt;
        DailyEvent e;
        e.date = date;
        e.name = item.value("name", "");
        e.summary = item.value("summary", "");
        e.rationale = item.value("rationale", "");
        if (e.name.empty() || e.summary.empty() || e.rationale.empty()) return std::nullopt;
        events.push_back(std::move(e));
        if (static_cast<int>(events.size()) == cap) break;
    }
    return events;
}

std::optional<std::pair<std::string, std::string>> parse_insight_response(const std::string& text) {
    auto j = extract_json(text, '{', '}');
    if (!j || !j->is_object()) return std::nullopt;
    const std::string kd = j->value("key_driver", "");
    const std::string ol = j->value("outlook", "");
    if (kd.empty() || ol.empty()) return std::nullopt;
    return std::make_pair(kd, ol);
}

const char* kFormatReminderEvents =
    "\n\nReminder: respond with only a JSON list of objects, each with non-empty string fields "
    "\"name\", \"summary\", and \"rationale\".";
const char* kFormatReminderInsight =
    "\n\nReminder: respond with only a JSON object with non-empty string fields \"key_driver\" "
    "and \"outlook\".";

}  // namespace

Stage1Out stage1_summarize_filter(const std::vector<NewsArticle>& articles,
                                  const RefineryConfig& cfg, ChatBackend& backend) {
    {
        std::set<std::string> ids;
        for (const auto& a : articles)
            if (!ids.insert(a.id).second) throw DataError("duplicate article id '" + a.id + "'");
    }
    std::vector<const NewsArticle*> order;
    order.reserve(articles.size());
    for (const auto& a : articles) order.push_back(&a);
    std::sort(order.begin(), order.end(), [](const NewsArticle* a, const NewsArticle* b) {
        if (a->date != b->date) return a->date < b->date;
        return a->id < b->id;
    });

    std::vector<std::optional<ArticleSummary>> slots(order.size());
    std::vector<std::optional<ItemError>> errors(order.size());
    const std::string system = stage1_system_prompt();
    parallel_for_n(order.size(), cfg.max_in_flight, [&](size_t i) {
        const NewsArticle& a = *order[i];
        const std::string user = stage1_user_prompt(cfg, a);
        for (int attempt = 0; attempt < kMaxAttemptsPerItem; ++attempt) {
            try {
                const std::string text = trim(backend.complete(system, user));
                ArticleSummary s;
                s.id = a.id;
                s.date = a.date;
                s.relevant = text != "N/A";
                s.summary = s.relevant ? text : "";
                slots[i] = std::move(s);
                return;
            } catch (const BackendError& e) {
                if (attempt + 1 == kMaxAttemptsPerItem) {
                    errors[i] = ItemError{"summarize", a.id, e.what()};
                    return;
                }
                backoff_sleep(attempt, cfg.retry_backoff_ms);
            }
        }
    });

    Stage1Out out;
    for (size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) out.summaries.push_back(std::move(*slots[i]));
        if (errors[i]) out.errors.push_back(std::move(*errors[i]));
    }
    return out;
}

Stage2Out stage2_extract_events(const std::vector<ArticleSummary>& summaries,
                                const RefineryConfig& cfg, ChatBackend& backend) {
    std::map<Date, std::vector<const ArticleSummary*>> by_date;
    for (const auto& s : summaries)
        if (s.relevant) by_date[s.date].push_back(&s);
    for (auto& [date, list] : by_date)
        std::sort(list.begin(), list.end(),
                  [](const ArticleSummary* a, const ArticleSummary* b) { return a->id < b->id; });

    std::vector<Date> dates;
    for (const auto& [date, list] : by_date) dates.push_back(date);

    std::vector<std::optional<std::vector<DailyEvent>>> slots(dates.size());
    std::vector<std::optional<ItemError>> errors(dates.size());
    const std::string system = stage2_system_prompt();
    parallel_for_n(dates.size(), cfg.max_in_flight, [&](size_t i) {
        const Date date = dates[i];
        const std::string base_user = stage2_user_prompt(cfg, date, by_date.at(date));
        std::string user = base_user;
        for (int attempt = 0; attempt < kMaxAttemptsPerItem; ++attempt) {
            try {
                const std::string text = backend.complete(system, user);
                if (auto events = parse_events_response(text, date, cfg.events_per_day)) {
                    slots[i] = std::move(*events);
                    return;
                }
                if (attempt + 1 == kMaxAttemptsPerItem) {
                    errors[i] = ItemError{"events", date.str(), "malformed response after re-asks"};
                    return;
                }
                user = base_user + kFormatReminderEvents;
            } catch (const BackendError& e) {
                if (attempt + 1 == kMaxAttemptsPerItem) {
                    errors[i] = ItemError{"events", date.str(), e.what()};
                    return;
                }
                backoff_sleep(attempt, cfg.retry_backoff_ms);
            }
        }
    });

    Stage2Out out;
    out.dates_attempted = static_cast<int>(dates.size());
    for (size_t i = 0; i < slots.size(); ++i) {
        if (slots[i])
            for (auto& e : *slots[i]) out.events.push_back(std::move(e));
        if (errors[i]) out.errors.push_back(std::move(*errors[i]));
    }
    return out;
}

Stage3Out stage3_generate_insights(const std::vector<DailyEvent>& events,
                                   const std::vector<Date>& dates, const RefineryConfig& cfg,
                                   ChatBackend& backend) {
    if (cfg.targets.empty()) throw ConfigError("refinery: no targets configured");
    std::vector<Date> sorted_dates = dates;
    std::sort(sorted_dates.begin(), sorted_dates.end());
    sorted_dates.erase(std::unique(sorted_dates.begin(), sorted_dates.end()), sorted_dates.end());

    struct Pair {
        Date date;
        const std::string* target;
    };
    std::vector<Pair> pairs;
    for (Date d : sorted_dates)
        for (const std::string& t : cfg.targets) pairs.push_back({d, &t});

    std::vector<std::optional<InsightDoc>> slots(pairs.size());
    std::vector<std::optional<ItemError>> errors(pairs.size());
    const std::string system = stage3_system_prompt();
    int attempted = 0;

    parallel_for_n(pairs.size(), cfg.max_in_flight, [&](size_t i) {
        const Date d = pairs[i].date;
        const std::string& target = *pairs[i].target;
        std::vector<const DailyEvent*> window;
        for (const auto& e : events)
            if (e.date.serial() > d.serial() - cfg.window_days && e.date <= d) window.push_back(&e);
        if (window.empty()) {
            InsightDoc doc;
            doc.date = d;
            doc.target = target;
            doc.empty_window = true;
            slots[i] = std::move(doc);
            return;
        }
        const std::string base_user = stage3_user_prompt(cfg, target, window);
        std::string user = base_user;
        for (int attempt = 0; attempt < kMaxAttemptsPerItem; ++attempt) {
            try {
                const std::string text = backend.complete(system, user);
                if (auto parsed = parse_insight_response(text)) {
                    InsightDoc doc;
                    doc.date = d;
                    doc.target = target;
                    doc.key_driver = parsed->first;
                    doc.outlook = parsed->second;
                    slots[i] = std::move(doc);
                    return;
                }
                if (attempt + 1 == kMaxAttemptsPerItem) {
                    errors[i] = ItemError{"insights", d.str() + "/" + target, "malformed response after re-asks"};
                    return;
                }
                user = base_user + kFormatReminderInsight;
            } catch (const BackendError& e) {
                if (attempt + 1 == kMaxAttemptsPerItem) {
                    errors[i] = ItemError{"insights", d.str() + "/" + target, e.what()};
                    return;
                }
                backoff_sleep(attempt, cfg.retry_backoff_ms);
            }
        }
    });

    Stage3Out out;
    for (size_t i = 0; i < pairs.size(); ++i) {
        if (slots[i]) {
            if (!slots[i]->empty_window) ++attempted;
            out.insights.push_back(std::move(*slots[i]));
        }
        if (errors[i]) {
            ++attempted;
            out.errors.push_back(std::move(*errors[i]));
        }
    }
    out.pairs_attempted = attempted;
    return out;
}

std::vector<double> embed_text(const std::string& text, EmbedBackend& backend,
                               const RefineryConfig& cfg) {
    if (trim(text).empty()) throw ContractError("embed_text: empty text");
    for (int attempt = 0;; ++attempt) {
        try {
            return backend.embed(text);
        } catch (const BackendError&) {
            if (attempt + 1 == kMaxAttemptsPerItem) throw;
            backoff_sleep(attempt, cfg.retry_backoff_ms);
        }
    }
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& j : records) out << j.dump() << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

PipelineResult run_pipeline(const std::vector<NewsArticle>& corpus, const RefineryConfig& cfg,
                            ChatBackend& chat, EmbedBackend& embed,
                            const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);

    PipelineResult result;
    result.articles = static_cast<int>(corpus.size());

    // stage 1: per-article summary + relevance filter
    Stage1Out s1 = stage1_summarize_filter(corpus, cfg, chat);
    {
        std::vector<nlohmann::json> records;
        for (const auto& s : s1.summaries) {
            records.push_back({{"date", s.date.str()},
                               {"id", s.id},
                               {"relevant", s.relevant},
                               {"summary", s.summary}});
            result.relevant_summaries += s.relevant ? 1 : 0;
        }
        write_jsonl(out_dir / "summaries.jsonl", records);
        result.files.push_back(out_dir / "summaries.jsonl");
    }

    // stage 2: daily event extraction
    Stage2Out s2 = stage2_extract_events(s1.summaries, cfg, chat);
    {
        std::vector<nlohmann::json> records;
        for (const auto& e : s2.events)
            records.push_back({{"date", e.date.str()},
                               {"name", e.name},
                               {"rationale", e.rationale},
                               {"summary", e.summary}});
        write_jsonl(out_dir / "events.jsonl", records);
        result.files.push_back(out_dir / "events.jsonl");
        result.events = static_cast<int>(s2.events.size());
        result.event_dates = s2.dates_attempted;
    }

    // stage 3: window-wise key-driver/outlook generation over article dates
    std::vector<Date> dates;
    for (const auto& a : corpus) dates.push_back(a.date);
    Stage3Out s3 = stage3_generate_insights(s2.events, dates, cfg, chat);
    {
        std::vector<nlohmann::json> records;
        for (const auto& doc : s3.insights)
            records.push_back({{"date", doc.date.str()},
                               {"empty_window", doc.empty_window},
                               {"key_driver", doc.key_driver},
                               {"outlook", doc.outlook},
                               {"target", doc.target}});
        write_jsonl(out_dir / "insights.jsonl", records);
        result.files.push_back(out_dir / "insights.jsonl");
        result.insights = static_cast<int>(s3.insights.size());
    }

    // per-date documents: join the per-target texts in configured order
    std::map<Date, std::string> kd_docs, ol_docs;
    for (const auto& doc : s3.insights) {
        if (doc.empty_window) continue;
        if (!doc.key_driver.empty()) {
            auto& d = kd_docs[doc.date];
            if (!d.empty()) d += "\n";
            d += doc.target + ": " + doc.key_driver;
        }
        if (!doc.outlook.empty()) {
            auto& d = ol_docs[doc.date];
            if (!d.empty()) d += "\n";
            d += doc.target + ": " + doc.outlook;
        }
    }

    EmbeddingSeries kd_series, ol_series;
    kd_series.tag = "key_driver";
    ol_series.tag = "outlook";
    kd_series.dim = ol_series.dim = embed.dim();
    std::vector<ItemError> embed_errors;
    int embed_attempted = 0;
    for (auto* pack : {&kd_docs, &ol_docs}) {
        EmbeddingSeries& series = pack == &kd_docs ? kd_series : ol_series;
        const std::string stream = pack == &kd_docs ? "key_driver" : "outlook";
        std::vector<std::pair<Date, const std::string*>> items;
        for (const auto& [date, text] : *pack) items.emplace_back(date, &text);
        std::vector<std::optional<std::vector<double>>> slots(items.size());
        std::vector<std::optional<ItemError>> errs(items.size());
        parallel_for_n(items.size(), cfg.max_in_flight, [&](size_t i) {
            try {
                slots[i] = embed_text(*items[i].second, embed, cfg);
            } catch (const std::exception& e) {
                errs[i] = ItemError{"embed", stream + "/" + items[i].first.str(), e.what()};
            }
        });
        for (size_t i = 0; i < items.size(); ++i) {
            ++embed_attempted;
            if (slots[i]) series.by_date.emplace(items[i].first, std::move(*slots[i]));
            if (errs[i]) embed_errors.push_back(std::move(*errs[i]));
        }
    }
    write_embeddings_jsonl(kd_series, out_dir / "keydriver_emb.jsonl");
    write_embeddings_jsonl(ol_series, out_dir / "outlook_emb.jsonl");
    result.files.push_back(out_dir / "keydriver_emb.jsonl");
    result.files.push_back(out_dir / "outlook_emb.jsonl");
    result.embedded_dates = static_cast<int>(kd_series.by_date.size());

    for (auto* errs : {&s1.errors, &s2.errors, &s3.errors, &embed_errors})
        for (auto& e : *errs) result.errors.push_back(std::move(e));
    std::sort(result.errors.begin(), result.errors.end(), [](const ItemError& a, const ItemError& b) {
        if (a.stage != b.stage) return a.stage < b.stage;
        return a.item < b.item;
    });
    if (!result.errors.empty()) {
        std::vector<nlohmann::json> records;
        for (const auto& e : result.errors)
            records.push_back({{"error", e.error}, {"item", e.item}, {"stage", e.stage}});
        write_jsonl(out_dir / "errors.jsonl", records);
        result.files.push_back(out_dir / "errors.jsonl");
    }

    auto over_half = [](size_t failed, size_t total) { return total > 0 && failed * 2 > total; };
    size_t s1_failed = s1.errors.size();
    size_t s2_failed = s2.errors.size();
    size_t s3_failed = s3.errors.size();
    result.failed_threshold = over_half(s1_failed, corpus.size()) ||
                              over_half(s2_failed, static_cast<size_t>(s2.dates_attempted)) ||
                              over_half(s3_failed, static_cast<size_t>(s3.pairs_attempted)) ||
                              over_half(embed_errors.size(), static_cast<size_t>(embed_attempted));
    return result;
}

}  // namespace air

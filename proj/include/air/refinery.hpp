#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "air/dataplane.hpp"
#include "air/dates.hpp"

namespace air {

struct NewsArticle {
    std::string id;
    std::string datetime;  // "YYYY-MM-DD HH:MM:SS" or ISO-8601
    Date date;
    std::string headline;
    std::string body;
};

// JSONL of {"id","datetime","headline","body"}; ids must be unique.
std::vector<NewsArticle> load_articles_jsonl(const std::filesystem::path& path);

struct ArticleSummary {
    std::string id;
    Date date;
    std::string summary;
    bool relevant = false;  // false when the backend answered with the N/A sentinel
};

struct DailyEvent {
    Date date;
    std::string name;
    std::string summary;
    std::string rationale;
};

struct InsightDoc {
    Date date;
    std::string target;
    std::string key_driver;
    std::string outlook;
    bool empty_window = false;  // no events fell inside the window
};

struct ItemError {
    std::string stage;  // summarize | events | insights | embed
    std::string item;
    std::string error;
};

// Chat completion at temperature 0. Implementations must be safe to call
// from multiple threads.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string complete(const std::string& system_msg, const std::string& user_msg) = 0;
};

class EmbedBackend {
public:
    virtual ~EmbedBackend() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
    virtual int dim() const = 0;
};

struct BackendConfig {
    std::string base_url = "http://127.0.0.1:8089";
    std::string chat_model = "chat-default";
    std::string embed_model = "embed-default";
    std::string chat_path = "/v1/chat/completions";
    std::string embed_path = "/v1/embeddings";
    std::string auth_env = "AIR_LLM_API_KEY";  // empty string disables auth
    double timeout_s = 30.0;
    int embed_dim = 4096;
};

// POST {model, messages, temperature:0}; answer text from the first choice.
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(BackendConfig cfg);
    std::string complete(const std::string& system_msg, const std::string& user_msg) override;

private:
    BackendConfig cfg_;
    std::string token_;
};

// POST {model, input}; vector from data[0].embedding (or a top-level
// "embedding" field).
class HttpEmbedBackend : public EmbedBackend {
public:
    explicit HttpEmbedBackend(BackendConfig cfg);
    std::vector<double> embed(const std::string& text) override;
    int dim() const override { return cfg_.embed_dim; }

private:
    BackendConfig cfg_;
    std::string token_;
};

// Deterministic rule-based stand-in: relevance by subject keyword, one event
// per summary line, insights that echo the event names.
class MockChatBackend : public ChatBackend {
public:
    std::string complete(const std::string& system_msg, const std::string& user_msg) override;
};

// Token-hash bag-of-words projected through a seeded Gaussian map and
// unit-normalized; deterministic and similarity-preserving for shared tokens.
class HashEmbedBackend : public EmbedBackend {
public:
    HashEmbedBackend(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
    std::vector<double> embed(const std::string& text) override;
    int dim() const override { return dim_; }

private:
    int dim_;
    std::uint64_t seed_;
};

struct RefineryConfig {
    std::string subject = "exchange rate";
    std::string description = "foreign exchange market";
    std::vector<std::string> targets;  // e.g. "United States of America Dollar Index"
    int events_per_day = 5;
    int window_days = 20;  // events dated in [d-window+1, d] feed day d's insights
    int max_in_flight = 4;
    int retry_backoff_ms = 100;
};

// Prompt builders (placeholders filled: SUBJECT, DESCRIPTION, DATETIME, N,
// TARGET). Exposed so the deterministic mock and the tests share one format.
std::string stage1_system_prompt();
std::string stage1_user_prompt(const RefineryConfig& cfg, const NewsArticle& article);
std::string stage2_system_prompt();
std::string stage2_user_prompt(const RefineryConfig& cfg, Date date,
                               const std::vector<const ArticleSummary*>& summaries);
std::string stage3_system_prompt();
std::string stage3_user_prompt(const RefineryConfig& cfg, const std::string& target,
                               const std::vector<const DailyEvent*>& window_events);

inline constexpr int kMaxAttemptsPerItem = 4;  // 1 call + up to 3 retries/re-asks

struct Stage1Out {
    std::vector<ArticleSummary> summaries;  // sorted by (date, id); includes irrelevant ones
    std::vector<ItemError> errors;
};
Stage1Out stage1_summarize_filter(const std::vector<NewsArticle>& articles,
                                  const RefineryConfig& cfg, ChatBackend& backend);

struct Stage2Out {
    std::vector<DailyEvent> events;  // sorted by date, response order within a date
    std::vector<ItemError> errors;
    int dates_attempted = 0;
};
Stage2Out stage2_extract_events(const std::vector<ArticleSummary>& summaries,
                                const RefineryConfig& cfg, ChatBackend& backend);

struct Stage3Out {
    std::vector<InsightDoc> insights;  // sorted by (date, configured target order)
    std::vector<ItemError> errors;
    int pairs_attempted = 0;
};
Stage3Out stage3_generate_insights(const std::vector<DailyEvent>& events,
                                   const std::vector<Date>& dates, const RefineryConfig& cfg,
                                   ChatBackend& backend);

// Retrying wrapper around EmbedBackend::embed.
std::vector<double> embed_text(const std::string& text, EmbedBackend& backend,
                               const RefineryConfig& cfg);

struct PipelineResult {
    int articles = 0;
    int relevant_summaries = 0;
    int event_dates = 0;
    int events = 0;
    int insights = 0;
    int embedded_dates = 0;
    std::vector<ItemError> errors;
    bool failed_threshold = false;  // >50% of items failed in some stage
    std::vector<std::filesystem::path> files;
};

// Runs the three stages plus embedding, writing summaries.jsonl,
// events.jsonl, insights.jsonl, keydriver_emb.jsonl, outlook_emb.jsonl (and
// errors.jsonl when anything failed) under out_dir.
PipelineResult run_pipeline(const std::vector<NewsArticle>& corpus, const RefineryConfig& cfg,
                            ChatBackend& chat, EmbedBackend& embed,
                            const std::filesystem::path& out_dir);

}  // namespace air

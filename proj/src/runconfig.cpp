#include "air/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <thread>

namespace air {

namespace {

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& section) {
    if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in config section '" + section + "'");
}

template <typename T>
void read_into(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_synth(const nlohmann::json& j, SyntheticSpec& spec) {
    reject_unknown_keys(j,
                        {"channels", "targets", "length", "regimes", "mean_dwell", "var_noise",
                         "embed_dim", "embed_noise", "leak", "horizon", "start", "seed"},
                        "dataset.synthetic");
    read_into(j, "channels", spec.channels);
    read_into(j, "targets", spec.targets);
    read_into(j, "length", spec.length);
    read_into(j, "regimes", spec.regimes);
    read_into(j, "mean_dwell", spec.mean_dwell);
    read_into(j, "var_noise", spec.var_noise);
    read_into(j, "embed_dim", spec.embed_dim);
    read_into(j, "embed_noise", spec.embed_noise);
    read_into(j, "horizon", spec.horizon);
    read_into(j, "seed", spec.seed);
    if (j.contains("leak")) {
        const std::string leak = j.at("leak").get<std::string>();
        if (leak == "oracle") spec.leak = LeakMode::Oracle;
        else if (leak == "none") spec.leak = LeakMode::None;
        else throw ConfigError("dataset.synthetic.leak must be 'oracle' or 'none', got '" + leak + "'");
    }
    if (j.contains("start")) spec.start = Date::parse(j.at("start").get<std::string>());
}

void parse_model(const nlohmann::json& j, ModelConfig& m) {
    reject_unknown_keys(j,
                        {"lookback", "horizon", "latent", "codebook", "blocks", "d_model",
                         "ffn_hidden", "tcn_hidden", "tcn_kernel", "tcn_dilations", "desc_proj",
                         "gen_hidden", "air_on_features", "air_on_predictor", "vq_enabled"},
                        "model");
    read_into(j, "lookback", m.lookback);
    read_into(j, "horizon", m.horizon);
    read_into(j, "latent", m.latent);
    read_into(j, "codebook", m.codebook);
    read_into(j, "blocks", m.blocks);
    read_into(j, "d_model", m.d_model);
    read_into(j, "ffn_hidden", m.ffn_hidden);
    read_into(j, "tcn_hidden", m.tcn_hidden);
    read_into(j, "tcn_kernel", m.tcn_kernel);
    read_into(j, "tcn_dilations", m.tcn_dilations);
    read_into(j, "desc_proj", m.desc_proj);
    read_into(j, "gen_hidden", m.gen_hidden);
    read_into(j, "air_on_features", m.air_on_features);
    read_into(j, "air_on_predictor", m.air_on_predictor);
    read_into(j, "vq_enabled", m.vq_enabled);
}

void parse_train(const nlohmann::json& j, TrainConfig& t) {
    reject_unknown_keys(
        j, {"lr", "max_epochs", "batch_size", "seeds", "vq_weight", "patience", "min_delta"},
        "training");
    read_into(j, "lr", t.lr);
    read_into(j, "max_epochs", t.max_epochs);
    read_into(j, "batch_size", t.batch_size);
    read_into(j, "seeds", t.seeds);
    read_into(j, "vq_weight", t.vq_weight);
    read_into(j, "patience", t.patience);
    read_into(j, "min_delta", t.min_delta);
    t.validate();
}

void parse_backend(const nlohmann::json& j, BackendConfig& b) {
    reject_unknown_keys(j,
                        {"base_url", "chat_model", "embed_model", "chat_path", "embed_path",
                         "auth_env", "timeout_s", "embed_dim"},
                        "refinery.backend");
    read_into(j, "base_url", b.base_url);
    read_into(j, "chat_model", b.chat_model);
    read_into(j, "embed_model", b.embed_model);
    read_into(j, "chat_path", b.chat_path);
    read_into(j, "embed_path", b.embed_path);
    read_into(j, "auth_env", b.auth_env);
    read_into(j, "timeout_s", b.timeout_s);
    read_into(j, "embed_dim", b.embed_dim);
}

void parse_refinery(const nlohmann::json& j, RefineryConfig& r, BackendConfig& b) {
    reject_unknown_keys(j,
                        {"subject", "description", "targets", "events_per_day", "window_days",
                         "max_in_flight", "retry_backoff_ms", "backend"},
                        "refinery");
    read_into(j, "subject", r.subject);
    read_into(j, "description", r.description);
    read_into(j, "targets", r.targets);
    read_into(j, "events_per_day", r.events_per_day);
    read_into(j, "window_days", r.window_days);
    read_into(j, "max_in_flight", r.max_in_flight);
    read_into(j, "retry_backoff_ms", r.retry_backoff_ms);
    if (j.contains("backend")) parse_backend(j.at("backend"), b);
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig cfg;
    reject_unknown_keys(
        j, {"dataset", "model", "training", "backtest", "refinery", "output_dir", "workers"},
        "(top level)");

    if (!j.contains("dataset")) throw ConfigError("config is missing the 'dataset' section");
    const auto& ds = j.at("dataset");
    reject_unknown_keys(ds, {"synthetic", "real"}, "dataset");
    if (ds.contains("synthetic") == ds.contains("real"))
        throw ConfigError("dataset must have exactly one source: 'synthetic' or 'real'");
    if (ds.contains("synthetic")) {
        cfg.synthetic = true;
        parse_synth(ds.at("synthetic"), cfg.synth);
    } else {
        cfg.synthetic = false;
        const auto& r = ds.at("real");
        reject_unknown_keys(
            r, {"series_csv", "keydriver_jsonl", "outlook_jsonl", "descriptions_jsonl", "targets"},
            "dataset.real");
        cfg.real.series_csv = r.at("series_csv").get<std::string>();
        cfg.real.keydriver_jsonl = r.at("keydriver_jsonl").get<std::string>();
        cfg.real.outlook_jsonl = r.at("outlook_jsonl").get<std::string>();
        cfg.real.descriptions_jsonl = r.at("descriptions_jsonl").get<std::string>();
        cfg.real.target_names = r.at("targets").get<std::vector<std::string>>();
        if (cfg.real.target_names.empty())
            throw ConfigError("dataset.real.targets must name at least one channel");
    }

    if (j.contains("model")) parse_model(j.at("model"), cfg.model);
    if (j.contains("training")) parse_train(j.at("training"), cfg.train);

    if (j.contains("backtest")) {
        const auto& b = j.at("backtest");
        reject_unknown_keys(b, {"start", "years", "max_points", "models", "baseline"}, "backtest");
        if (b.contains("start")) cfg.start = parse_iso_week(b.at("start").get<std::string>());
        read_into(b, "years", cfg.years);
        read_into(b, "max_points", cfg.max_points);
        read_into(b, "models", cfg.models);
        read_into(b, "baseline", cfg.baseline);
        if (cfg.years < 1) throw ConfigError("backtest.years must be >= 1");
        if (cfg.models.empty()) throw ConfigError("backtest.models must name at least one model");
    }

    if (j.contains("refinery")) parse_refinery(j.at("refinery"), cfg.refinery, cfg.backend);
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    read_into(j, "workers", cfg.workers);
    if (cfg.workers < 0) throw ConfigError("workers must be >= 0");
    return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
    return from_json(j);
}

int RunConfig::effective_workers() const {
    if (workers > 0) return std::min(workers, 8);
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::min(8u, std::max(1u, hw)));
}

BacktestDataset load_dataset(const RunConfig& cfg) {
    BacktestDataset out;
    if (cfg.synthetic) {
        SyntheticData data = synth_generate(cfg.synth);
        out.frame = std::move(data.frame);
        out.key_driver = std::move(data.key_driver);
        out.outlook = std::move(data.outlook);
        out.descriptions = std::move(data.descriptions);
        for (int t = 0; t < cfg.synth.targets; ++t) out.targets.push_back(t);
        return out;
    }
    out.frame = linear_interpolate_missing(load_series_csv(cfg.real.series_csv));
    out.key_driver = read_embeddings_jsonl(cfg.real.keydriver_jsonl, "key_driver");
    out.outlook = read_embeddings_jsonl(cfg.real.outlook_jsonl, "outlook");
    out.descriptions = read_named_embeddings_jsonl(cfg.real.descriptions_jsonl);
    for (const std::string& name : cfg.real.target_names) {
        const int idx = out.frame.channel_index(name);
        if (idx < 0) throw ConfigError("target channel '" + name + "' not found in the series");
        out.targets.push_back(idx);
    }
    std::sort(out.targets.begin(), out.targets.end());
    return out;
}

}  // namespace air

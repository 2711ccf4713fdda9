// Command-line front end: synthetic data generation, the news-refinement
// pipeline, biweekly rolling backtests, forecast plots, and the gradient
// verification suite, all driven by one JSON run configuration.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "air/backtest.hpp"
#include "air/gradsuite.hpp"
#include "air/refinery.hpp"
#include "air/runconfig.hpp"

namespace fs = std::filesystem;
using namespace air;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitPipeline = 4;
constexpr int kExitTraining = 5;

int cmd_generate(const std::string& config_path, const std::string& out_override) {
    RunConfig cfg = RunConfig::from_file(config_path);
    if (!cfg.synthetic)
        throw ConfigError("generate requires a dataset.synthetic section in the config");
    const fs::path out_dir = out_override.empty() ? cfg.output_dir : fs::path(out_override);
    fs::create_directories(out_dir);

    SyntheticData data = synth_generate(cfg.synth);
    write_series_csv(data.frame, out_dir / "series.csv");
    write_embeddings_jsonl(data.key_driver, out_dir / "keydriver_emb.jsonl");
    write_embeddings_jsonl(data.outlook, out_dir / "outlook_emb.jsonl");
    write_named_embeddings_jsonl(data.descriptions, out_dir / "descriptions_emb.jsonl");

    for (const char* name :
         {"series.csv", "keydriver_emb.jsonl", "outlook_emb.jsonl", "descriptions_emb.jsonl"})
        std::cout << (out_dir / name).string() << "\n";
    return kExitOk;
}

int cmd_refine(const std::string& config_path, const std::string& corpus_path, bool mock,
               const std::string& out_override) {
    RunConfig cfg = RunConfig::from_file(config_path);
    if (cfg.refinery.targets.empty())
        throw ConfigError("refine requires refinery.targets in the config");
    const fs::path out_dir = out_override.empty() ? cfg.output_dir : fs::path(out_override);

    std::vector<NewsArticle> corpus;
    const fs::path cp(corpus_path);
    if (fs::is_directory(cp)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(cp))
            if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files)
            for (auto& a : load_articles_jsonl(f)) corpus.push_back(std::move(a));
    } else {
        corpus = load_articles_jsonl(cp);
    }

    std::unique_ptr<ChatBackend> chat;
    std::unique_ptr<EmbedBackend> embed;
    if (mock) {
        chat = std::make_unique<MockChatBackend>();
        embed = std::make_unique<HashEmbedBackend>(cfg.backend.embed_dim, 0);
    } else {
        chat = std::make_unique<HttpChatBackend>(cfg.backend);
        embed = std::make_unique<HttpEmbedBackend>(cfg.backend);
    }

    PipelineResult res = run_pipeline(corpus, cfg.refinery, *chat, *embed, out_dir);
    std::cout << "articles=" << res.articles << " relevant=" << res.relevant_summaries
              << " events=" << res.events << " insights=" << res.insights
              << " embedded_dates=" << res.embedded_dates << " errors=" << res.errors.size() << "\n";
    for (const auto& f : res.files) std::cout << f.string() << "\n";
    if (res.failed_threshold) {
        std::cerr << "error: more than half of the items failed in a pipeline stage\n";
        return kExitPipeline;
    }
    return kExitOk;
}

int cmd_backtest(const std::string& config_path, const std::string& models_csv,
                 const std::string& out_override) {
    RunConfig cfg = RunConfig::from_file(config_path);
    BacktestRequest req;
    req.data = load_dataset(cfg);
    req.base_config = cfg.model;
    req.train = cfg.train;
    req.start = cfg.start;
    req.years = cfg.years;
    req.max_points = cfg.max_points;
    req.baseline_id = cfg.baseline;
    req.workers = cfg.effective_workers();
    req.model_ids = cfg.models;
    if (!models_csv.empty()) {
        req.model_ids.clear();
        std::string cur;
        for (char c : models_csv + ",") {
            if (c == ',') {
                if (!cur.empty()) req.model_ids.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
    }
    static const char* kValidIds =
        "vanilla-tsmixer air-tsmixer timemmd-tsmixer vanilla-tcn air-tcn timemmd-tcn "
        "vanilla-itransformer air-itransformer timemmd-itransformer";
    for (const auto& id : req.model_ids) {
        try {
            (void)config_for_model_id(derive_base_config(req.data, req.base_config), id);
        } catch (const ConfigError& e) {
            throw ConfigError("invalid model id '" + id + "' (valid: " + kValidIds + "): " + e.what());
        }
    }

    MetricsReport report = run_backtest(req);
    const fs::path out_dir = out_override.empty() ? cfg.output_dir : fs::path(out_override);
    emit_report(report, out_dir);
    std::cout << (out_dir / "report.json").string() << "\n"
              << (out_dir / "summary.csv").string() << "\n";
    for (const auto& [model, overall] : report.per_model_overall) {
        std::cout << model << ": mse=" << overall;
        if (report.relative_vs_baseline_pct.count(model) && model != report.baseline_id)
            std::cout << " (" << report.relative_vs_baseline_pct.at(model) << "% vs " << report.baseline_id
                      << ")";
        std::cout << "\n";
    }
    bool any_failed = false;
    for (const auto& leaf : report.leaves)
        if (leaf.failed) {
            std::cerr << "failed: " << leaf.model << " point " << leaf.point_index << " seed "
                      << leaf.seed << ": " << leaf.error << "\n";
            any_failed = true;
        }
    return any_failed ? kExitTraining : kExitOk;
}

int cmd_plot(const std::string& report_path, const std::string& origin_str, const std::string& out_path,
             int target_index, const std::string& models_csv, const std::string& annotation) {
    std::ifstream in(report_path);
    if (!in) throw IoError("cannot open report " + report_path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("report is not valid JSON: " + report_path);

    const Date origin = Date::parse(origin_str);
    const nlohmann::json* entry = nullptr;
    for (const auto& e : j.at("forecasts"))
        if (e.at("origin").get<std::string>() == origin.str()) {
            entry = &e;
            break;
        }
    if (!entry) throw ConfigError("origin " + origin.str() + " not present in the report");

    const auto targets = j.at("targets").get<std::vector<std::string>>();
    if (target_index < 0 || target_index >= static_cast<int>(targets.size()))
        throw ConfigError("target index " + std::to_string(target_index) + " out of range");

    std::vector<std::string> wanted;
    if (!models_csv.empty()) {
        std::string cur;
        for (char c : models_csv + ",") {
            if (c == ',') {
                if (!cur.empty()) wanted.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
    }

    const auto lookback =
        entry->at("lookback").at(static_cast<size_t>(target_index)).get<std::vector<double>>();
    const auto truth = entry->at("truth").at(static_cast<size_t>(target_index)).get<std::vector<double>>();
    std::vector<std::pair<std::string, std::vector<double>>> forecasts;
    for (const auto& [model, rows] : entry->at("forecasts").items()) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), model) == wanted.end()) continue;
        forecasts.emplace_back(model, rows.at(static_cast<size_t>(target_index)).get<std::vector<double>>());
    }
    if (forecasts.empty()) throw ConfigError("no forecasts to plot for the requested models");

    std::string note = annotation;
    if (note.empty()) note = "target " + targets[static_cast<size_t>(target_index)] + ", origin " + origin.str();
    emit_forecast_svg(lookback, truth, forecasts, origin, note, out_path);
    std::cout << out_path << "\n";
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed) {
    bool all_pass = true;
    for (const GradCheckEntry& e : run_gradient_suite(seed)) {
        std::printf("%-28s max_rel_err=%.3e %s\n", e.name.c_str(), e.max_rel_err,
                    e.pass ? "PASS" : "FAIL");
        all_pass = all_pass && e.pass;
    }
    return all_pass ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Text-conditioned routing for multimodal time-series forecasting"};
    app.require_subcommand(1);

    std::string config_path, out_dir, corpus, models_csv;
    bool mock = false;

    auto* generate = app.add_subcommand("generate", "Write the synthetic benchmark dataset");
    generate->add_option("--config", config_path, "Run configuration JSON")->required();
    generate->add_option("--out", out_dir, "Output directory (default: config output_dir)");

    auto* refine = app.add_subcommand("refine", "Run the news refinement pipeline");
    refine->add_option("--config", config_path, "Run configuration JSON")->required();
    refine->add_option("--corpus", corpus, "Articles JSONL file or directory")->required();
    refine->add_flag("--mock", mock, "Use the deterministic offline backends");
    refine->add_option("--out", out_dir, "Output directory (default: config output_dir)");

    auto* backtest = app.add_subcommand("backtest", "Run the biweekly rolling-retrain experiment");
    backtest->add_option("--config", config_path, "Run configuration JSON")->required();
    backtest->add_option("--models", models_csv, "Comma-separated model ids (default from config)");
    backtest->add_option("--out", out_dir, "Output directory (default: config output_dir)");

    std::string report_path, origin_str, svg_out, annotation;
    int target_index = 0;
    auto* plot = app.add_subcommand("plot", "Render one forecast origin as SVG");
    plot->add_option("--report", report_path, "report.json from a backtest run")->required();
    plot->add_option("--origin", origin_str, "Forecast origin date YYYY-MM-DD")->required();
    plot->add_option("--out", svg_out, "Output SVG path")->required();
    plot->add_option("--target", target_index, "Target index (default 0)");
    plot->add_option("--models", models_csv, "Comma-separated model filter");
    plot->add_option("--annotation", annotation, "Annotation text block");

    std::uint64_t seed = 0;
    auto* gradcheck = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
    gradcheck->add_option("--seed", seed, "Instance seed (default 0)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (generate->parsed()) return cmd_generate(config_path, out_dir);
        if (refine->parsed()) return cmd_refine(config_path, corpus, mock, out_dir);
        if (backtest->parsed()) return cmd_backtest(config_path, models_csv, out_dir);
        if (plot->parsed()) return cmd_plot(report_path, origin_str, svg_out, target_index, models_csv, annotation);
        if (gradcheck->parsed()) return cmd_gradcheck(seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ContractError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const PipelineError& e) {
        std::cerr << "pipeline error: " << e.what() << "\n";
        return kExitPipeline;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return kExitTraining;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}

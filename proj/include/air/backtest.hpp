#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "air/dataplane.hpp"
#include "air/forecasters.hpp"

namespace air {

struct RetrainPoint {
    Date cutoff;                // Monday of the ISO week; training uses data strictly before it
    Date test_span_begin;       // cutoff
    Date test_span_end;         // cutoff + 28 (29 calendar days)
    std::vector<Date> origins;  // trading days among the 10 weekdays of the two test weeks
};

struct ScheduleWarning {
    Date cutoff;
    std::string message;
};

struct BacktestSchedule {
    std::vector<RetrainPoint> points;
    std::vector<ScheduleWarning> warnings;
};

// Retrain points every 2 ISO weeks for `years` * 26 points; per point the
// origins are the existing trading days among the 10 weekdays of weeks w and
// w+1, trimmed (with a warning) when lookback history or the horizon tail
// does not fit in the trading calendar.
BacktestSchedule build_biweekly_schedule(IsoWeek start, int years,
                                         const std::vector<Date>& trading_dates, int lookback,
                                         int horizon);

struct TrainConfig {
    double lr = 1e-4;
    int max_epochs = 40;
    int batch_size = 32;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    double vq_weight = 1.0;  // lambda on (codebook + 0.25*commitment)
    int patience = 5;
    double min_delta = 1e-6;

    void validate() const;
    nlohmann::json to_json() const;
};

struct TrainTrace {
    std::vector<double> train_loss;  // per epoch, mini-batch mean of the full objective
    std::vector<double> val_loss;    // per epoch, forecast MSE on the (identical) validation set
    int epochs = 0;
    bool early_stopped = false;
};

// Mini-batch Adam on MSE plus the weighted VQ auxiliary losses; validation
// set equals the training set; early-stops after `patience` epochs without a
// val improvement > min_delta.
TrainTrace run_training(ForecastModel& model, const std::vector<WindowSample>& samples,
                        const TrainConfig& cfg, std::uint64_t seed);

struct OriginEval {
    Date origin;
    double mse = 0.0;                // over targets x horizon
    std::vector<double> per_target;  // per-target MSE over the horizon
    Tensor forecast;                 // [targets, horizon] normalized
};

std::vector<OriginEval> evaluate_point(ForecastModel& model,
                                       const std::vector<WindowSample>& eval_samples);

struct LeafResult {
    std::string model;
    int point_index = 0;
    Date cutoff;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    std::vector<double> per_target;  // mean over origins
    double mse = 0.0;                // mean over targets
    int origins_evaluated = 0;
    int epochs = 0;
};

struct PlotEntry {
    Date origin;
    std::vector<std::vector<double>> lookback;                          // [targets][T]
    std::vector<std::vector<double>> truth;                             // [targets][H]
    std::map<std::string, std::vector<std::vector<double>>> forecasts;  // model -> [targets][H], seed mean
};

struct MetricsReport {
    std::string config_hash;
    std::string run_id;
    std::vector<std::string> models;        // request order
    std::vector<std::string> target_names;
    std::string baseline_id;
    BacktestSchedule schedule;
    std::vector<LeafResult> leaves;         // sorted by (model, point, seed)
    std::vector<WindowReject> skipped_origins;

    // aggregates: mean over seeds, then over retrain points
    std::map<std::string, std::vector<double>> per_model_target;
    std::map<std::string, double> per_model_overall;
    std::map<std::string, double> relative_vs_baseline_pct;

    std::vector<PlotEntry> plot_series;

    nlohmann::json to_json() const;
};

// Recomputes the aggregate section from the leaves. Throws on leaves with
// inconsistent target counts.
void aggregate(MetricsReport& report);

struct BacktestDataset {
    TimeSeriesFrame frame;  // complete (no missing cells), raw space
    EmbeddingSeries key_driver;
    EmbeddingSeries outlook;
    std::map<std::string, std::vector<double>> descriptions;
    std::vector<int> targets;  // channel indices
};

struct BacktestRequest {
    BacktestDataset data;
    ModelConfig base_config;             // widths/flags; arch+mode set per model id
    std::vector<std::string> model_ids;  // "<mode>-<arch>"
    TrainConfig train;
    IsoWeek start;
    int years = 3;
    int max_points = 0;       // 0 = the full years*26 schedule, else a prefix
    std::string baseline_id;  // empty = first vanilla model, else first model
    int workers = 1;
};

ModelConfig config_for_model_id(const ModelConfig& base, const std::string& model_id);

// Fills channels/targets/embedding dimensions from the dataset.
ModelConfig derive_base_config(const BacktestDataset& data, ModelConfig base);

struct TrainedPoint {
    ForecastModel model;
    ZScore scaler;
    TrainTrace trace;
};

// Trains one model at one retrain point; every consumed value (normalization
// statistics, training windows) comes from rows strictly before the cutoff.
TrainedPoint train_point(const BacktestDataset& data, const ModelConfig& base,
                         const std::string& model_id, Date cutoff, const TrainConfig& cfg,
                         std::uint64_t seed);

MetricsReport run_backtest(const BacktestRequest& req);

// report.json + summary.csv with stable ordering; byte-identical re-emission.
void emit_report(const MetricsReport& report, const std::filesystem::path& dir);

// Single-target forecast plot: lookback, truth horizon, one polyline per
// model, legend, and a text annotation block.
void emit_forecast_svg(const std::vector<double>& lookback_truth,
                       const std::vector<double>& horizon_truth,
                       const std::vector<std::pair<std::string, std::vector<double>>>& forecasts,
                       Date origin, const std::string& annotation,
                       const std::filesystem::path& out_path);

std::uint64_t fnv1a64(const void* data, size_t len, std::uint64_t seed = 1469598103934665603ull);
std::string hex64(std::uint64_t v);

}  // namespace air

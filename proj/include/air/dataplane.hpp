#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "air/dates.hpp"
#include "air/tensor.hpp"

namespace air {

// Calendar-indexed multivariate series. values[c][t] is channel c at date t;
// NaN marks a missing observation until interpolation fills it.
struct TimeSeriesFrame {
    std::vector<Date> dates;                  // strictly increasing
    std::vector<std::string> channels;
    std::vector<std::vector<double>> values;  // [channels][dates]

    int channel_count() const { return static_cast<int>(channels.size()); }
    int length() const { return static_cast<int>(dates.size()); }
    bool has_missing() const;
    int channel_index(const std::string& name) const;  // -1 if absent
    std::optional<int> date_index(Date d) const;
    void validate() const;  // throws DataError on broken invariants
};

TimeSeriesFrame load_series_csv(const std::filesystem::path& path);
void write_series_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path);

// Interior gaps become linear in index; leading/trailing gaps copy the
// nearest observed value. A channel with no observations is an error.
TimeSeriesFrame linear_interpolate_missing(const TimeSeriesFrame& frame);

// Expands a weekly-anchored frame onto the given daily dates. Anchor values
// are preserved exactly; between anchors the value is linear in day index;
// outside the anchor span the nearest anchor value extends.
TimeSeriesFrame weekly_to_daily(const TimeSeriesFrame& weekly, const std::vector<Date>& daily_dates);

// Per-channel normalization fitted on rows strictly before a cutoff date.
struct ZScore {
    std::vector<double> mean;
    std::vector<double> stddev;  // population std, floored at 1e-8

    static ZScore fit(const TimeSeriesFrame& frame, Date train_cutoff);
    TimeSeriesFrame apply(const TimeSeriesFrame& frame) const;
    TimeSeriesFrame invert(const TimeSeriesFrame& frame) const;
    double apply_one(int channel, double v) const;
    double invert_one(int channel, double v) const;
};

// Dated embedding stream (one vector per date).
struct EmbeddingSeries {
    std::map<Date, std::vector<double>> by_date;
    std::string tag;  // key_driver | outlook
    int dim = 0;

    bool has(Date d) const { return by_date.count(d) > 0; }
    const std::vector<double>& at(Date d) const;
};

// JSONL schema: {"date":"YYYY-MM-DD","vector":[...]} one object per line.
EmbeddingSeries read_embeddings_jsonl(const std::filesystem::path& path, const std::string& tag);
void write_embeddings_jsonl(const EmbeddingSeries& series, const std::filesystem::path& path);

// Same line format with a channel name in the date field.
std::map<std::string, std::vector<double>> read_named_embeddings_jsonl(const std::filesystem::path& path);
void write_named_embeddings_jsonl(const std::map<std::string, std::vector<double>>& vectors,
                                  const std::filesystem::path& path);

// Builds a [channels, dim] matrix in channel order; throws ConfigError naming
// the first channel without a description vector.
Tensor descriptions_matrix(const std::map<std::string, std::vector<double>>& descriptions,
                           const std::vector<std::string>& channels);

// One training/evaluation example. The origin is the first forecast day; the
// lookback covers the `lookback` trading days strictly before it.
struct WindowSample {
    Tensor x;                        // [channels, lookback], normalized
    Tensor y;                        // [targets, horizon], normalized
    std::vector<double> key_driver;  // embedding at origin date
    std::vector<double> outlook;     // embedding at origin date
    Tensor descriptions;             // [channels, desc_dim]
    Date origin;
};

struct WindowReject {
    Date origin;
    std::string reason;
};

struct WindowBatch {
    std::vector<WindowSample> samples;
    std::vector<WindowReject> rejected;
};

WindowBatch build_windows(const TimeSeriesFrame& frame, const EmbeddingSeries& key_driver,
                          const EmbeddingSeries& outlook, const Tensor& descriptions,
                          const std::vector<int>& target_channels, int lookback, int horizon,
                          const std::vector<Date>& origin_dates);

// Regime-switching synthetic benchmark. A semi-Markov path over R regimes
// (geometric dwell) drives per-regime stable VAR(1) dynamics; text embeddings
// reveal the current regime (key driver) and the majority regime over the
// next `horizon` steps (outlook) when leak is Oracle.
enum class LeakMode { Oracle, None };

struct SyntheticSpec {
    int channels = 8;
    int targets = 2;           // the first `targets` channels
    int length = 1200;         // trading days
    int regimes = 4;
    double mean_dwell = 40.0;  // expected regime duration in steps
    double var_noise = 0.1;    // VAR innovation stddev
    int embed_dim = 64;
    double embed_noise = 0.05;
    LeakMode leak = LeakMode::Oracle;
    int horizon = 20;          // outlook majority window
    Date start{2021, 1, 4};    // first trading day (a Monday)
    std::uint64_t seed = 0;
};

struct SyntheticData {
    TimeSeriesFrame frame;
    EmbeddingSeries key_driver;
    EmbeddingSeries outlook;
    std::map<std::string, std::vector<double>> descriptions;
    std::vector<int> regimes;                        // regime index per step
    std::vector<std::vector<double>> regime_matrix;  // [R][C*C] VAR transition, row-major
};

SyntheticData synth_generate(const SyntheticSpec& spec);

// Largest |eigenvalue| of a symmetric matrix (power iteration); test oracle
// companion for the synthetic VAR construction.
double symmetric_spectral_radius(const std::vector<double>& m, int n);

}  // namespace air

#include "air/dataplane.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace air {

namespace {

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

bool TimeSeriesFrame::has_missing() const {
    for (const auto& ch : values)
        for (double v : ch)
            if (std::isnan(v)) return true;
    return false;
}

int TimeSeriesFrame::channel_index(const std::string& name) const {
    for (size_t i = 0; i < channels.size(); ++i)
        if (channels[i] == name) return static_cast<int>(i);
    return -1;
}

std::optional<int> TimeSeriesFrame::date_index(Date d) const {
    auto it = std::lower_bound(dates.begin(), dates.end(), d);
    if (it == dates.end() || *it != d) return std::nullopt;
    return static_cast<int>(it - dates.begin());
}

void TimeSeriesFrame::validate() const {
    for (size_t i = 1; i < dates.size(); ++i)
        if (!(dates[i - 1] < dates[i]))
            throw DataError("dates not strictly increasing at row " + std::to_string(i + 1) +
                            " (" + dates[i].str() + ")");
    if (values.size() != channels.size())
        throw DataError("channel count mismatch between names and values");
    for (const auto& ch : values)
        if (ch.size() != dates.size()) throw DataError("channel length does not match date count");
}

TimeSeriesFrame load_series_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty csv file " + path.string());
    std::vector<std::string> header = split_csv_line(line);
    if (header.empty() || header[0] != "date")
        throw DataError("csv header must start with 'date' in " + path.string());

    TimeSeriesFrame frame;
    frame.channels.assign(header.begin() + 1, header.end());
    frame.values.resize(frame.channels.size());

    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
        auto date = Date::try_parse(cells[0]);
        if (!date)
            throw DataError("row " + std::to_string(row) + ", column 1: invalid date '" + cells[0] + "'");
        if (!frame.dates.empty() && !(frame.dates.back() < *date))
            throw DataError("row " + std::to_string(row) + ": date " + date->str() +
                            " not after previous date " + frame.dates.back().str());
        frame.dates.push_back(*date);
        for (size_t c = 0; c < frame.channels.size(); ++c) {
            const std::string& cell = cells[c + 1];
            if (cell.empty()) {
                frame.values[c].push_back(std::nan(""));
                continue;
            }
            try {
                size_t pos = 0;
                double v = std::stod(cell, &pos);
                if (pos != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
                frame.values[c].push_back(v);
            } catch (const std::exception&) {
                throw DataError("row " + std::to_string(row) + ", column " + std::to_string(c + 2) +
                                ": invalid number '" + cell + "'");
            }
        }
    }
    frame.validate();
    return frame;
}

void write_series_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "date";
    for (const auto& ch : frame.channels) out << ',' << ch;
    out << '\n';
    for (size_t t = 0; t < frame.dates.size(); ++t) {
        out << frame.dates[t].str();
        for (size_t c = 0; c < frame.channels.size(); ++c) {
            out << ',';
            const double v = frame.values[c][t];
            if (!std::isnan(v)) out << fmt17(v);
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

TimeSeriesFrame linear_interpolate_missing(const TimeSeriesFrame& frame) {
    TimeSeriesFrame out = frame;
    const int n = out.length();
    for (int c = 0; c < out.channel_count(); ++c) {
        auto& v = out.values[static_cast<size_t>(c)];
        int first_obs = -1, last_obs = -1;
        for (int t = 0; t < n; ++t)
            if (!std::isnan(v[static_cast<size_t>(t)])) {
                if (first_obs < 0) first_obs = t;
                last_obs = t;
            }
        if (first_obs < 0)
            throw DataError("channel '" + out.channels[static_cast<size_t>(c)] + "' has no observed values");
        for (int t = 0; t < first_obs; ++t) v[static_cast<size_t>(t)] = v[static_cast<size_t>(first_obs)];
        for (int t = last_obs + 1; t < n; ++t) v[static_cast<size_t>(t)] = v[static_cast<size_t>(last_obs)];
        int prev = first_obs;
        for (int t = first_obs + 1; t <= last_obs; ++t) {
            if (std::isnan(v[static_cast<size_t>(t)])) continue;
            if (t > prev + 1) {
                const double a = v[static_cast<size_t>(prev)];
                const double b = v[static_cast<size_t>(t)];
                for (int u = prev + 1; u < t; ++u)
                    v[static_cast<size_t>(u)] = a + (b - a) * static_cast<double>(u - prev) / static_cast<double>(t - prev);
            }
            prev = t;
        }
    }
    return out;
}

TimeSeriesFrame weekly_to_daily(const TimeSeriesFrame& weekly, const std::vector<Date>& daily_dates) {
    if (weekly.length() == 0) throw DataError("weekly frame is empty");
    weekly.validate();
    TimeSeriesFrame out;
    out.dates = daily_dates;
    out.channels = weekly.channels;
    out.values.assign(weekly.channels.size(), std::vector<double>(daily_dates.size(), 0.0));

    std::vector<std::int64_t> anchors(weekly.dates.size());
    for (size_t i = 0; i < weekly.dates.size(); ++i) anchors[i] = weekly.dates[i].serial();

    for (size_t c = 0; c < weekly.channels.size(); ++c) {
        const auto& wv = weekly.values[c];
        for (size_t t = 0; t < daily_dates.size(); ++t) {
            const std::int64_t z = daily_dates[t].serial();
            auto it = std::upper_bound(anchors.begin(), anchors.end(), z);
            double value;
            if (it == anchors.begin()) {
                value = wv.front();
            } else if (it == anchors.end()) {
                const size_t j = anchors.size() - 1;
                value = (z == anchors[j]) ? wv[j] : wv.back();
            } else {
                const size_t hi = static_cast<size_t>(it - anchors.begin());
                const size_t lo = hi - 1;
                if (z == anchors[lo]) {
                    value = wv[lo];
                } else {
                    const double frac = static_cast<double>(z - anchors[lo]) /
                                        static_cast<double>(anchors[hi] - anchors[lo]);
                    value = wv[lo] + (wv[hi] - wv[lo]) * frac;
                }
            }
            out.values[c][t] = value;
        }
    }
    return out;
}

ZScore ZScore::fit(const TimeSeriesFrame& frame, Date train_cutoff) {
    int n = 0;
    for (Date d : frame.dates)
        if (d < train_cutoff) ++n;
    if (n == 0) throw DataError("no rows before cutoff " + train_cutoff.str());
    ZScore z;
    z.mean.resize(frame.values.size());
    z.stddev.resize(frame.values.size());
    for (size_t c = 0; c < frame.values.size(); ++c) {
        double s = 0.0;
        for (int t = 0; t < n; ++t) s += frame.values[c][static_cast<size_t>(t)];
        const double mu = s / n;
        double ss = 0.0;
        for (int t = 0; t < n; ++t) {
            const double d = frame.values[c][static_cast<size_t>(t)] - mu;
            ss += d * d;
        }
        z.mean[c] = mu;
        z.stddev[c] = std::max(std::sqrt(ss / n), 1e-8);
    }
    return z;
}

double ZScore::apply_one(int channel, double v) const {
    return (v - mean[static_cast<size_t>(channel)]) / stddev[static_cast<size_t>(channel)];
}

double ZScore::invert_one(int channel, double v) const {
    return v * stddev[static_cast<size_t>(channel)] + mean[static_cast<size_t>(channel)];
}

TimeSeriesFrame ZScore::apply(const TimeSeriesFrame& frame) const {
    TimeSeriesFrame out = frame;
    for (size_t c = 0; c < out.values.size(); ++c)
        for (double& v : out.values[c]) v = apply_one(static_cast<int>(c), v);
    return out;
}

TimeSeriesFrame ZScore::invert(const TimeSeriesFrame& frame) const {
    TimeSeriesFrame out = frame;
    for (size_t c = 0; c < out.values.size(); ++c)
        for (double& v : out.values[c]) v = invert_one(static_cast<int>(c), v);
    return out;
}

const std::vector<double>& EmbeddingSeries::at(Date d) const {
    auto it = by_date.find(d);
    if (it == by_date.end()) throw DataError("no " + tag + " embedding at " + d.str());
    return it->second;
}

namespace {

void write_vector_jsonl_line(std::ofstream& out, const std::string& key_value,
                             const std::vector<double>& vec) {
    out << "{\"date\":\"" << key_value << "\",\"vector\":[";
    for (size_t i = 0; i < vec.size(); ++i) {
        if (i) out << ',';
        out << fmt17(vec[i]);
    }
    out << "]}\n";
}

nlohmann::json parse_jsonl_line(const std::string& line, int lineno, const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": invalid JSON object");
    return j;
}

}  // namespace

EmbeddingSeries read_embeddings_jsonl(const std::filesystem::path& path, const std::string& tag) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    EmbeddingSeries series;
    series.tag = tag;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = parse_jsonl_line(line, lineno, path);
        if (!j.contains("date") || !j.contains("vector"))
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": missing date/vector field");
        Date d = Date::parse(j["date"].get<std::string>());
        std::vector<double> vec = j["vector"].get<std::vector<double>>();
        for (double v : vec)
            if (!std::isfinite(v))
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-finite value");
        if (series.dim == 0) series.dim = static_cast<int>(vec.size());
        if (static_cast<int>(vec.size()) != series.dim)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": vector length " +
                            std::to_string(vec.size()) + " differs from stream dimension " +
                            std::to_string(series.dim));
        if (!series.by_date.emplace(d, std::move(vec)).second)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": duplicate date " + d.str());
    }
    return series;
}

void write_embeddings_jsonl(const EmbeddingSeries& series, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& [date, vec] : series.by_date) write_vector_jsonl_line(out, date.str(), vec);
    if (!out) throw IoError("write failed for " + path.string());
}

std::map<std::string, std::vector<double>> read_named_embeddings_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::map<std::string, std::vector<double>> out;
    std::string line;
    int lineno = 0;
    int dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = parse_jsonl_line(line, lineno, path);
        if (!j.contains("date") || !j.contains("vector"))
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": missing date/vector field");
        std::string name = j["date"].get<std::string>();
        std::vector<double> vec = j["vector"].get<std::vector<double>>();
        if (dim == 0) dim = static_cast<int>(vec.size());
        if (static_cast<int>(vec.size()) != dim)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": vector length " +
                            std::to_string(vec.size()) + " differs from stream dimension " +
                            std::to_string(dim));
        if (!out.emplace(std::move(name), std::move(vec)).second)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": duplicate name");
    }
    return out;
}

void write_named_embeddings_jsonl(const std::map<std::string, std::vector<double>>& vectors,
                                  const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& [name, vec] : vectors) write_vector_jsonl_line(out, name, vec);
    if (!out) throw IoError("write failed for " + path.string());
}

Tensor descriptions_matrix(const std::map<std::string, std::vector<double>>& descriptions,
                           const std::vector<std::string>& channels) {
    if (descriptions.empty()) throw ConfigError("no channel descriptions provided");
    const int dim = static_cast<int>(descriptions.begin()->second.size());
    Tensor out({static_cast<int>(channels.size()), dim});
    for (size_t c = 0; c < channels.size(); ++c) {
        auto it = descriptions.find(channels[c]);
        if (it == descriptions.end())
            throw ConfigError("missing description embedding for channel '" + channels[c] + "'");
        if (static_cast<int>(it->second.size()) != dim)
            throw DimensionError("description for channel '" + channels[c] + "' has length " +
                                 std::to_string(it->second.size()) + ", expected " + std::to_string(dim));
        for (int j = 0; j < dim; ++j) out.at(static_cast<int>(c), j) = it->second[static_cast<size_t>(j)];
    }
    return out;
}

WindowBatch build_windows(const TimeSeriesFrame& frame, const EmbeddingSeries& key_driver,
                          const EmbeddingSeries& outlook, const Tensor& descriptions,
                          const std::vector<int>& target_channels, int lookback, int horizon,
                          const std::vector<Date>& origin_dates) {
    if (lookback < 1 || horizon < 1) throw ConfigError("lookback and horizon must be >= 1");
    if (frame.has_missing()) throw DataError("frame has missing values; interpolate first");
    const int c = frame.channel_count();
    const int n = frame.length();
    WindowBatch batch;
    for (Date origin : origin_dates) {
        auto idx = frame.date_index(origin);
        if (!idx) {
            batch.rejected.push_back({origin, "origin date not in frame"});
            continue;
        }
        const int i = *idx;
        if (i < lookback) {
            batch.rejected.push_back({origin, "insufficient history"});
            continue;
        }
        if (i + horizon > n) {
            batch.rejected.push_back({origin, "insufficient future"});
            continue;
        }
        if (!key_driver.has(origin)) {
            batch.rejected.push_back({origin, "missing key_driver embedding"});
            continue;
        }
        if (!outlook.has(origin)) {
            batch.rejected.push_back({origin, "missing outlook embedding"});
            continue;
        }
        WindowSample s;
        s.origin = origin;
        s.x = Tensor({c, lookback});
        for (int ch = 0; ch < c; ++ch)
            for (int t = 0; t < lookback; ++t)
                s.x.at(ch, t) = frame.values[static_cast<size_t>(ch)][static_cast<size_t>(i - lookback + t)];
        s.y = Tensor({static_cast<int>(target_channels.size()), horizon});
        for (size_t ti = 0; ti < target_channels.size(); ++ti)
            for (int t = 0; t < horizon; ++t)
                s.y.at(static_cast<int>(ti), t) =
                    frame.values[static_cast<size_t>(target_channels[ti])][static_cast<size_t>(i + t)];
        s.key_driver = key_driver.at(origin);
        s.outlook = outlook.at(origin);
        s.descriptions = descriptions;
        batch.samples.push_back(std::move(s));
    }
    return batch;
}

double symmetric_spectral_radius(const std::vector<double>& m, int n) {
    std::vector<double> v(static_cast<size_t>(n), 1.0 / std::sqrt(static_cast<double>(n)));
    std::vector<double> w(static_cast<size_t>(n));
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += m[static_cast<size_t>(i) * n + j] * v[static_cast<size_t>(j)];
            w[static_cast<size_t>(i)] = acc;
        }
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = w[static_cast<size_t>(i)] / norm;
        lambda = norm;
    }
    return lambda;
}

namespace {

// Orthonormal columns via modified Gram-Schmidt over seeded Gaussian draws.
std::vector<std::vector<double>> orthonormal_columns(int rows, int cols, Rng& rng) {
    std::vector<std::vector<double>> q(static_cast<size_t>(cols), std::vector<double>(static_cast<size_t>(rows)));
    for (int c = 0; c < cols; ++c) {
        auto& col = q[static_cast<size_t>(c)];
        for (int r = 0; r < rows; ++r) col[static_cast<size_t>(r)] = rng.normal(0.0, 1.0);
        for (int p = 0; p < c; ++p) {
            const auto& prev = q[static_cast<size_t>(p)];
            double dot = 0.0;
            for (int r = 0; r < rows; ++r) dot += col[static_cast<size_t>(r)] * prev[static_cast<size_t>(r)];
            for (int r = 0; r < rows; ++r) col[static_cast<size_t>(r)] -= dot * prev[static_cast<size_t>(r)];
        }
        double norm = 0.0;
        for (double v : col) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw DataError("degenerate random draw during orthonormalization");
        for (double& v : col) v /= norm;
    }
    return q;
}

}  // namespace

SyntheticData synth_generate(const SyntheticSpec& spec) {
    if (spec.regimes < 2) throw ConfigError("synthetic spec: need at least 2 regimes");
    if (spec.regimes > spec.embed_dim)
        throw ConfigError("synthetic spec: regimes (" + std::to_string(spec.regimes) +
                          ") must not exceed embed_dim (" + std::to_string(spec.embed_dim) + ")");
    if (spec.channels < 1 || spec.targets < 1 || spec.targets > spec.channels)
        throw ConfigError("synthetic spec: invalid channels/targets");
    if (spec.length < 2) throw ConfigError("synthetic spec: length must be >= 2");
    if (spec.mean_dwell < 1.0) throw ConfigError("synthetic spec: mean dwell must be >= 1");

    const int c = spec.channels, n = spec.length, r = spec.regimes, d = spec.embed_dim;
    Rng rng(spec.seed);

    // Per-regime symmetric VAR matrix with spectral radius exactly 0.9, plus a
    // per-regime stationary mean the series reverts to.
    std::vector<std::vector<double>> regime_matrix(static_cast<size_t>(r));
    std::vector<std::vector<double>> regime_mean(static_cast<size_t>(r), std::vector<double>(static_cast<size_t>(c)));
    for (int k = 0; k < r; ++k) {
        auto q = orthonormal_columns(c, c, rng);
        std::vector<double> eig(static_cast<size_t>(c));
        double max_abs = 0.0;
        for (int i = 0; i < c; ++i) {
            eig[static_cast<size_t>(i)] = rng.uniform(-1.0, 1.0);
            max_abs = std::max(max_abs, std::abs(eig[static_cast<size_t>(i)]));
        }
        for (double& e : eig) e *= 0.9 / max_abs;
        auto& m = regime_matrix[static_cast<size_t>(k)];
        m.assign(static_cast<size_t>(c) * c, 0.0);
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < c; ++j) {
                double acc = 0.0;
                for (int l = 0; l < c; ++l)
                    acc += q[static_cast<size_t>(l)][static_cast<size_t>(i)] * eig[static_cast<size_t>(l)] *
                           q[static_cast<size_t>(l)][static_cast<size_t>(j)];
                m[static_cast<size_t>(i) * c + j] = acc;
            }
        for (int i = 0; i < c; ++i) regime_mean[static_cast<size_t>(k)][static_cast<size_t>(i)] = rng.normal(0.0, 1.0);
    }

    // Semi-Markov regime path: geometric dwell with the configured mean.
    std::vector<int> regimes(static_cast<size_t>(n));
    int cur = rng.uniform_int(0, r - 1);
    const double switch_prob = 1.0 / spec.mean_dwell;
    for (int t = 0; t < n; ++t) {
        regimes[static_cast<size_t>(t)] = cur;
        if (rng.uniform(0.0, 1.0) < switch_prob) {
            int nxt = rng.uniform_int(0, r - 2);
            if (nxt >= cur) ++nxt;
            cur = nxt;
        }
    }

    SyntheticData out;
    out.regimes = regimes;
    out.regime_matrix = regime_matrix;
    out.frame.channels.resize(static_cast<size_t>(c));
    for (int i = 0; i < c; ++i)
        out.frame.channels[static_cast<size_t>(i)] =
            (i < spec.targets ? "target_" : "exog_") + std::to_string(i);
    {
        Date cursor = spec.start;
        while (static_cast<int>(out.frame.dates.size()) < n) {
            if (cursor.is_weekday()) out.frame.dates.push_back(cursor);
            cursor = cursor.plus_days(1);
        }
    }
    out.frame.values.assign(static_cast<size_t>(c), std::vector<double>(static_cast<size_t>(n), 0.0));

    // x_{t+1} = mu_k + A_k (x_t - mu_k) + sigma * eps around the active regime.
    std::vector<double> x(static_cast<size_t>(c));
    for (int i = 0; i < c; ++i)
        x[static_cast<size_t>(i)] = regime_mean[static_cast<size_t>(regimes[0])][static_cast<size_t>(i)] +
                                    rng.normal(0.0, spec.var_noise);
    for (int t = 0; t < n; ++t) {
        for (int i = 0; i < c; ++i) out.frame.values[static_cast<size_t>(i)][static_cast<size_t>(t)] = x[static_cast<size_t>(i)];
        if (t + 1 >= n) break;
        const int k = regimes[static_cast<size_t>(t + 1)];
        const auto& m = regime_matrix[static_cast<size_t>(k)];
        const auto& mu = regime_mean[static_cast<size_t>(k)];
        std::vector<double> nx(static_cast<size_t>(c));
        for (int i = 0; i < c; ++i) {
            double acc = mu[static_cast<size_t>(i)];
            for (int j = 0; j < c; ++j)
                acc += m[static_cast<size_t>(i) * c + j] * (x[static_cast<size_t>(j)] - mu[static_cast<size_t>(j)]);
            nx[static_cast<size_t>(i)] = acc + rng.normal(0.0, spec.var_noise);
        }
        x = std::move(nx);
    }

    // Embedding maps: one orthonormal D x R map per stream.
    auto kd_map = orthonormal_columns(d, r, rng);
    auto ol_map = orthonormal_columns(d, r, rng);

    auto majority_future = [&](int t) {
        std::vector<int> count(static_cast<size_t>(r), 0);
        const int last = std::min(n - 1, t + spec.horizon);
        for (int u = t + 1; u <= last; ++u) ++count[static_cast<size_t>(regimes[static_cast<size_t>(u)])];
        if (last <= t) return regimes[static_cast<size_t>(t)];
        int best = 0;
        for (int k = 1; k < r; ++k)
            if (count[static_cast<size_t>(k)] > count[static_cast<size_t>(best)]) best = k;
        return best;
    };

    out.key_driver.tag = "key_driver";
    out.key_driver.dim = d;
    out.outlook.tag = "outlook";
    out.outlook.dim = d;
    const double noise_only_scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (int t = 0; t < n; ++t) {
        const Date date = out.frame.dates[static_cast<size_t>(t)];
        std::vector<double> kd(static_cast<size_t>(d)), ol(static_cast<size_t>(d));
        if (spec.leak == LeakMode::Oracle) {
            const int k_now = regimes[static_cast<size_t>(t)];
            const int k_fut = majority_future(t);
            for (int i = 0; i < d; ++i) {
                kd[static_cast<size_t>(i)] = kd_map[static_cast<size_t>(k_now)][static_cast<size_t>(i)] +
                                             rng.normal(0.0, spec.embed_noise);
                ol[static_cast<size_t>(i)] = ol_map[static_cast<size_t>(k_fut)][static_cast<size_t>(i)] +
                                             rng.normal(0.0, spec.embed_noise);
            }
        } else {
            for (int i = 0; i < d; ++i) {
                kd[static_cast<size_t>(i)] = rng.normal(0.0, noise_only_scale);
                ol[static_cast<size_t>(i)] = rng.normal(0.0, noise_only_scale);
            }
        }
        out.key_driver.by_date.emplace(date, std::move(kd));
        out.outlook.by_date.emplace(date, std::move(ol));
    }

    // Channel descriptions: fixed random unit vectors.
    for (int i = 0; i < c; ++i) {
        std::vector<double> v(static_cast<size_t>(d));
        double norm = 0.0;
        for (int j = 0; j < d; ++j) {
            v[static_cast<size_t>(j)] = rng.normal(0.0, 1.0);
            norm += v[static_cast<size_t>(j)] * v[static_cast<size_t>(j)];
        }
        norm = std::sqrt(norm);
        for (double& e : v) e /= norm;
        out.descriptions.emplace(out.frame.channels[static_cast<size_t>(i)], std::move(v));
    }
    return out;
}

}  // namespace air

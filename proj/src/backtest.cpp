#include "air/backtest.hpp"

#include "air/optim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

namespace air {

std::uint64_t fnv1a64(const void* data, size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

BacktestSchedule build_biweekly_schedule(IsoWeek start, int years,
                                         const std::vector<Date>& trading_dates, int lookback,
                                         int horizon) {
    if (years < 1) throw ConfigError("schedule: years must be >= 1");
    if (trading_dates.empty()) throw ConfigError("schedule: no trading dates");
    std::vector<std::int64_t> serials(trading_dates.size());
    for (size_t i = 0; i < trading_dates.size(); ++i) serials[i] = trading_dates[i].serial();
    if (!std::is_sorted(serials.begin(), serials.end()))
        throw ConfigError("schedule: trading dates must be sorted");

    auto index_of = [&](Date d) -> int {
        auto it = std::lower_bound(serials.begin(), serials.end(), d.serial());
        if (it == serials.end() || *it != d.serial()) return -1;
        return static_cast<int>(it - serials.begin());
    };

    const Date first_monday = monday_of_iso_week(start.year, start.week);
    const int n_points = years * 26;
    const int n = static_cast<int>(trading_dates.size());
    // the ten weekdays of weeks w and w+1
    static constexpr int kOriginOffsets[10] = {0, 1, 2, 3, 4, 7, 8, 9, 10, 11};

    BacktestSchedule schedule;
    for (int k = 0; k < n_points; ++k) {
        RetrainPoint point;
        point.cutoff = first_monday.plus_days(14 * k);
        point.test_span_begin = point.cutoff;
        point.test_span_end = point.cutoff.plus_days(28);
        for (int off : kOriginOffsets) {
            const Date d = point.cutoff.plus_days(off);
            const int idx = index_of(d);
            if (idx < 0) continue;  // holiday or out of calendar
            if (idx < lookback) {
                schedule.warnings.push_back({point.cutoff, "origin " + d.str() + " trimmed: insufficient history"});
                continue;
            }
            if (idx + horizon > n) {
                schedule.warnings.push_back({point.cutoff, "origin " + d.str() + " trimmed: insufficient horizon tail"});
                continue;
            }
            point.origins.push_back(d);
        }
        schedule.points.push_back(std::move(point));
    }
    return schedule;
}

void TrainConfig::validate() const {
    if (lr <= 0) throw ConfigError("training: learning rate must be positive");
    if (max_epochs < 1 || max_epochs > 40) throw ConfigError("training: epochs must be in [1,40]");
    if (batch_size < 1) throw ConfigError("training: batch size must be >= 1");
    if (seeds.empty()) throw ConfigError("training: at least one seed required");
    if (patience < 1) throw ConfigError("training: patience must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
    return nlohmann::json{{"lr", lr},           {"max_epochs", max_epochs},
                          {"batch_size", batch_size}, {"seeds", seeds},
                          {"vq_weight", vq_weight},   {"patience", patience},
                          {"min_delta", min_delta}};
}

TrainTrace run_training(ForecastModel& model, const std::vector<WindowSample>& samples,
                        const TrainConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (samples.empty()) throw ContractError("run_training: no samples");

    auto params = model.parameters();
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    Adam opt(params, adam_cfg);
    Rng shuffle_rng(seed ^ 0x9e3779b97f4a7c15ull);

    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), size_t{0});

    TrainTrace trace;
    double best_val = std::numeric_limits<double>::infinity();
    int stale_epochs = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng.eng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
            opt.zero_grad();
            Graph g;
            Graph::Ref total = g.constant(0.0);
            for (size_t i = begin; i < end; ++i) {
                const WindowSample& s = samples[order[i]];
                ForecastModel::Output out = model.run(g, s);
                Graph::Ref loss = g.mse(out.prediction, g.input(s.y));
                if (out.has_vq && cfg.vq_weight != 0.0) {
                    Graph::Ref aux = g.add(out.codebook_loss, g.scale(out.commit_loss, kCommitWeight));
                    loss = g.add(loss, g.scale(aux, cfg.vq_weight));
                }
                total = g.add(total, loss);
            }
            total = g.scale(total, 1.0 / static_cast<double>(end - begin));
            const double batch_loss = g.scalar(total);
            if (!std::isfinite(batch_loss))
                throw TrainingError("training loss is not finite at epoch " + std::to_string(epoch));
            g.backward(total);
            opt.step();
            epoch_loss += batch_loss;
            ++batches;
        }
        trace.train_loss.push_back(epoch_loss / batches);

        // validation = training set, plain forecast MSE
        double val = 0.0;
        for (const WindowSample& s : samples) {
            Graph g;
            ForecastModel::Output out = model.run(g, s);
            val += g.scalar(g.mse(out.prediction, g.input(s.y)));
        }
        val /= static_cast<double>(samples.size());
        if (!std::isfinite(val))
            throw TrainingError("validation loss is not finite at epoch " + std::to_string(epoch));
        trace.val_loss.push_back(val);
        trace.epochs = epoch + 1;

        if (val < best_val - cfg.min_delta) {
            best_val = val;
            stale_epochs = 0;
        } else if (++stale_epochs >= cfg.patience) {
            trace.early_stopped = true;
            break;
        }
    }
    return trace;
}

std::vector<OriginEval> evaluate_point(ForecastModel& model,
                                       const std::vector<WindowSample>& eval_samples) {
    std::vector<OriginEval> out;
    out.reserve(eval_samples.size());
    for (const WindowSample& s : eval_samples) {
        Forecast f = model.predict(s);
        OriginEval e;
        e.origin = s.origin;
        e.forecast = f.values;
        const int targets = s.y.shape[0];
        const int horizon = s.y.shape[1];
        e.per_target.assign(static_cast<size_t>(targets), 0.0);
        for (int t = 0; t < targets; ++t) {
            double acc = 0.0;
            for (int h = 0; h < horizon; ++h) {
                const double d = f.values.at(t, h) - s.y.at(t, h);
                acc += d * d;
            }
            e.per_target[static_cast<size_t>(t)] = acc / horizon;
        }
        e.mse = std::accumulate(e.per_target.begin(), e.per_target.end(), 0.0) / targets;
        out.push_back(std::move(e));
    }
    return out;
}

void aggregate(MetricsReport& report) {
    report.per_model_target.clear();
    report.per_model_overall.clear();
    report.relative_vs_baseline_pct.clear();

    const size_t n_targets = report.target_names.size();
    for (const auto& leaf : report.leaves)
        if (!leaf.failed && leaf.per_target.size() != n_targets)
            throw ContractError("aggregate: leaf for " + leaf.model + " has " +
                                std::to_string(leaf.per_target.size()) + " targets, expected " +
                                std::to_string(n_targets));

    for (const std::string& model : report.models) {
        // point -> per-target seed means
        std::map<int, std::vector<std::vector<double>>> by_point;
        for (const auto& leaf : report.leaves) {
            if (leaf.model != model || leaf.failed) continue;
            by_point[leaf.point_index].push_back(leaf.per_target);
        }
        if (by_point.empty()) continue;
        std::vector<double> target_mean(n_targets, 0.0);
        for (auto& [point, rows] : by_point) {
            for (size_t t = 0; t < n_targets; ++t) {
                double seed_mean = 0.0;
                for (const auto& row : rows) seed_mean += row[t];
                target_mean[t] += seed_mean / static_cast<double>(rows.size());
            }
        }
        for (auto& v : target_mean) v /= static_cast<double>(by_point.size());
        double overall = std::accumulate(target_mean.begin(), target_mean.end(), 0.0) /
                         static_cast<double>(n_targets);
        report.per_model_target[model] = std::move(target_mean);
        report.per_model_overall[model] = overall;
    }

    if (!report.baseline_id.empty() && report.per_model_overall.count(report.baseline_id)) {
        const double base = report.per_model_overall.at(report.baseline_id);
        if (base > 0.0)
            for (const auto& [model, overall] : report.per_model_overall)
                report.relative_vs_baseline_pct[model] = (overall - base) / base * 100.0;
    }
}

ModelConfig config_for_model_id(const ModelConfig& base, const std::string& model_id) {
    const auto dash = model_id.find('-');
    if (dash == std::string::npos)
        throw ConfigError("model id '" + model_id + "' must look like <mode>-<arch>");
    ModelConfig cfg = base;
    cfg.mode = parse_mode(model_id.substr(0, dash));
    cfg.arch = parse_arch(model_id.substr(dash + 1));
    if (cfg.mode != Mode::Air) {
        cfg.air_on_features = false;
        cfg.air_on_predictor = false;
        cfg.vq_enabled = false;
    }
    cfg.validate();
    return cfg;
}

ModelConfig derive_base_config(const BacktestDataset& data, ModelConfig base) {
    base.channels = data.frame.channel_count();
    base.targets = data.targets;
    if (data.key_driver.dim > 0) base.text_dim = data.key_driver.dim;
    if (!data.descriptions.empty())
        base.desc_dim = static_cast<int>(data.descriptions.begin()->second.size());
    return base;
}

TrainedPoint train_point(const BacktestDataset& data, const ModelConfig& base_in,
                         const std::string& model_id, Date cutoff, const TrainConfig& cfg,
                         std::uint64_t seed) {
    const ModelConfig base = derive_base_config(data, base_in);

    TimeSeriesFrame train_slice;
    train_slice.channels = data.frame.channels;
    for (size_t i = 0; i < data.frame.dates.size(); ++i) {
        if (!(data.frame.dates[i] < cutoff)) break;
        train_slice.dates.push_back(data.frame.dates[i]);
    }
    train_slice.values.resize(data.frame.values.size());
    for (size_t c = 0; c < data.frame.values.size(); ++c)
        train_slice.values[c].assign(
            data.frame.values[c].begin(),
            data.frame.values[c].begin() + static_cast<std::ptrdiff_t>(train_slice.dates.size()));

    const ZScore scaler = ZScore::fit(train_slice, cutoff);
    const TimeSeriesFrame train_norm = scaler.apply(train_slice);

    std::vector<Date> train_origins;
    const int n_train = train_norm.length();
    for (int i = base.lookback; i + base.horizon <= n_train; ++i)
        train_origins.push_back(train_norm.dates[static_cast<size_t>(i)]);
    const Tensor desc_matrix = descriptions_matrix(data.descriptions, data.frame.channels);
    WindowBatch train_batch = build_windows(train_norm, data.key_driver, data.outlook, desc_matrix,
                                            base.targets, base.lookback, base.horizon, train_origins);
    if (train_batch.samples.empty()) throw DataError("no trainable windows before " + cutoff.str());

    ModelConfig cfg_model = config_for_model_id(base, model_id);
    TrainedPoint out{ForecastModel(cfg_model, seed), scaler, TrainTrace{}};
    out.trace = run_training(out.model, train_batch.samples, cfg, seed);
    return out;
}

namespace {

std::uint64_t dataset_fingerprint(const BacktestDataset& data) {
    std::uint64_t h = fnv1a64("dataset", 7);
    for (const Date& d : data.frame.dates) {
        const std::int64_t z = d.serial();
        h = fnv1a64(&z, sizeof z, h);
    }
    for (const auto& ch : data.frame.values) h = fnv1a64(ch.data(), ch.size() * sizeof(double), h);
    for (const auto& [d, v] : data.key_driver.by_date) h = fnv1a64(v.data(), v.size() * sizeof(double), h);
    for (const auto& [d, v] : data.outlook.by_date) h = fnv1a64(v.data(), v.size() * sizeof(double), h);
    for (const auto& [name, v] : data.descriptions) {
        h = fnv1a64(name.data(), name.size(), h);
        h = fnv1a64(v.data(), v.size() * sizeof(double), h);
    }
    for (int t : data.targets) h = fnv1a64(&t, sizeof t, h);
    return h;
}

struct Task {
    std::string model_id;
    int point_index;
    std::uint64_t seed;
};

struct TaskResult {
    LeafResult leaf;
    std::vector<OriginEval> evals;
    std::vector<WindowReject> skipped;
};

template <typename Fn>
void parallel_tasks(size_t count, int workers, Fn&& fn) {
    workers = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    if (workers == 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    for (auto& t : pool) t.join();
}

}  // namespace

MetricsReport run_backtest(const BacktestRequest& req) {
    req.train.validate();
    if (req.model_ids.empty()) throw ConfigError("backtest: no models requested");
    if (req.data.frame.has_missing()) throw DataError("backtest: frame has missing values");

    MetricsReport report;
    report.models = req.model_ids;
    for (int t : req.data.targets)
        report.target_names.push_back(req.data.frame.channels[static_cast<size_t>(t)]);
    report.baseline_id = req.baseline_id;
    if (report.baseline_id.empty()) {
        for (const auto& id : req.model_ids)
            if (id.rfind("vanilla-", 0) == 0) {
                report.baseline_id = id;
                break;
            }
        if (report.baseline_id.empty()) report.baseline_id = req.model_ids.front();
    }

    const ModelConfig base = derive_base_config(req.data, req.base_config);

    report.schedule = build_biweekly_schedule(req.start, req.years, req.data.frame.dates,
                                              base.lookback, base.horizon);
    if (req.max_points > 0 && static_cast<int>(report.schedule.points.size()) > req.max_points)
        report.schedule.points.resize(static_cast<size_t>(req.max_points));

    // config hash covers the run inputs that determine the numbers
    {
        nlohmann::json cfg_doc;
        cfg_doc["base_config"] = base.to_json();
        cfg_doc["train"] = req.train.to_json();
        cfg_doc["models"] = req.model_ids;
        cfg_doc["start"] = std::to_string(req.start.year) + "-W" + std::to_string(req.start.week);
        cfg_doc["years"] = req.years;
        cfg_doc["baseline"] = report.baseline_id;
        const std::string dumped = cfg_doc.dump();
        std::uint64_t h = fnv1a64(dumped.data(), dumped.size());
        report.config_hash = hex64(h);
        const std::uint64_t fp = dataset_fingerprint(req.data);
        report.run_id = hex64(fnv1a64(&fp, sizeof fp, h));
    }

    const Tensor desc_matrix = descriptions_matrix(req.data.descriptions, req.data.frame.channels);

    std::vector<Task> tasks;
    for (const auto& model_id : req.model_ids)
        for (size_t p = 0; p < report.schedule.points.size(); ++p)
            if (!report.schedule.points[p].origins.empty())
                for (std::uint64_t seed : req.train.seeds)
                    tasks.push_back({model_id, static_cast<int>(p), seed});

    std::vector<TaskResult> results(tasks.size());
    parallel_tasks(tasks.size(), req.workers, [&](size_t ti) {
        const Task& task = tasks[ti];
        const RetrainPoint& point = report.schedule.points[static_cast<size_t>(task.point_index)];
        TaskResult& res = results[ti];
        res.leaf.model = task.model_id;
        res.leaf.point_index = task.point_index;
        res.leaf.cutoff = point.cutoff;
        res.leaf.seed = task.seed;
        try {
            TrainedPoint trained =
                train_point(req.data, base, task.model_id, point.cutoff, req.train, task.seed);
            res.leaf.epochs = trained.trace.epochs;

            const TimeSeriesFrame full_norm = trained.scaler.apply(req.data.frame);
            WindowBatch eval_batch =
                build_windows(full_norm, req.data.key_driver, req.data.outlook, desc_matrix,
                              base.targets, base.lookback, base.horizon, point.origins);
            res.skipped = eval_batch.rejected;
            res.evals = evaluate_point(trained.model, eval_batch.samples);
            if (res.evals.empty()) throw DataError("no evaluable origins at " + point.cutoff.str());

            const size_t n_targets = base.targets.size();
            res.leaf.per_target.assign(n_targets, 0.0);
            for (const auto& e : res.evals)
                for (size_t t = 0; t < n_targets; ++t) res.leaf.per_target[t] += e.per_target[t];
            for (auto& v : res.leaf.per_target) v /= static_cast<double>(res.evals.size());
            res.leaf.mse = std::accumulate(res.leaf.per_target.begin(), res.leaf.per_target.end(), 0.0) /
                           static_cast<double>(n_targets);
            res.leaf.origins_evaluated = static_cast<int>(res.evals.size());
        } catch (const std::exception& e) {
            res.leaf.failed = true;
            res.leaf.error = e.what();
        }
    });

    for (auto& res : results) report.leaves.push_back(res.leaf);
    std::sort(report.leaves.begin(), report.leaves.end(), [](const LeafResult& a, const LeafResult& b) {
        if (a.model != b.model) return a.model < b.model;
        if (a.point_index != b.point_index) return a.point_index < b.point_index;
        return a.seed < b.seed;
    });

    // plot data: per (point, origin) truth plus seed-mean forecast per model
    {
        const TimeSeriesFrame& frame = req.data.frame;
        std::map<Date, PlotEntry> entries;
        std::map<Date, std::map<std::string, std::pair<std::vector<std::vector<double>>, int>>> acc;
        for (size_t ti = 0; ti < tasks.size(); ++ti) {
            if (results[ti].leaf.failed) continue;
            for (const auto& e : results[ti].evals) {
                auto& slot = acc[e.origin][tasks[ti].model_id];
                const int targets = e.forecast.shape[0];
                const int horizon = e.forecast.shape[1];
                if (slot.second == 0)
                    slot.first.assign(static_cast<size_t>(targets),
                                      std::vector<double>(static_cast<size_t>(horizon), 0.0));
                for (int t = 0; t < targets; ++t)
                    for (int h = 0; h < horizon; ++h)
                        slot.first[static_cast<size_t>(t)][static_cast<size_t>(h)] += e.forecast.at(t, h);
                slot.second += 1;
            }
        }
        for (auto& [origin, models] : acc) {
            PlotEntry entry;
            entry.origin = origin;
            const auto idx_opt = frame.date_index(origin);
            if (!idx_opt) continue;
            const int i = *idx_opt;
            const size_t n_targets = req.data.targets.size();
            entry.lookback.resize(n_targets);
            entry.truth.resize(n_targets);
            for (size_t t = 0; t < n_targets; ++t) {
                const auto& ch = frame.values[static_cast<size_t>(req.data.targets[t])];
                for (int j = i - base.lookback; j < i; ++j)
                    if (j >= 0) entry.lookback[t].push_back(ch[static_cast<size_t>(j)]);
                for (int j = i; j < i + base.horizon && j < frame.length(); ++j)
                    entry.truth[t].push_back(ch[static_cast<size_t>(j)]);
            }
            for (auto& [model_id, slot] : models) {
                auto mean = slot.first;
                for (auto& row : mean)
                    for (auto& v : row) v /= slot.second;
                entry.forecasts[model_id] = std::move(mean);
            }
            entries.emplace(origin, std::move(entry));
        }
        for (auto& [origin, entry] : entries) report.plot_series.push_back(std::move(entry));
    }

    for (auto& res : results)
        for (auto& rej : res.skipped) report.skipped_origins.push_back(rej);
    // skip records repeat per (model, seed); keep one per (origin, reason)
    std::sort(report.skipped_origins.begin(), report.skipped_origins.end(),
              [](const WindowReject& a, const WindowReject& b) {
                  if (a.origin != b.origin) return a.origin < b.origin;
                  return a.reason < b.reason;
              });
    report.skipped_origins.erase(
        std::unique(report.skipped_origins.begin(), report.skipped_origins.end(),
                    [](const WindowReject& a, const WindowReject& b) {
                        return a.origin == b.origin && a.reason == b.reason;
                    }),
        report.skipped_origins.end());

    aggregate(report);
    return report;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["run_id"] = run_id;
    j["models"] = models;
    j["targets"] = target_names;
    j["baseline"] = baseline_id;

    nlohmann::json sched = nlohmann::json::array();
    for (const auto& p : schedule.points) {
        nlohmann::json origins = nlohmann::json::array();
        for (Date d : p.origins) origins.push_back(d.str());
        sched.push_back({{"cutoff", p.cutoff.str()},
                         {"test_span_begin", p.test_span_begin.str()},
                         {"test_span_end", p.test_span_end.str()},
                         {"origins", origins}});
    }
    j["schedule"] = std::move(sched);

    nlohmann::json warn = nlohmann::json::array();
    for (const auto& w : schedule.warnings) warn.push_back({{"cutoff", w.cutoff.str()}, {"message", w.message}});
    j["schedule_warnings"] = std::move(warn);

    nlohmann::json leaves_json = nlohmann::json::array();
    for (const auto& leaf : leaves) {
        nlohmann::json l{{"model", leaf.model},
                         {"point", leaf.point_index},
                         {"cutoff", leaf.cutoff.str()},
                         {"seed", leaf.seed},
                         {"failed", leaf.failed}};
        if (leaf.failed) {
            l["error"] = leaf.error;
        } else {
            l["per_target_mse"] = leaf.per_target;
            l["mse"] = leaf.mse;
            l["origins_evaluated"] = leaf.origins_evaluated;
            l["epochs"] = leaf.epochs;
        }
        leaves_json.push_back(std::move(l));
    }
    j["leaves"] = std::move(leaves_json);

    nlohmann::json skipped = nlohmann::json::array();
    for (const auto& s : skipped_origins) skipped.push_back({{"origin", s.origin.str()}, {"reason", s.reason}});
    j["skipped_origins"] = std::move(skipped);

    nlohmann::json agg;
    for (const auto& [model, targets] : per_model_target) {
        nlohmann::json m;
        for (size_t t = 0; t < targets.size(); ++t) m[target_names[t]] = targets[t];
        agg[model] = {{"per_target_mse", std::move(m)}, {"mse", per_model_overall.at(model)}};
        if (relative_vs_baseline_pct.count(model))
            agg[model]["relative_to_baseline_pct"] = relative_vs_baseline_pct.at(model);
    }
    j["aggregates"] = std::move(agg);

    nlohmann::json plots = nlohmann::json::array();
    for (const auto& entry : plot_series) {
        nlohmann::json forecasts;
        for (const auto& [model, rows] : entry.forecasts) forecasts[model] = rows;
        plots.push_back({{"origin", entry.origin.str()},
                         {"lookback", entry.lookback},
                         {"truth", entry.truth},
                         {"forecasts", std::move(forecasts)}});
    }
    j["forecasts"] = std::move(plots);
    return j;
}

void emit_report(const MetricsReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    {
        std::ofstream out(dir / "report.json", std::ios::binary);
        if (!out) throw IoError("cannot write " + (dir / "report.json").string());
        out << report.to_json().dump(2) << '\n';
        if (!out) throw IoError("write failed for report.json");
    }
    {
        std::ofstream out(dir / "summary.csv", std::ios::binary);
        if (!out) throw IoError("cannot write " + (dir / "summary.csv").string());
        out << "model";
        for (const auto& t : report.target_names) out << ',' << t;
        out << '\n';
        char buf[32];
        for (const auto& model : report.models) {
            out << model;
            auto it = report.per_model_target.find(model);
            for (size_t t = 0; t < report.target_names.size(); ++t) {
                out << ',';
                if (it != report.per_model_target.end()) {
                    std::snprintf(buf, sizeof buf, "%.17g", it->second[t]);
                    out << buf;
                }
            }
            out << '\n';
        }
        if (!out) throw IoError("write failed for summary.csv");
    }
}

}  // namespace air

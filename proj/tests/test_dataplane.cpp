#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "air/dataplane.hpp"

using namespace air;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("air_dataplane_" + name);
}

TimeSeriesFrame tiny_frame(const std::vector<std::vector<double>>& channels,
                           Date start = Date{2022, 1, 3}) {
    TimeSeriesFrame f;
    const int n = static_cast<int>(channels[0].size());
    Date d = start;
    while (static_cast<int>(f.dates.size()) < n) {
        if (d.is_weekday()) f.dates.push_back(d);
        d = d.plus_days(1);
    }
    for (size_t c = 0; c < channels.size(); ++c) {
        f.channels.push_back("ch" + std::to_string(c));
        f.values.push_back(channels[c]);
    }
    return f;
}

// Independent ISO-week derivation: locate each year's first ISO Monday via
// the January-4th rule, then count whole weeks.
std::pair<int, int> iso_week_oracle(Date d) {
    auto week1_monday = [](int year) {
        Date jan4{year, 1, 4};
        return jan4.plus_days(1 - jan4.weekday());
    };
    for (int y = d.year + 1; y >= d.year - 1; --y) {
        Date w1 = week1_monday(y);
        if (d.serial() >= w1.serial()) {
            const int week = static_cast<int>((d.serial() - w1.serial()) / 7) + 1;
            return {y, week};
        }
    }
    return {0, 0};
}

}  // namespace

TEST_CASE("csv: missing cells, round trip, and format errors") {
    const fs::path p = temp_file("a.csv");
    {
        std::ofstream out(p);
        out << "date,a,b\n2022-01-03,1.5,\n2022-01-04,2.5,3.25\n";
    }
    TimeSeriesFrame f = load_series_csv(p);
    CHECK(f.length() == 2);
    CHECK(f.channel_count() == 2);
    int missing = 0;
    for (const auto& ch : f.values)
        for (double v : ch)
            if (std::isnan(v)) ++missing;
    CHECK(missing == 1);

    SUBCASE("round trip is lossless for finite values") {
        TimeSeriesFrame g = tiny_frame({{0.1, 1.0 / 3.0, 2.7182818284590452}, {-1e17, 5e-300, 42.0}});
        const fs::path q = temp_file("b.csv");
        write_series_csv(g, q);
        TimeSeriesFrame h = load_series_csv(q);
        CHECK(h.dates == g.dates);
        CHECK(h.values == g.values);
    }

    SUBCASE("duplicate or non-increasing dates are rejected") {
        std::ofstream out(p);
        out << "date,a\n2022-01-03,1\n2022-01-03,2\n";
        out.close();
        CHECK_THROWS_AS(load_series_csv(p), DataError);
        std::ofstream out2(p);
        out2 << "date,a\n2022-01-04,1\n2022-01-03,2\n";
        out2.close();
        CHECK_THROWS_AS(load_series_csv(p), DataError);
    }

    SUBCASE("unparseable cells report row and column") {
        std::ofstream out(p);
        out << "date,a\n2022-01-03,1\n2022-01-04,oops\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_series_csv(p), doctest::Contains("row 3"), DataError);
        std::ofstream out2(p);
        out2 << "date,a\nnot-a-date,1\n";
        out2.close();
        CHECK_THROWS_WITH_AS(load_series_csv(p), doctest::Contains("column 1"), DataError);
    }
}

TEST_CASE("linear interpolation of missing values") {
    const double nan = std::nan("");
    SUBCASE("interior midpoint") {
        auto f = linear_interpolate_missing(tiny_frame({{1, nan, 3}}));
        CHECK(f.values[0] == std::vector<double>{1, 2, 3});
    }
    SUBCASE("leading and trailing gaps copy the nearest observation") {
        auto f = linear_interpolate_missing(tiny_frame({{nan, 5, nan}}));
        CHECK(f.values[0] == std::vector<double>{5, 5, 5});
    }
    SUBCASE("multi-step gap is linear in index") {
        auto f = linear_interpolate_missing(tiny_frame({{0, nan, nan, 3}}));
        CHECK(f.values[0] == std::vector<double>{0, 1, 2, 3});
    }
    SUBCASE("idempotent on complete frames") {
        auto f = tiny_frame({{0.25, -1.5, 3.75, 2.0}});
        auto g = linear_interpolate_missing(f);
        CHECK(g.values == f.values);
    }
    SUBCASE("fully-missing channel names the channel") {
        CHECK_THROWS_WITH_AS(linear_interpolate_missing(tiny_frame({{nan, nan}})),
                             doctest::Contains("ch0"), DataError);
    }
}

TEST_CASE("weekly to daily interpolation") {
    TimeSeriesFrame weekly;
    weekly.channels = {"w"};
    weekly.dates = {Date{2022, 1, 3}, Date{2022, 1, 10}};
    weekly.values = {{10.0, 17.0}};
    std::vector<Date> daily;
    for (int i = 0; i <= 7; ++i) daily.push_back(Date{2022, 1, 3}.plus_days(i));

    auto f = weekly_to_daily(weekly, daily);
    CHECK(f.values[0][0] == 10.0);  // anchor preserved
    CHECK(f.values[0][3] == 13.0);  // linear between anchors
    CHECK(f.values[0][7] == 17.0);  // anchor preserved

    SUBCASE("single anchor extends as a constant") {
        weekly.dates = {Date{2022, 1, 5}};
        weekly.values = {{4.5}};
        auto g = weekly_to_daily(weekly, daily);
        for (double v : g.values[0]) CHECK(v == 4.5);
    }
    SUBCASE("empty weekly frame is a data error") {
        TimeSeriesFrame empty;
        CHECK_THROWS_AS(weekly_to_daily(empty, daily), DataError);
    }
}

TEST_CASE("zscore fit, apply, invert") {
    auto f = tiny_frame({{1, 2, 3, 100}, {7, 7, 7, 7}});
    const Date cutoff = f.dates[3];  // first three rows are the train span
    ZScore z = ZScore::fit(f, cutoff);
    CHECK(z.mean[0] == 2.0);
    CHECK(z.stddev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));  // population std

    SUBCASE("constant channel uses the floor and normalizes to zero") {
        CHECK(z.stddev[1] == 1e-8);
        auto a = z.apply(f);
        for (int t = 0; t < 4; ++t) CHECK(a.values[1][static_cast<size_t>(t)] == 0.0);
    }
    SUBCASE("apply then invert is the identity") {
        auto round = z.invert(z.apply(f));
        for (size_t c = 0; c < f.values.size(); ++c)
            for (size_t t = 0; t < f.values[c].size(); ++t)
                CHECK(std::abs(round.values[c][t] - f.values[c][t]) < 1e-10);
    }
    SUBCASE("empty train span is a data error") {
        CHECK_THROWS_AS(ZScore::fit(f, f.dates[0]), DataError);
    }
}

TEST_CASE("window building: counting, rejection reasons, index convention") {
    const int t_len = 40;
    std::vector<std::vector<double>> chans(2, std::vector<double>(t_len));
    for (int t = 0; t < t_len; ++t) {
        chans[0][static_cast<size_t>(t)] = t;
        chans[1][static_cast<size_t>(t)] = 100 + t;
    }
    auto f = tiny_frame(chans);
    EmbeddingSeries kd, ol;
    kd.tag = "key_driver";
    ol.tag = "outlook";
    kd.dim = ol.dim = 2;
    for (Date d : f.dates) {
        kd.by_date[d] = {1.0, 0.0};
        ol.by_date[d] = {0.0, 1.0};
    }
    Tensor desc({2, 2}, {1, 0, 0, 1});

    SUBCASE("N=40 with T=H=20 leaves exactly the one origin at index 20") {
        auto batch = build_windows(f, kd, ol, desc, {0}, 20, 20, f.dates);
        CHECK(batch.samples.size() == 1);
        CHECK(batch.samples[0].origin == f.dates[20]);
        CHECK(batch.rejected.size() == 39);
    }

    SUBCASE("lookback ends the day before the origin; horizon starts at it") {
        auto batch = build_windows(f, kd, ol, desc, {1}, 20, 20, {f.dates[20]});
        REQUIRE(batch.samples.size() == 1);
        const auto& s = batch.samples[0];
        CHECK(s.x.at(0, 19) == 19.0);  // frame value at origin-1
        CHECK(s.x.at(0, 0) == 0.0);
        CHECK(s.y.at(0, 0) == 120.0);  // target channel at the origin itself
        CHECK(s.y.at(0, 19) == 139.0);
    }

    SUBCASE("missing outlook embedding rejects the origin with a reason") {
        ol.by_date.erase(f.dates[20]);
        auto batch = build_windows(f, kd, ol, desc, {0}, 20, 20, {f.dates[20]});
        CHECK(batch.samples.empty());
        REQUIRE(batch.rejected.size() == 1);
        CHECK(batch.rejected[0].reason == "missing outlook embedding");
    }

    SUBCASE("insufficient history and future are per-origin errors") {
        auto batch = build_windows(f, kd, ol, desc, {0}, 20, 20, {f.dates[5], f.dates[35]});
        CHECK(batch.samples.empty());
        REQUIRE(batch.rejected.size() == 2);
        CHECK(batch.rejected[0].reason == "insufficient history");
        CHECK(batch.rejected[1].reason == "insufficient future");
    }
}

TEST_CASE("descriptions matrix rejects a channel without a description") {
    std::map<std::string, std::vector<double>> desc{{"a", {1, 2}}, {"c", {3, 4}}};
    CHECK_THROWS_WITH_AS(descriptions_matrix(desc, {"a", "b", "c"}), doctest::Contains("'b'"),
                         ConfigError);
    Tensor m = descriptions_matrix(desc, {"a", "c"});
    CHECK(m.shape == Shape{2, 2});
    CHECK(m.at(1, 1) == 4.0);
}

TEST_CASE("iso week pinned examples") {
    CHECK(iso_week(Date{2022, 1, 3}) == IsoWeek{2022, 1});
    CHECK(iso_week(Date{2021, 1, 1}) == IsoWeek{2020, 53});
    CHECK(iso_week(Date{2024, 12, 30}) == IsoWeek{2025, 1});
}

TEST_CASE("iso week agrees with the day-counting oracle over 2013-2025") {
    Date d{2013, 1, 1};
    const Date last{2025, 12, 31};
    int checked = 0;
    while (d <= last) {
        IsoWeek got = iso_week(d);
        auto [wy, ww] = iso_week_oracle(d);
        REQUIRE(got.year == wy);
        REQUIRE(got.week == ww);
        ++checked;
        d = d.plus_days(1);
    }
    CHECK(checked == 4748);
}

TEST_CASE("monday_of_iso_week inverts iso_week") {
    CHECK(monday_of_iso_week(2022, 1) == Date{2022, 1, 3});
    CHECK(monday_of_iso_week(2020, 53) == Date{2020, 12, 28});
    CHECK(monday_of_iso_week(2025, 1) == Date{2024, 12, 30});
}

TEST_CASE("synthetic benchmark: determinism and constructed properties") {
    SyntheticSpec spec;
    spec.channels = 5;
    spec.targets = 2;
    spec.length = 300;
    spec.embed_dim = 16;
    spec.seed = 42;

    SyntheticData a = synth_generate(spec);
    SyntheticData b = synth_generate(spec);
    CHECK(a.frame.values == b.frame.values);
    CHECK(a.regimes == b.regimes);
    CHECK(a.key_driver.by_date == b.key_driver.by_date);
    CHECK(a.outlook.by_date == b.outlook.by_date);
    CHECK(a.descriptions == b.descriptions);

    SUBCASE("every regime matrix has spectral radius 0.9") {
        for (const auto& m : a.regime_matrix) {
            const double rho = symmetric_spectral_radius(m, spec.channels);
            CHECK(rho >= 0.899);
            CHECK(rho <= 0.901);
        }
    }

    SUBCASE("regimes exceeding the embedding dimension are rejected") {
        SyntheticSpec bad = spec;
        bad.regimes = 32;
        CHECK_THROWS_AS(synth_generate(bad), ConfigError);
    }

    SUBCASE("descriptions are unit vectors") {
        for (const auto& [name, v] : a.descriptions) {
            double norm = 0;
            for (double e : v) norm += e * e;
            CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("synthetic outlook: oracle leak is decodable, noise leak is not") {
    SyntheticSpec spec;  // defaults: C=8, N=1200, R=4, D=64, noise 0.05
    spec.seed = 7;

    SUBCASE("nearest-centroid recovery of the future-majority regime above 0.95") {
        SyntheticData data = synth_generate(spec);
        const int n = spec.length, r = spec.regimes, d = spec.embed_dim;
        // labels: majority regime over (t, t+horizon], clipped at the end
        std::vector<int> labels(static_cast<size_t>(n));
        for (int t = 0; t < n; ++t) {
            std::vector<int> cnt(static_cast<size_t>(r), 0);
            const int last = std::min(n - 1, t + spec.horizon);
            for (int u = t + 1; u <= last; ++u) ++cnt[static_cast<size_t>(data.regimes[static_cast<size_t>(u)])];
            int best = 0;
            for (int k = 1; k < r; ++k)
                if (cnt[static_cast<size_t>(k)] > cnt[static_cast<size_t>(best)]) best = k;
            labels[static_cast<size_t>(t)] = (last <= t) ? data.regimes[static_cast<size_t>(t)] : best;
        }
        std::vector<std::vector<double>> centroid(static_cast<size_t>(r), std::vector<double>(static_cast<size_t>(d), 0.0));
        std::vector<int> count(static_cast<size_t>(r), 0);
        for (int t = 0; t < n; ++t) {
            const auto& e = data.outlook.at(data.frame.dates[static_cast<size_t>(t)]);
            auto& ctr = centroid[static_cast<size_t>(labels[static_cast<size_t>(t)])];
            for (int j = 0; j < d; ++j) ctr[static_cast<size_t>(j)] += e[static_cast<size_t>(j)];
            ++count[static_cast<size_t>(labels[static_cast<size_t>(t)])];
        }
        for (int k = 0; k < r; ++k) {
            REQUIRE(count[static_cast<size_t>(k)] > 0);
            for (auto& v : centroid[static_cast<size_t>(k)]) v /= count[static_cast<size_t>(k)];
        }
        int hits = 0;
        for (int t = 0; t < n; ++t) {
            const auto& e = data.outlook.at(data.frame.dates[static_cast<size_t>(t)]);
            int best = 0;
            double best_d = 0;
            for (int k = 0; k < r; ++k) {
                double dist = 0;
                for (int j = 0; j < d; ++j) {
                    const double diff = e[static_cast<size_t>(j)] - centroid[static_cast<size_t>(k)][static_cast<size_t>(j)];
                    dist += diff * diff;
                }
                if (k == 0 || dist < best_d) {
                    best = k;
                    best_d = dist;
                }
            }
            hits += (best == labels[static_cast<size_t>(t)]);
        }
        CHECK(static_cast<double>(hits) / n > 0.95);
    }

    SUBCASE("without the leak, outlook embeddings carry no regime signal") {
        SyntheticSpec noise = spec;
        noise.leak = LeakMode::None;
        SyntheticData data = synth_generate(noise);
        const int n = noise.length, r = noise.regimes, d = noise.embed_dim;
        // correlation of each regime indicator with each embedding coordinate
        double worst = 0.0;
        std::vector<double> em(static_cast<size_t>(d), 0.0);
        for (int t = 0; t < n; ++t) {
            const auto& e = data.outlook.at(data.frame.dates[static_cast<size_t>(t)]);
            for (int j = 0; j < d; ++j) em[static_cast<size_t>(j)] += e[static_cast<size_t>(j)];
        }
        for (auto& v : em) v /= n;
        for (int k = 0; k < r; ++k) {
            std::vector<double> ind(static_cast<size_t>(n));
            double im = 0;
            for (int t = 0; t < n; ++t) {
                ind[static_cast<size_t>(t)] = data.regimes[static_cast<size_t>(t)] == k ? 1.0 : 0.0;
                im += ind[static_cast<size_t>(t)];
            }
            im /= n;
            double ivar = 0;
            for (double v : ind) ivar += (v - im) * (v - im);
            if (ivar == 0) continue;
            for (int j = 0; j < d; ++j) {
                double cov = 0, evar = 0;
                for (int t = 0; t < n; ++t) {
                    const double e =
                        data.outlook.at(data.frame.dates[static_cast<size_t>(t)])[static_cast<size_t>(j)] -
                        em[static_cast<size_t>(j)];
                    cov += e * (ind[static_cast<size_t>(t)] - im);
                    evar += e * e;
                }
                worst = std::max(worst, std::abs(cov / std::sqrt(evar * ivar)));
            }
        }
        CHECK(worst < 0.15);
    }
}

TEST_CASE("embedding jsonl round trip and validation") {
    const fs::path p = temp_file("emb.jsonl");
    EmbeddingSeries s;
    s.tag = "key_driver";
    s.dim = 3;
    Rng rng(9);
    for (int i = 0; i < 5; ++i) {
        std::vector<double> v{rng.normal(0, 1), 1.0 / 3.0, rng.uniform(-1e6, 1e6)};
        s.by_date.emplace(Date{2022, 1, 3}.plus_days(i), std::move(v));
    }
    write_embeddings_jsonl(s, p);
    EmbeddingSeries t = read_embeddings_jsonl(p, "key_driver");
    CHECK(t.by_date == s.by_date);
    CHECK(t.dim == 3);

    SUBCASE("duplicate dates are rejected with the line number") {
        std::ofstream out(p);
        out << R"({"date":"2022-01-03","vector":[1.0]})" << "\n"
            << R"({"date":"2022-01-03","vector":[2.0]})" << "\n";
        out.close();
        CHECK_THROWS_WITH_AS(read_embeddings_jsonl(p, "kd"), doctest::Contains(":2"), DataError);
    }
    SUBCASE("inconsistent vector length is rejected with the line number") {
        std::ofstream out(p);
        out << R"({"date":"2022-01-03","vector":[1.0,2.0]})" << "\n"
            << R"({"date":"2022-01-04","vector":[1.0]})" << "\n";
        out.close();
        CHECK_THROWS_WITH_AS(read_embeddings_jsonl(p, "kd"), doctest::Contains(":2"), DataError);
    }
    SUBCASE("empty file parses into an empty, valid series") {
        std::ofstream out(p);
        out.close();
        EmbeddingSeries e = read_embeddings_jsonl(p, "kd");
        CHECK(e.by_date.empty());
        CHECK(e.dim == 0);
    }
}

TEST_CASE("named embedding jsonl carries channel descriptions") {
    const fs::path p = temp_file("desc.jsonl");
    std::map<std::string, std::vector<double>> m{{"alpha", {1, 2}}, {"beta", {3, 4}}};
    write_named_embeddings_jsonl(m, p);
    CHECK(read_named_embeddings_jsonl(p) == m);
}

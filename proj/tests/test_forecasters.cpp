#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "air/forecasters.hpp"
#include "air/gradcheck.hpp"

using namespace air;

namespace {

ModelConfig tiny_config(Arch arch, Mode mode) {
    ModelConfig c;
    c.arch = arch;
    c.mode = mode;
    c.lookback = 4;
    c.horizon = 2;
    c.channels = 3;
    c.targets = {0, 2};
    c.latent = 2;
    c.codebook = 3;
    c.blocks = 1;
    c.d_model = 4;
    c.ffn_hidden = 4;
    c.tcn_hidden = 3;
    c.tcn_kernel = 2;
    c.tcn_dilations = {1, 2};
    c.text_dim = 5;
    c.desc_dim = 5;
    c.desc_proj = 2;
    c.gen_hidden = 4;
    if (mode != Mode::Air) {
        c.air_on_features = false;
        c.air_on_predictor = false;
        c.vq_enabled = false;
    }
    return c;
}

WindowSample sample_for(const ModelConfig& c, std::uint64_t seed) {
    Rng rng(seed);
    WindowSample s;
    s.x = Tensor({c.channels, c.lookback});
    for (auto& v : s.x.values) v = rng.normal(0, 1);
    s.y = Tensor({static_cast<int>(c.targets.size()), c.horizon});
    for (auto& v : s.y.values) v = rng.normal(0, 1);
    s.key_driver.resize(static_cast<size_t>(c.text_dim));
    for (auto& v : s.key_driver) v = rng.normal(0, 1);
    s.outlook.resize(static_cast<size_t>(c.text_dim));
    for (auto& v : s.outlook) v = rng.normal(0, 1);
    s.descriptions = Tensor({c.channels, c.desc_dim});
    for (auto& v : s.descriptions.values) v = rng.normal(0, 1);
    s.origin = Date{2022, 3, 7};
    return s;
}

}  // namespace

TEST_CASE("description fusion: default initialization is an exact identity") {
    Rng rng(1);
    DescFusion f(4, 6, 2, rng);
    Graph g;
    std::vector<double> xv(12), dv(18);
    for (auto& v : xv) v = rng.normal(0, 1);
    for (auto& v : dv) v = rng.normal(0, 1);
    auto y = g.val(fuse_channel_descriptions(g, f, g.input({3, 4}, xv), g.input({3, 6}, dv)));
    CHECK(y == xv);
}

TEST_CASE("description fusion: permuting channels permutes outputs identically") {
    Rng rng(2);
    DescFusion f(3, 4, 2, rng);
    for (auto* t : f.parameters())
        for (auto& v : t->values) v = rng.normal(0, 1);
    std::vector<double> xv(9), dv(12);
    for (auto& v : xv) v = rng.normal(0, 1);
    for (auto& v : dv) v = rng.normal(0, 1);

    Graph g;
    auto y1 = g.val(fuse_channel_descriptions(g, f, g.input({3, 3}, xv), g.input({3, 4}, dv)));
    // rotate channels 0<-1<-2<-0
    auto rot = [](const std::vector<double>& v, int cols) {
        std::vector<double> out(v.size());
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j < cols; ++j)
                out[static_cast<size_t>(c * cols + j)] = v[static_cast<size_t>(((c + 1) % 3) * cols + j)];
        return out;
    };
    Graph g2;
    auto y2 = g2.val(fuse_channel_descriptions(g2, f, g2.input({3, 3}, rot(xv, 3)), g2.input({3, 4}, rot(dv, 4))));
    CHECK(y2 == rot(y1, 3));
}

TEST_CASE("description fusion matches a hand-composed projection+concat+affine") {
    Rng rng(3);
    const int t_len = 3, dd = 4, q = 2, c = 2;
    DescFusion f(t_len, dd, q, rng);
    for (auto* t : f.parameters())
        for (auto& v : t->values) v = rng.normal(0, 1);
    std::vector<double> xv(static_cast<size_t>(c * t_len)), dv(static_cast<size_t>(c * dd));
    for (auto& v : xv) v = rng.normal(0, 1);
    for (auto& v : dv) v = rng.normal(0, 1);

    Graph g;
    auto y = g.val(fuse_channel_descriptions(g, f, g.input({c, t_len}, xv), g.input({c, dd}, dv)));
    for (int ch = 0; ch < c; ++ch) {
        std::vector<double> proj(static_cast<size_t>(q));
        for (int i = 0; i < q; ++i) {
            proj[static_cast<size_t>(i)] = f.proj_b.at(i);
            for (int j = 0; j < dd; ++j)
                proj[static_cast<size_t>(i)] += f.proj_w.at(i, j) * dv[static_cast<size_t>(ch * dd + j)];
        }
        for (int o = 0; o < t_len; ++o) {
            double want = f.fc_b.at(o);
            for (int j = 0; j < t_len; ++j) want += f.fc_w.at(o, j) * xv[static_cast<size_t>(ch * t_len + j)];
            for (int j = 0; j < q; ++j) want += f.fc_w.at(o, t_len + j) * proj[static_cast<size_t>(j)];
            CHECK(y[static_cast<size_t>(ch * t_len + o)] == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("tsmixer: identity-initialized mixers reduce to the predictor on X") {
    ModelConfig cfg = tiny_config(Arch::TsMixer, Mode::Vanilla);
    ForecastModel m(cfg, 11);
    for (auto& block : m.tsmixer->blocks)
        for (FcVar* fc : {&block.time_mix, &block.feat_mix}) {
            Dense& d = std::get<Dense>(*fc);
            d.w.values.assign(d.w.values.size(), 0.0);
            d.b.values.assign(d.b.values.size(), 0.0);
        }
    WindowSample s = sample_for(cfg, 5);
    Forecast f = m.predict(s);
    for (size_t ti = 0; ti < cfg.targets.size(); ++ti) {
        Dense& head = std::get<Dense>(m.tsmixer->heads[ti]);
        for (int h = 0; h < cfg.horizon; ++h) {
            double want = head.b.at(h);
            for (int j = 0; j < cfg.lookback; ++j)
                want += head.w.at(h, j) * s.x.at(cfg.targets[ti], j);
            CHECK(f.values.at(static_cast<int>(ti), h) == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("tsmixer: output shape contract") {
    ModelConfig cfg = tiny_config(Arch::TsMixer, Mode::Vanilla);
    cfg.channels = 5;
    cfg.lookback = 20;
    cfg.horizon = 20;
    cfg.targets = {1, 3};
    ForecastModel m(cfg, 1);
    Forecast f = m.predict(sample_for(cfg, 2));
    CHECK(f.values.shape == Shape{2, 20});
    CHECK(f.values.all_finite());
}

TEST_CASE("tsmixer: vanilla equals air with uniform routing and matched factorization") {
    // air model with zeroed weight generators (uniform routing), VQ off, and
    // routed layers constructed so that W2 diag(1/L) W1 == W_ref with L = in
    ModelConfig cfg = tiny_config(Arch::TsMixer, Mode::Air);
    cfg.channels = 4;
    cfg.lookback = 4;
    cfg.latent = 4;
    cfg.targets = {0, 1};
    cfg.vq_enabled = false;
    ForecastModel airm(cfg, 21);

    ModelConfig vcfg = cfg;
    vcfg.mode = Mode::Vanilla;
    vcfg.air_on_features = false;
    vcfg.air_on_predictor = false;
    ForecastModel vm(vcfg, 22);

    for (Tensor* t : airm.kd_router->generator.parameters()) t->values.assign(t->values.size(), 0.0);
    for (Tensor* t : airm.ol_router->generator.parameters()) t->values.assign(t->values.size(), 0.0);

    Rng rng(23);
    auto align = [&](FcVar& routed_fc, FcVar& plain_fc, int in) {
        Dense& ref = std::get<Dense>(plain_fc);
        for (auto& v : ref.w.values) v = rng.normal(0, 1);
        for (auto& v : ref.b.values) v = rng.normal(0, 1);
        RoutedDense& rd = std::get<RoutedDense>(routed_fc);
        REQUIRE(rd.latent() == in);
        rd.w1 = Tensor({in, in});
        for (int i = 0; i < in; ++i) rd.w1.at(i, i) = static_cast<double>(in);  // L * I
        rd.b1 = Tensor({in});
        rd.w2 = ref.w;
        rd.b2 = ref.b;
    };
    for (int b = 0; b < cfg.blocks; ++b) {
        align(airm.tsmixer->blocks[static_cast<size_t>(b)].time_mix,
              vm.tsmixer->blocks[static_cast<size_t>(b)].time_mix, cfg.lookback);
        align(airm.tsmixer->blocks[static_cast<size_t>(b)].feat_mix,
              vm.tsmixer->blocks[static_cast<size_t>(b)].feat_mix, cfg.channels);
    }
    for (size_t t = 0; t < cfg.targets.size(); ++t)
        align(airm.tsmixer->heads[t], vm.tsmixer->heads[t], cfg.lookback);

    WindowSample s = sample_for(cfg, 24);
    Forecast fa = airm.predict(s);
    Forecast fv = vm.predict(s);
    for (size_t i = 0; i < fa.values.values.size(); ++i)
        CHECK(fa.values.values[i] == doctest::Approx(fv.values.values[i]).epsilon(1e-12));
}

TEST_CASE("routing vectors supplied to a vanilla network are a contract violation") {
    ModelConfig cfg = tiny_config(Arch::TsMixer, Mode::Vanilla);
    ForecastModel m(cfg, 3);
    WindowSample s = sample_for(cfg, 4);
    Graph g;
    std::vector<Graph::Ref> bogus{g.input({2}, {0.5, 0.5})};
    CHECK_THROWS_AS(tsmixer_forward(g, *m.tsmixer, g.input(s.x), &bogus, nullptr), ContractError);
}

TEST_CASE("tcn: zero-initialized convolutions leave only the predictor bias") {
    ModelConfig cfg = tiny_config(Arch::Tcn, Mode::Vanilla);
    ForecastModel m(cfg, 31);
    for (Tensor* t : m.tcn->input_proj.parameters()) t->values.assign(t->values.size(), 0.0);
    for (auto& block : m.tcn->blocks)
        for (Tensor* t : std::get<Conv1d>(block).parameters()) t->values.assign(t->values.size(), 0.0);
    WindowSample s = sample_for(cfg, 32);
    for (auto& v : s.x.values) v = 3.7;  // constant input
    Forecast f = m.predict(s);
    for (size_t ti = 0; ti < cfg.targets.size(); ++ti) {
        Dense& head = std::get<Dense>(m.tcn->heads[ti]);
        for (int h = 0; h < cfg.horizon; ++h)
            CHECK(f.values.at(static_cast<int>(ti), h) == head.b.at(h));
    }
}

TEST_CASE("tcn: receptive field covers the last step but not step zero at T=20") {
    ModelConfig cfg = tiny_config(Arch::Tcn, Mode::Vanilla);
    cfg.lookback = 20;
    cfg.horizon = 4;
    cfg.tcn_kernel = 3;
    cfg.tcn_dilations = {1, 2, 4};  // receptive field 1 + 2*(1+2+4) = 15 < 20
    ForecastModel m(cfg, 33);
    WindowSample s = sample_for(cfg, 34);
    Forecast base = m.predict(s);

    WindowSample s_first = s;
    s_first.x.at(1, 0) += 10.0;
    Forecast f_first = m.predict(s_first);
    CHECK(f_first.values.values == base.values.values);

    WindowSample s_last = s;
    s_last.x.at(1, 19) += 10.0;
    Forecast f_last = m.predict(s_last);
    CHECK(f_last.values.values != base.values.values);
}

TEST_CASE("tcn: output shape contract") {
    ModelConfig cfg = tiny_config(Arch::Tcn, Mode::Vanilla);
    ForecastModel m(cfg, 35);
    Forecast f = m.predict(sample_for(cfg, 36));
    CHECK(f.values.shape == Shape{2, 2});
}

TEST_CASE("itransformer: permuting non-target variates leaves predictions unchanged (vanilla)") {
    ModelConfig cfg = tiny_config(Arch::ITransformer, Mode::Vanilla);
    cfg.channels = 5;
    cfg.targets = {0, 2};
    ForecastModel m(cfg, 41);
    WindowSample s = sample_for(cfg, 42);
    Forecast base = m.predict(s);

    WindowSample s2 = s;  // swap non-target channels 1 and 4
    for (int j = 0; j < cfg.lookback; ++j) std::swap(s2.x.at(1, j), s2.x.at(4, j));
    Forecast f2 = m.predict(s2);
    for (size_t i = 0; i < base.values.values.size(); ++i)
        CHECK(f2.values.values[i] == doctest::Approx(base.values.values[i]).epsilon(1e-12));
}

TEST_CASE("itransformer: single-variate air model is deterministic and well-shaped") {
    ModelConfig cfg = tiny_config(Arch::ITransformer, Mode::Air);
    cfg.channels = 1;
    cfg.targets = {0};
    ForecastModel m(cfg, 43);
    WindowSample s = sample_for(cfg, 44);
    Forecast a = m.predict(s);
    Forecast b = m.predict(s);
    CHECK(a.values.shape == Shape{1, 2});
    CHECK(a.values.values == b.values.values);
}

TEST_CASE("timemmd: zero-initialized text head starts at the base prediction") {
    ModelConfig cfg = tiny_config(Arch::TsMixer, Mode::TimeMmd);
    ForecastModel m(cfg, 51);
    ModelConfig vcfg = cfg;
    vcfg.mode = Mode::Vanilla;
    ForecastModel vm(vcfg, 51);  // same seed: identical base weights by construction order
    WindowSample s = sample_for(cfg, 52);
    CHECK(m.predict(s).values.values == vm.predict(s).values.values);
}

TEST_CASE("timemmd: swapping the two embeddings changes the correction") {
    ModelConfig cfg = tiny_config(Arch::TsMixer, Mode::TimeMmd);
    ForecastModel m(cfg, 53);
    Rng rng(54);
    for (Tensor* t : m.text_fusion->parameters())
        for (auto& v : t->values) v = rng.normal(0, 1);
    WindowSample s = sample_for(cfg, 55);
    WindowSample swapped = s;
    std::swap(swapped.key_driver, swapped.outlook);
    CHECK(m.predict(s).values.values != m.predict(swapped).values.values);
}

TEST_CASE("timemmd fusion gradcheck") {
    Rng rng(56);
    TextFusion f(3, 4, 4, rng);
    for (auto& v : f.w2.values) v = rng.normal(0, 1);  // move off the zero start
    for (auto& v : f.b2.values) v = rng.normal(0, 1);
    std::vector<double> kd{0.1, -0.2, 0.3}, ol{0.5, 0.4, -0.6};
    std::vector<double> base(4, 0.25), tv{1, 0, -1, 2};
    auto params = f.parameters();
    auto loss = [&](bool with_grad) {
        Graph g;
        auto out = timemmd_fuse(g, f, g.input({2, 2}, base), kd, ol);
        auto l = g.mse(out, g.input({2, 2}, tv));
        if (with_grad) g.backward(l);
        return g.scalar(l);
    };
    CHECK(finite_difference_max_rel_err(loss, params) < 1e-4);
}

TEST_CASE("model_forward: vanilla ignores every text embedding in the sample") {
    for (Arch arch : {Arch::TsMixer, Arch::Tcn, Arch::ITransformer}) {
        ModelConfig cfg = tiny_config(arch, Mode::Vanilla);
        ForecastModel m(cfg, 61);
        WindowSample s = sample_for(cfg, 62);
        WindowSample s2 = s;
        Rng rng(63);
        for (auto& v : s2.key_driver) v = rng.normal(0, 1);
        for (auto& v : s2.outlook) v = rng.normal(0, 1);
        for (auto& v : s2.descriptions.values) v = rng.normal(0, 1);
        CHECK(m.predict(s).values.values == m.predict(s2).values.values);
    }
}

TEST_CASE("model_forward: air routing invariance and codebook-cell sensitivity") {
    for (Arch arch : {Arch::TsMixer, Arch::Tcn, Arch::ITransformer}) {
        ModelConfig cfg = tiny_config(arch, Mode::Air);
        ForecastModel m(cfg, 71);
        WindowSample s = sample_for(cfg, 72);

        // identical embeddings: bit-identical forecasts
        CHECK(m.predict(s).values.values == m.predict(s).values.values);

        // a perturbation too small to change any nearest-entry assignment
        // leaves the forecast bit-identical
        auto indices_for = [&](const WindowSample& smp) {
            Graph g;
            auto kd = m.kd_router->route(g, smp.key_driver, true);
            auto ol = m.ol_router->route(g, smp.outlook, true);
            auto idx = kd.indices;
            idx.insert(idx.end(), ol.indices.begin(), ol.indices.end());
            return idx;
        };
        WindowSample s_nudged = s;
        for (auto& v : s_nudged.key_driver) v += 1e-11;
        for (auto& v : s_nudged.outlook) v += 1e-11;
        REQUIRE(indices_for(s_nudged) == indices_for(s));
        CHECK(m.predict(s_nudged).values.values == m.predict(s).values.values);

        // an embedding landing in a different codebook cell changes the output
        Rng rng(73);
        WindowSample s_far = s;
        int tries = 0;
        do {
            for (auto& v : s_far.key_driver) v = rng.normal(0, 3);
            ++tries;
        } while (indices_for(s_far) == indices_for(s) && tries < 50);
        REQUIRE(indices_for(s_far) != indices_for(s));
        CHECK(m.predict(s_far).values.values != m.predict(s).values.values);
    }
}

TEST_CASE("parameter counts are exact, frozen constants per config") {
    ModelConfig cfg = tiny_config(Arch::TsMixer, Mode::Air);
    // routed fc (in,out): in*L + L + L*out + out, with L=2
    // block: time (4->4): 8+2+8+4=22, feat (3->3): 6+2+6+3=17
    // heads (4->2) x2: (8+2+4+2)=16 each
    // fusion: proj [2x5]+2 + fc [4x6]+4 = 12 + 28 = 40
    // router trunk: 5*4+4 + 4*4+4 = 44; per head 2*4+2 = 10; codebook 3*2 = 6
    // kd_router: 44 + 2*10 + 6 = 70 ; ol_router: 44 + 2*10 + 6 = 70
    const std::int64_t want = 22 + 17 + 2 * 16 + 40 + 70 + 70;
    ForecastModel a(cfg, 81);
    ForecastModel b(cfg, 82);
    CHECK(a.parameter_count() == want);
    CHECK(b.parameter_count() == want);  // independent of the seed

    ModelConfig vcfg = tiny_config(Arch::TsMixer, Mode::Vanilla);
    // dense fc (in,out): in*out + out
    const std::int64_t want_vanilla = (16 + 4) + (9 + 3) + 2 * (8 + 2);
    CHECK(ForecastModel(vcfg, 83).parameter_count() == want_vanilla);
}

TEST_CASE("checkpoint save/load round trip is exact") {
    ModelConfig cfg = tiny_config(Arch::ITransformer, Mode::Air);
    ForecastModel m(cfg, 91);
    WindowSample s = sample_for(cfg, 92);
    Forecast before = m.predict(s);

    const auto path = std::filesystem::temp_directory_path() / "air_ckpt_test.bin";
    m.save(path);
    ForecastModel loaded = ForecastModel::load(path);
    CHECK(loaded.config().model_id() == cfg.model_id());
    auto pa = m.named_parameters();
    auto pb = loaded.named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].first == pb[i].first);
        CHECK(pa[i].second->values == pb[i].second->values);
    }
    CHECK(loaded.predict(s).values.values == before.values.values);
}

TEST_CASE("sample/config mismatches are contract errors") {
    ModelConfig cfg = tiny_config(Arch::TsMixer, Mode::Air);
    ForecastModel m(cfg, 95);
    WindowSample s = sample_for(cfg, 96);
    SUBCASE("wrong lookback shape") {
        s.x = Tensor({cfg.channels, cfg.lookback + 1});
        CHECK_THROWS_AS(m.predict(s), ContractError);
    }
    SUBCASE("wrong embedding length") {
        s.key_driver.push_back(0.0);
        CHECK_THROWS_AS(m.predict(s), ContractError);
    }
    SUBCASE("wrong description shape") {
        s.descriptions = Tensor({cfg.channels, cfg.desc_dim + 2});
        CHECK_THROWS_AS(m.predict(s), ContractError);
    }
}

TEST_CASE("full-model gradcheck on tiny configs, vanilla and air") {
    for (Arch arch : {Arch::TsMixer, Arch::Tcn, Arch::ITransformer}) {
        for (Mode mode : {Mode::Vanilla, Mode::Air}) {
            ModelConfig cfg = tiny_config(arch, mode);
            if (mode == Mode::Air) cfg.vq_enabled = false;  // smooth end-to-end path
            ForecastModel m(cfg, 101);
            WindowSample s = sample_for(cfg, 102);
            auto params = m.parameters();
            auto loss = [&](bool with_grad) {
                Graph g;
                auto out = m.run(g, s);
                auto l = g.mse(out.prediction, g.input(s.y));
                if (with_grad) g.backward(l);
                return g.scalar(l);
            };
            const double err = finite_difference_max_rel_err(loss, params);
            INFO(arch_str(arch) << " " << mode_str(mode));
            CHECK(err < 1e-4);
        }
    }
}

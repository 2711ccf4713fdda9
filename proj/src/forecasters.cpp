#include "air/forecasters.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace air {

std::string arch_str(Arch a) {
    switch (a) {
        case Arch::TsMixer: return "tsmixer";
        case Arch::Tcn: return "tcn";
        case Arch::ITransformer: return "itransformer";
    }
    return "?";
}

std::string mode_str(Mode m) {
    switch (m) {
        case Mode::Vanilla: return "vanilla";
        case Mode::Air: return "air";
        case Mode::TimeMmd: return "timemmd";
    }
    return "?";
}

Arch parse_arch(const std::string& s) {
    if (s == "tsmixer") return Arch::TsMixer;
    if (s == "tcn") return Arch::Tcn;
    if (s == "itransformer") return Arch::ITransformer;
    throw ConfigError("unknown architecture '" + s + "' (expected tsmixer|tcn|itransformer)");
}

Mode parse_mode(const std::string& s) {
    if (s == "vanilla") return Mode::Vanilla;
    if (s == "air") return Mode::Air;
    if (s == "timemmd") return Mode::TimeMmd;
    throw ConfigError("unknown mode '" + s + "' (expected vanilla|air|timemmd)");
}

void ModelConfig::validate() const {
    if (channels < 1) throw ConfigError("model: channels must be >= 1");
    if (lookback < 1 || horizon < 1) throw ConfigError("model: lookback and horizon must be >= 1");
    if (targets.empty()) throw ConfigError("model: at least one target channel required");
    for (size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] < 0 || targets[i] >= channels)
            throw ConfigError("model: target index " + std::to_string(targets[i]) +
                              " out of range [0," + std::to_string(channels) + ")");
        if (i > 0 && targets[i] <= targets[i - 1])
            throw ConfigError("model: target indices must be strictly increasing");
    }
    if (latent < 1 || codebook < 1 || blocks < 1 || d_model < 1 || ffn_hidden < 1 ||
        tcn_hidden < 1 || tcn_kernel < 1 || text_dim < 1 || desc_dim < 1 || desc_proj < 1 ||
        gen_hidden < 1)
        throw ConfigError("model: all width/count settings must be >= 1");
    if (tcn_dilations.empty()) throw ConfigError("model: tcn dilations must be non-empty");
    for (int d : tcn_dilations)
        if (d < 1) throw ConfigError("model: tcn dilation must be >= 1");
    if (mode != Mode::Air && (air_on_features || air_on_predictor || vq_enabled))
        throw ConfigError("model: routing flags require air mode");
    if (mode == Mode::Air && !air_on_features && !air_on_predictor)
        throw ConfigError("model: air mode needs routing on features and/or predictor");
}

int ModelConfig::routed_feature_layers() const {
    switch (arch) {
        case Arch::TsMixer: return blocks * 2;
        case Arch::Tcn: return static_cast<int>(tcn_dilations.size());
        case Arch::ITransformer: return blocks;
    }
    return 0;
}

nlohmann::json ModelConfig::to_json() const {
    return nlohmann::json{{"arch", arch_str(arch)},
                          {"mode", mode_str(mode)},
                          {"lookback", lookback},
                          {"horizon", horizon},
                          {"channels", channels},
                          {"targets", targets},
                          {"latent", latent},
                          {"codebook", codebook},
                          {"blocks", blocks},
                          {"d_model", d_model},
                          {"ffn_hidden", ffn_hidden},
                          {"tcn_hidden", tcn_hidden},
                          {"tcn_kernel", tcn_kernel},
                          {"tcn_dilations", tcn_dilations},
                          {"text_dim", text_dim},
                          {"desc_dim", desc_dim},
                          {"desc_proj", desc_proj},
                          {"gen_hidden", gen_hidden},
                          {"air_on_features", air_on_features},
                          {"air_on_predictor", air_on_predictor},
                          {"vq_enabled", vq_enabled}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.arch = parse_arch(j.at("arch").get<std::string>());
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.lookback = j.at("lookback").get<int>();
    c.horizon = j.at("horizon").get<int>();
    c.channels = j.at("channels").get<int>();
    c.targets = j.at("targets").get<std::vector<int>>();
    c.latent = j.at("latent").get<int>();
    c.codebook = j.at("codebook").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.ffn_hidden = j.at("ffn_hidden").get<int>();
    c.tcn_hidden = j.at("tcn_hidden").get<int>();
    c.tcn_kernel = j.at("tcn_kernel").get<int>();
    c.tcn_dilations = j.at("tcn_dilations").get<std::vector<int>>();
    c.text_dim = j.at("text_dim").get<int>();
    c.desc_dim = j.at("desc_dim").get<int>();
    c.desc_proj = j.at("desc_proj").get<int>();
    c.gen_hidden = j.at("gen_hidden").get<int>();
    c.air_on_features = j.at("air_on_features").get<bool>();
    c.air_on_predictor = j.at("air_on_predictor").get<bool>();
    c.vq_enabled = j.at("vq_enabled").get<bool>();
    c.validate();
    return c;
}

Graph::Ref fc_apply(Graph& g, FcVar& fc, Graph::Ref x, std::optional<Graph::Ref> r, FcLayout layout) {
    if (std::holds_alternative<Dense>(fc)) {
        if (r) throw ContractError("routing weights supplied to an unrouted layer");
        Dense& d = std::get<Dense>(fc);
        switch (layout) {
            case FcLayout::Vec: return dense_vec(g, d, x);
            case FcLayout::Rows: return dense_rows(g, d, x);
            case FcLayout::Cols: return dense_cols(g, d, x);
        }
    }
    if (!r) throw ContractError("routed layer called without routing weights");
    RoutedDense& d = std::get<RoutedDense>(fc);
    switch (layout) {
        case FcLayout::Vec: return routed_dense_vec(g, d, x, *r);
        case FcLayout::Rows: return routed_dense_rows(g, d, x, *r);
        case FcLayout::Cols: return routed_dense_cols(g, d, x, *r);
    }
    throw ContractError("unreachable fc layout");
}

DescFusion::DescFusion(int lookback, int desc_dim, int desc_proj, Rng& rng) {
    proj_w = xavier_uniform({desc_proj, desc_dim}, desc_dim, desc_proj, rng);
    proj_b = Tensor({desc_proj});
    proj_b.requires_grad = true;
    // Identity on the series block, zeros on the description block: fused
    // output starts exactly equal to the input series.
    fc_w = Tensor({lookback, lookback + desc_proj});
    for (int t = 0; t < lookback; ++t) fc_w.at(t, t) = 1.0;
    fc_w.requires_grad = true;
    fc_b = Tensor({lookback});
    fc_b.requires_grad = true;
}

Graph::Ref fuse_channel_descriptions(Graph& g, DescFusion& f, Graph::Ref x, Graph::Ref desc) {
    const Shape& xs = g.shape(x);
    const Shape& ds = g.shape(desc);
    if (xs.size() != 2 || ds.size() != 2 || xs[0] != ds[0])
        throw DimensionError("fuse: series " + shape_str(xs) + " and descriptions " + shape_str(ds) +
                             " must share the channel count");
    Graph::Ref proj = g.add_rowwise(g.matmul(desc, g.transpose(g.param(f.proj_w))), g.param(f.proj_b));
    Graph::Ref joined = g.concat_last_axis({x, proj});  // [C, lookback+desc_proj]
    return g.add_rowwise(g.matmul(joined, g.transpose(g.param(f.fc_w))), g.param(f.fc_b));
}

TextFusion::TextFusion(int text_dim, int hidden, int out, Rng& rng) {
    w1 = xavier_uniform({hidden, 2 * text_dim}, 2 * text_dim, hidden, rng);
    b1 = Tensor({hidden});
    b1.requires_grad = true;
    w2 = Tensor({out, hidden});
    w2.requires_grad = true;
    b2 = Tensor({out});
    b2.requires_grad = true;
}

Graph::Ref timemmd_fuse(Graph& g, TextFusion& f, Graph::Ref base_pred,
                        const std::vector<double>& e_kd, const std::vector<double>& e_ol) {
    const int dim2 = f.w1.shape[1];
    if (static_cast<int>(e_kd.size() + e_ol.size()) != dim2)
        throw DimensionError("timemmd_fuse: embeddings total " +
                             std::to_string(e_kd.size() + e_ol.size()) + ", expected " +
                             std::to_string(dim2));
    std::vector<double> joined = e_kd;
    joined.insert(joined.end(), e_ol.begin(), e_ol.end());
    Graph::Ref e = g.input({dim2}, std::move(joined));
    Graph::Ref h = g.relu(g.add(g.matvec(g.param(f.w1), e), g.param(f.b1)));
    Graph::Ref proj = g.add(g.matvec(g.param(f.w2), h), g.param(f.b2));
    const Shape& ps = g.shape(base_pred);
    return g.add(base_pred, g.reshape(proj, ps));
}

namespace {

std::optional<Graph::Ref> pick_routing(const std::vector<Graph::Ref>* r, size_t idx, const char* what) {
    if (!r) return std::nullopt;
    if (idx >= r->size())
        throw ContractError(std::string("missing ") + what + " routing vector " + std::to_string(idx));
    return (*r)[idx];
}

Graph::Ref stack_target_rows(Graph& g, const std::vector<Graph::Ref>& rows, int horizon) {
    Graph::Ref flat = g.concat_last_axis(rows);
    return g.reshape(flat, {static_cast<int>(rows.size()), horizon});
}

}  // namespace

Graph::Ref tsmixer_forward(Graph& g, TsMixerNet& net, Graph::Ref x,
                           const std::vector<Graph::Ref>* r_features,
                           const std::vector<Graph::Ref>* r_predictor) {
    size_t ri = 0;
    Graph::Ref cur = x;
    for (auto& block : net.blocks) {
        Graph::Ref tm = g.relu(fc_apply(g, block.time_mix, cur, pick_routing(r_features, ri++, "feature"),
                                        FcLayout::Rows));
        cur = g.add(cur, tm);
        Graph::Ref fm = g.relu(fc_apply(g, block.feat_mix, cur, pick_routing(r_features, ri++, "feature"),
                                        FcLayout::Cols));
        cur = g.add(cur, fm);
    }
    std::vector<Graph::Ref> rows;
    rows.reserve(net.heads.size());
    int horizon = 0;
    for (size_t t = 0; t < net.heads.size(); ++t) {
        Graph::Ref series = g.select_row(cur, net.target_rows[t]);
        Graph::Ref h = fc_apply(g, net.heads[t], series, pick_routing(r_predictor, t, "predictor"),
                                FcLayout::Vec);
        horizon = g.shape(h)[0];
        rows.push_back(h);
    }
    return stack_target_rows(g, rows, horizon);
}

Graph::Ref tcn_forward(Graph& g, TcnNet& net, Graph::Ref x,
                       const std::vector<Graph::Ref>* r_features,
                       const std::vector<Graph::Ref>* r_predictor) {
    Graph::Ref cur = conv1d(g, net.input_proj, x);
    size_t ri = 0;
    for (auto& block : net.blocks) {
        Graph::Ref conv_out;
        std::optional<Graph::Ref> r = pick_routing(r_features, ri++, "feature");
        if (std::holds_alternative<Conv1d>(block)) {
            if (r) throw ContractError("routing weights supplied to an unrouted conv layer");
            conv_out = conv1d(g, std::get<Conv1d>(block), cur);
        } else {
            if (!r) throw ContractError("routed conv layer called without routing weights");
            conv_out = routed_conv_forward(g, std::get<RoutedConv1d>(block), cur, *r);
        }
        cur = g.add(cur, g.relu(conv_out));
    }
    const int t_len = g.shape(cur)[1];
    Graph::Ref last = g.select_col(cur, t_len - 1);  // [hidden]
    std::vector<Graph::Ref> rows;
    rows.reserve(net.heads.size());
    int horizon = 0;
    for (size_t t = 0; t < net.heads.size(); ++t) {
        Graph::Ref h = fc_apply(g, net.heads[t], last, pick_routing(r_predictor, t, "predictor"),
                                FcLayout::Vec);
        horizon = g.shape(h)[0];
        rows.push_back(h);
    }
    return stack_target_rows(g, rows, horizon);
}

Graph::Ref itransformer_forward(Graph& g, ITransformerNet& net, Graph::Ref x,
                                const std::vector<Graph::Ref>* r_features,
                                const std::vector<Graph::Ref>* r_predictor) {
    Graph::Ref tokens = dense_rows(g, net.embed, x);  // [C, d_model]
    size_t ri = 0;
    for (auto& block : net.blocks) {
        Graph::Ref attn_out;
        std::optional<Graph::Ref> r = pick_routing(r_features, ri++, "feature");
        if (std::holds_alternative<SelfAttention>(block.attn)) {
            if (r) throw ContractError("routing weights supplied to an unrouted attention layer");
            attn_out = self_attention_forward(g, std::get<SelfAttention>(block.attn), tokens);
        } else {
            if (!r) throw ContractError("routed attention layer called without routing weights");
            attn_out = routed_latent_attention_forward(g, std::get<RoutedLatentAttention>(block.attn),
                                                       tokens, *r)
                           .output;
        }
        tokens = g.add(tokens, attn_out);
        Graph::Ref f = dense_rows(g, block.ffn2, g.relu(dense_rows(g, block.ffn1, tokens)));
        tokens = g.add(tokens, f);
    }
    std::vector<Graph::Ref> rows;
    rows.reserve(net.heads.size());
    int horizon = 0;
    for (size_t t = 0; t < net.heads.size(); ++t) {
        Graph::Ref tok = g.select_row(tokens, net.target_rows[t]);
        Graph::Ref h = fc_apply(g, net.heads[t], tok, pick_routing(r_predictor, t, "predictor"),
                                FcLayout::Vec);
        horizon = g.shape(h)[0];
        rows.push_back(h);
    }
    return stack_target_rows(g, rows, horizon);
}

ForecastModel::ForecastModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
    cfg_.validate();
    Rng rng(seed_);
    const bool air = cfg_.mode == Mode::Air;
    const bool feats_routed = air && cfg_.air_on_features;
    const bool pred_routed = air && cfg_.air_on_predictor;

    auto make_fc = [&](int in, int out, bool routed) -> FcVar {
        if (routed) return RoutedDense(in, out, cfg_.latent, rng);
        return Dense(in, out, rng);
    };

    switch (cfg_.arch) {
        case Arch::TsMixer: {
            tsmixer = std::make_unique<TsMixerNet>();
            for (int b = 0; b < cfg_.blocks; ++b) {
                TsMixerNet::Block block;
                block.time_mix = make_fc(cfg_.lookback, cfg_.lookback, feats_routed);
                block.feat_mix = make_fc(cfg_.channels, cfg_.channels, feats_routed);
                tsmixer->blocks.push_back(std::move(block));
            }
            for (int t : cfg_.targets) {
                tsmixer->heads.push_back(make_fc(cfg_.lookback, cfg_.horizon, pred_routed));
                tsmixer->target_rows.push_back(t);
            }
            break;
        }
        case Arch::Tcn: {
            tcn = std::make_unique<TcnNet>();
            tcn->input_proj = Conv1d(cfg_.channels, cfg_.tcn_hidden, 1, 1, rng);
            for (int d : cfg_.tcn_dilations) {
                if (feats_routed)
                    tcn->blocks.emplace_back(
                        RoutedConv1d(cfg_.tcn_hidden, cfg_.tcn_hidden, cfg_.tcn_kernel, d, cfg_.latent, rng));
                else
                    tcn->blocks.emplace_back(Conv1d(cfg_.tcn_hidden, cfg_.tcn_hidden, cfg_.tcn_kernel, d, rng));
            }
            for (size_t t = 0; t < cfg_.targets.size(); ++t)
                tcn->heads.push_back(make_fc(cfg_.tcn_hidden, cfg_.horizon, pred_routed));
            break;
        }
        case Arch::ITransformer: {
            itransformer = std::make_unique<ITransformerNet>();
            itransformer->embed = Dense(cfg_.lookback, cfg_.d_model, rng);
            for (int b = 0; b < cfg_.blocks; ++b) {
                ITransformerNet::Block block;
                if (feats_routed)
                    block.attn = RoutedLatentAttention(cfg_.d_model, cfg_.d_model, cfg_.d_model,
                                                       cfg_.latent, rng);
                else
                    block.attn = SelfAttention(cfg_.d_model, cfg_.d_model, cfg_.d_model, rng);
                block.ffn1 = Dense(cfg_.d_model, cfg_.ffn_hidden, rng);
                block.ffn2 = Dense(cfg_.ffn_hidden, cfg_.d_model, rng);
                itransformer->blocks.push_back(std::move(block));
            }
            for (int t : cfg_.targets) {
                itransformer->heads.push_back(make_fc(cfg_.d_model, cfg_.horizon, pred_routed));
                itransformer->target_rows.push_back(t);
            }
            break;
        }
    }

    if (air) {
        fusion = std::make_unique<DescFusion>(cfg_.lookback, cfg_.desc_dim, cfg_.desc_proj, rng);
        if (feats_routed)
            kd_router = std::make_unique<RoutingModule>(cfg_.text_dim, cfg_.gen_hidden, cfg_.latent,
                                                        cfg_.codebook, cfg_.routed_feature_layers(),
                                                        rng.next());
        if (pred_routed)
            ol_router = std::make_unique<RoutingModule>(cfg_.text_dim, cfg_.gen_hidden, cfg_.latent,
                                                        cfg_.codebook,
                                                        static_cast<int>(cfg_.targets.size()),
                                                        rng.next());
    }
    if (cfg_.mode == Mode::TimeMmd)
        text_fusion = std::make_unique<TextFusion>(
            cfg_.text_dim, 256, static_cast<int>(cfg_.targets.size()) * cfg_.horizon, rng);
}

void ForecastModel::check_sample(const WindowSample& sample) const {
    if (sample.x.shape != Shape{cfg_.channels, cfg_.lookback})
        throw ContractError("sample lookback shape " + shape_str(sample.x.shape) + ", model expects " +
                            shape_str({cfg_.channels, cfg_.lookback}));
    if (cfg_.mode == Mode::Air || cfg_.mode == Mode::TimeMmd) {
        if (static_cast<int>(sample.key_driver.size()) != cfg_.text_dim ||
            static_cast<int>(sample.outlook.size()) != cfg_.text_dim)
            throw ContractError("sample embeddings do not match configured text_dim " +
                                std::to_string(cfg_.text_dim));
    }
    if (cfg_.mode == Mode::Air) {
        if (sample.descriptions.shape != Shape{cfg_.channels, cfg_.desc_dim})
            throw ContractError("sample descriptions shape " + shape_str(sample.descriptions.shape) +
                                ", model expects " + shape_str({cfg_.channels, cfg_.desc_dim}));
    }
}

ForecastModel::Output ForecastModel::run(Graph& g, const WindowSample& sample) {
    check_sample(sample);
    Output out;
    out.codebook_loss = g.constant(0.0);
    out.commit_loss = g.constant(0.0);

    Graph::Ref x = g.input(sample.x);
    std::vector<Graph::Ref> r_feats, r_pred;
    const std::vector<Graph::Ref>* r_feats_ptr = nullptr;
    const std::vector<Graph::Ref>* r_pred_ptr = nullptr;

    if (cfg_.mode == Mode::Air) {
        x = fuse_channel_descriptions(g, *fusion, x, g.input(sample.descriptions));
        if (kd_router) {
            RoutingOutput ro = kd_router->route(g, sample.key_driver, cfg_.vq_enabled);
            r_feats = ro.weights;
            r_feats_ptr = &r_feats;
            out.codebook_loss = g.add(out.codebook_loss, ro.codebook_loss);
            out.commit_loss = g.add(out.commit_loss, ro.commit_loss);
        }
        if (ol_router) {
            RoutingOutput ro = ol_router->route(g, sample.outlook, cfg_.vq_enabled);
            r_pred = ro.weights;
            r_pred_ptr = &r_pred;
            out.codebook_loss = g.add(out.codebook_loss, ro.codebook_loss);
            out.commit_loss = g.add(out.commit_loss, ro.commit_loss);
        }
        out.has_vq = cfg_.vq_enabled;
    }

    Graph::Ref pred;
    switch (cfg_.arch) {
        case Arch::TsMixer: pred = tsmixer_forward(g, *tsmixer, x, r_feats_ptr, r_pred_ptr); break;
        case Arch::Tcn: pred = tcn_forward(g, *tcn, x, r_feats_ptr, r_pred_ptr); break;
        case Arch::ITransformer:
            pred = itransformer_forward(g, *itransformer, x, r_feats_ptr, r_pred_ptr);
            break;
    }
    if (cfg_.mode == Mode::TimeMmd)
        pred = timemmd_fuse(g, *text_fusion, pred, sample.key_driver, sample.outlook);
    out.prediction = pred;
    return out;
}

Forecast ForecastModel::predict(const WindowSample& sample) {
    Graph g;
    Output o = run(g, sample);
    Forecast f;
    f.values = g.tensor(o.prediction);
    f.origin = sample.origin;
    f.model_id = cfg_.model_id();
    f.seed = seed_;
    return f;
}

namespace {

void add_fc_params(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& prefix, FcVar& fc) {
    if (std::holds_alternative<Dense>(fc)) {
        Dense& d = std::get<Dense>(fc);
        out.emplace_back(prefix + ".w", &d.w);
        out.emplace_back(prefix + ".b", &d.b);
    } else {
        RoutedDense& d = std::get<RoutedDense>(fc);
        out.emplace_back(prefix + ".w1", &d.w1);
        out.emplace_back(prefix + ".b1", &d.b1);
        out.emplace_back(prefix + ".w2", &d.w2);
        out.emplace_back(prefix + ".b2", &d.b2);
    }
}

void add_conv_params(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& prefix,
                     ConvVar& c) {
    if (std::holds_alternative<Conv1d>(c)) {
        Conv1d& p = std::get<Conv1d>(c);
        out.emplace_back(prefix + ".kernels", &p.kernels);
        out.emplace_back(prefix + ".bias", &p.bias);
    } else {
        RoutedConv1d& p = std::get<RoutedConv1d>(c);
        out.emplace_back(prefix + ".k_in", &p.k_in);
        out.emplace_back(prefix + ".b_in", &p.b_in);
        out.emplace_back(prefix + ".k_out", &p.k_out);
        out.emplace_back(prefix + ".b_out", &p.b_out);
    }
}

void add_attn_params(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& prefix,
                     AttnVar& a) {
    if (std::holds_alternative<SelfAttention>(a)) {
        SelfAttention& p = std::get<SelfAttention>(a);
        out.emplace_back(prefix + ".wq", &p.wq);
        out.emplace_back(prefix + ".wk", &p.wk);
        out.emplace_back(prefix + ".wv", &p.wv);
        out.emplace_back(prefix + ".wo", &p.wo);
    } else {
        RoutedLatentAttention& p = std::get<RoutedLatentAttention>(a);
        out.emplace_back(prefix + ".latents", &p.latents);
        out.emplace_back(prefix + ".wq", &p.wq);
        out.emplace_back(prefix + ".wk", &p.wk);
        out.emplace_back(prefix + ".wv", &p.wv);
        out.emplace_back(prefix + ".wo", &p.wo);
    }
}

void add_router_params(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& prefix,
                       RoutingModule& r) {
    out.emplace_back(prefix + ".trunk_w1", &r.generator.trunk_w1);
    out.emplace_back(prefix + ".trunk_b1", &r.generator.trunk_b1);
    out.emplace_back(prefix + ".trunk_w2", &r.generator.trunk_w2);
    out.emplace_back(prefix + ".trunk_b2", &r.generator.trunk_b2);
    for (size_t h = 0; h < r.generator.head_w.size(); ++h) {
        out.emplace_back(prefix + ".head" + std::to_string(h) + "_w", &r.generator.head_w[h]);
        out.emplace_back(prefix + ".head" + std::to_string(h) + "_b", &r.generator.head_b[h]);
    }
    out.emplace_back(prefix + ".codebook", &r.codebook.entries);
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> ForecastModel::named_parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    if (tsmixer) {
        for (size_t b = 0; b < tsmixer->blocks.size(); ++b) {
            add_fc_params(out, "tsmixer.block" + std::to_string(b) + ".time", tsmixer->blocks[b].time_mix);
            add_fc_params(out, "tsmixer.block" + std::to_string(b) + ".feat", tsmixer->blocks[b].feat_mix);
        }
        for (size_t t = 0; t < tsmixer->heads.size(); ++t)
            add_fc_params(out, "tsmixer.head" + std::to_string(t), tsmixer->heads[t]);
    }
    if (tcn) {
        out.emplace_back("tcn.input_proj.kernels", &tcn->input_proj.kernels);
        out.emplace_back("tcn.input_proj.bias", &tcn->input_proj.bias);
        for (size_t b = 0; b < tcn->blocks.size(); ++b)
            add_conv_params(out, "tcn.block" + std::to_string(b), tcn->blocks[b]);
        for (size_t t = 0; t < tcn->heads.size(); ++t)
            add_fc_params(out, "tcn.head" + std::to_string(t), tcn->heads[t]);
    }
    if (itransformer) {
        out.emplace_back("itr.embed.w", &itransformer->embed.w);
        out.emplace_back("itr.embed.b", &itransformer->embed.b);
        for (size_t b = 0; b < itransformer->blocks.size(); ++b) {
            const std::string prefix = "itr.block" + std::to_string(b);
            add_attn_params(out, prefix + ".attn", itransformer->blocks[b].attn);
            out.emplace_back(prefix + ".ffn1.w", &itransformer->blocks[b].ffn1.w);
            out.emplace_back(prefix + ".ffn1.b", &itransformer->blocks[b].ffn1.b);
            out.emplace_back(prefix + ".ffn2.w", &itransformer->blocks[b].ffn2.w);
            out.emplace_back(prefix + ".ffn2.b", &itransformer->blocks[b].ffn2.b);
        }
        for (size_t t = 0; t < itransformer->heads.size(); ++t)
            add_fc_params(out, "itr.head" + std::to_string(t), itransformer->heads[t]);
    }
    if (fusion) {
        out.emplace_back("fusion.proj_w", &fusion->proj_w);
        out.emplace_back("fusion.proj_b", &fusion->proj_b);
        out.emplace_back("fusion.fc_w", &fusion->fc_w);
        out.emplace_back("fusion.fc_b", &fusion->fc_b);
    }
    if (kd_router) add_router_params(out, "kd_router", *kd_router);
    if (ol_router) add_router_params(out, "ol_router", *ol_router);
    if (text_fusion) {
        out.emplace_back("text_fusion.w1", &text_fusion->w1);
        out.emplace_back("text_fusion.b1", &text_fusion->b1);
        out.emplace_back("text_fusion.w2", &text_fusion->w2);
        out.emplace_back("text_fusion.b2", &text_fusion->b2);
    }
    return out;
}

std::vector<Tensor*> ForecastModel::parameters() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

std::int64_t ForecastModel::parameter_count() {
    std::int64_t n = 0;
    for (Tensor* t : parameters()) n += t->numel();
    return n;
}

namespace {

void append_le_double(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_le_double(const char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

}  // namespace

void ForecastModel::save(const std::filesystem::path& path) {
    nlohmann::json header;
    header["format"] = "air.ckpt.v1";
    header["config"] = cfg_.to_json();
    header["seed"] = seed_;
    nlohmann::json manifest = nlohmann::json::array();
    std::string payload;
    for (auto& [name, t] : named_parameters()) {
        manifest.push_back({{"name", name}, {"shape", t->shape}});
        for (double v : t->values) append_le_double(payload, v);
    }
    header["params"] = manifest;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << header.dump() << '\n';
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

ForecastModel ForecastModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line)) throw DataError("checkpoint missing header: " + path.string());
    nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
    if (header.is_discarded() || header.value("format", "") != "air.ckpt.v1")
        throw DataError("unrecognized checkpoint format in " + path.string());
    ModelConfig cfg = ModelConfig::from_json(header.at("config"));
    ForecastModel model(cfg, header.at("seed").get<std::uint64_t>());
    auto params = model.named_parameters();
    const auto& manifest = header.at("params");
    if (manifest.size() != params.size())
        throw DataError("checkpoint manifest has " + std::to_string(manifest.size()) +
                        " entries, model has " + std::to_string(params.size()));
    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    size_t off = 0;
    for (size_t i = 0; i < params.size(); ++i) {
        auto& [name, t] = params[i];
        if (manifest[i].at("name").get<std::string>() != name)
            throw DataError("checkpoint parameter order mismatch at '" + name + "'");
        if (manifest[i].at("shape").get<Shape>() != t->shape)
            throw DataError("checkpoint shape mismatch for '" + name + "'");
        const size_t bytes = t->values.size() * 8;
        if (off + bytes > payload.size()) throw DataError("checkpoint payload truncated");
        for (size_t j = 0; j < t->values.size(); ++j)
            t->values[j] = read_le_double(payload.data() + off + j * 8);
        off += bytes;
    }
    if (off != payload.size()) throw DataError("checkpoint payload has trailing bytes");
    return model;
}

}  // namespace air

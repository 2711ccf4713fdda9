#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "air/dataplane.hpp"
#include "air/layers.hpp"
#include "air/routing.hpp"
#include "air/tensor.hpp"

namespace air {

enum class Arch { TsMixer, Tcn, ITransformer };
enum class Mode { Vanilla, Air, TimeMmd };

std::string arch_str(Arch a);
std::string mode_str(Mode m);
Arch parse_arch(const std::string& s);
Mode parse_mode(const std::string& s);

struct ModelConfig {
    Arch arch = Arch::TsMixer;
    Mode mode = Mode::Vanilla;
    int lookback = 20;
    int horizon = 20;
    int channels = 0;
    std::vector<int> targets;
    int latent = 32;    // routed-layer latent width L
    int codebook = 16;  // VQ entries K
    int blocks = 2;
    int d_model = 64;        // itransformer token width
    int ffn_hidden = 64;     // itransformer feed-forward width
    int tcn_hidden = 32;
    int tcn_kernel = 3;
    std::vector<int> tcn_dilations{1, 2, 4};
    int text_dim = 4096;     // key-driver/outlook embedding length
    int desc_dim = 4096;     // channel-description embedding length
    int desc_proj = 16;      // description projection width before fusion
    int gen_hidden = 256;    // routing weight-generator hidden width
    bool air_on_features = true;
    bool air_on_predictor = true;
    bool vq_enabled = true;

    void validate() const;  // throws ConfigError
    int routed_feature_layers() const;
    std::string model_id() const { return mode_str(mode) + "-" + arch_str(arch); }
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

using FcVar = std::variant<Dense, RoutedDense>;
using ConvVar = std::variant<Conv1d, RoutedConv1d>;
using AttnVar = std::variant<SelfAttention, RoutedLatentAttention>;

enum class FcLayout { Vec, Rows, Cols };

// Applies a (possibly routed) FC layer; the routing argument must be present
// exactly when the layer is routed.
Graph::Ref fc_apply(Graph& g, FcVar& fc, Graph::Ref x, std::optional<Graph::Ref> r, FcLayout layout);

// Per-channel integration of description embeddings: shared projection to a
// small vector, concatenation with the channel's lookback, shared FC back to
// the lookback length. Initialized as an exact identity on the series block.
struct DescFusion {
    Tensor proj_w;  // [desc_proj, desc_dim]
    Tensor proj_b;  // [desc_proj]
    Tensor fc_w;    // [lookback, lookback + desc_proj]
    Tensor fc_b;    // [lookback]

    DescFusion() = default;
    DescFusion(int lookback, int desc_dim, int desc_proj, Rng& rng);
    std::vector<Tensor*> parameters() { return {&proj_w, &proj_b, &fc_w, &fc_b}; }
};

Graph::Ref fuse_channel_descriptions(Graph& g, DescFusion& f, Graph::Ref x, Graph::Ref desc);

// Additive text correction head: concatenated key-driver and outlook
// embeddings through an MLP onto the forecast, zero-initialized so training
// starts at the base model's output.
struct TextFusion {
    Tensor w1;  // [hidden, 2*text_dim]
    Tensor b1;  // [hidden]
    Tensor w2;  // [targets*horizon, hidden], zero-init
    Tensor b2;  // [targets*horizon], zero-init

    TextFusion() = default;
    TextFusion(int text_dim, int hidden, int out, Rng& rng);
    std::vector<Tensor*> parameters() { return {&w1, &b1, &w2, &b2}; }
};

Graph::Ref timemmd_fuse(Graph& g, TextFusion& f, Graph::Ref base_pred,
                        const std::vector<double>& e_kd, const std::vector<double>& e_ol);

struct TsMixerNet {
    struct Block {
        FcVar time_mix;  // lookback -> lookback, per channel row
        FcVar feat_mix;  // channels -> channels, per time column
    };
    std::vector<Block> blocks;
    std::vector<FcVar> heads;      // per target: lookback -> horizon
    std::vector<int> target_rows;  // channel index each head reads
};

struct TcnNet {
    Conv1d input_proj;            // 1x1 channel embedding
    std::vector<ConvVar> blocks;  // width-k residual blocks, one per dilation
    std::vector<FcVar> heads;     // per target: hidden -> horizon
};

struct ITransformerNet {
    Dense embed;  // lookback -> d_model, shared across variates
    struct Block {
        AttnVar attn;
        Dense ffn1, ffn2;
    };
    std::vector<Block> blocks;
    std::vector<FcVar> heads;      // per target: d_model -> horizon
    std::vector<int> target_rows;  // variate token each head reads
};

// Routing per forward pass: one weight vector per routed feature layer and
// one per predictor head. Null pointers mean "unrouted".
Graph::Ref tsmixer_forward(Graph& g, TsMixerNet& net, Graph::Ref x,
                           const std::vector<Graph::Ref>* r_features,
                           const std::vector<Graph::Ref>* r_predictor);
Graph::Ref tcn_forward(Graph& g, TcnNet& net, Graph::Ref x,
                       const std::vector<Graph::Ref>* r_features,
                       const std::vector<Graph::Ref>* r_predictor);
Graph::Ref itransformer_forward(Graph& g, ITransformerNet& net, Graph::Ref x,
                                const std::vector<Graph::Ref>* r_features,
                                const std::vector<Graph::Ref>* r_predictor);

struct Forecast {
    Tensor values;  // [targets, horizon], normalized space
    Date origin;
    std::string model_id;
    std::uint64_t seed = 0;
};

class ForecastModel {
public:
    ForecastModel(ModelConfig cfg, std::uint64_t seed);

    struct Output {
        Graph::Ref prediction;     // [targets, horizon]
        Graph::Ref codebook_loss;  // scalar, zero unless VQ active
        Graph::Ref commit_loss;    // scalar, zero unless VQ active
        bool has_vq = false;
    };

    // Builds the forward pass for one sample on the caller's graph.
    Output run(Graph& g, const WindowSample& sample);

    // Convenience inference wrapper.
    Forecast predict(const WindowSample& sample);

    const ModelConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }

    std::vector<std::pair<std::string, Tensor*>> named_parameters();
    std::vector<Tensor*> parameters();
    std::int64_t parameter_count();

    void save(const std::filesystem::path& path);
    static ForecastModel load(const std::filesystem::path& path);

    // Architecture internals, exposed for white-box construction in tests.
    std::unique_ptr<TsMixerNet> tsmixer;
    std::unique_ptr<TcnNet> tcn;
    std::unique_ptr<ITransformerNet> itransformer;
    std::unique_ptr<DescFusion> fusion;        // air mode
    std::unique_ptr<RoutingModule> kd_router;  // air mode, feature routing
    std::unique_ptr<RoutingModule> ol_router;  // air mode, predictor routing
    std::unique_ptr<TextFusion> text_fusion;   // timemmd mode

private:
    void check_sample(const WindowSample& sample) const;

    ModelConfig cfg_;
    std::uint64_t seed_ = 0;
};

}  // namespace air

#pragma once

#include <utility>
#include <vector>

#include "air/tensor.hpp"

namespace air {

// Plain fully connected layer, y = W x + b.
struct Dense {
    Tensor w;  // [out, in]
    Tensor b;  // [out]

    Dense() = default;
    Dense(int in, int out, Rng& rng);
    std::vector<Tensor*> parameters() { return {&w, &b}; }
};

Graph::Ref dense_vec(Graph& g, Dense& d, Graph::Ref x);             // x:[in] -> [out]
Graph::Ref dense_rows(Graph& g, Dense& d, Graph::Ref x);            // x:[R,in] -> [R,out]
Graph::Ref dense_cols(Graph& g, Dense& d, Graph::Ref x);            // x:[in,C] -> [out,C]

// Fully connected layer factored through a gateable latent:
//   y = W2 (r ⊙ (W1 x + b1)) + b2
// so the effective linear map under routing r is W2 diag(r) W1 (rank <= latent).
struct RoutedDense {
    Tensor w1;  // [latent, in]
    Tensor b1;  // [latent]
    Tensor w2;  // [out, latent]
    Tensor b2;  // [out]

    RoutedDense() = default;
    RoutedDense(int in, int out, int latent, Rng& rng);
    int latent() const { return w1.shape.empty() ? 0 : w1.shape[0]; }
    std::vector<Tensor*> parameters() { return {&w1, &b1, &w2, &b2}; }
};

Graph::Ref routed_dense_vec(Graph& g, RoutedDense& d, Graph::Ref x, Graph::Ref r);
Graph::Ref routed_dense_rows(Graph& g, RoutedDense& d, Graph::Ref x, Graph::Ref r);
Graph::Ref routed_dense_cols(Graph& g, RoutedDense& d, Graph::Ref x, Graph::Ref r);

// Dense-form collapse of a routed dense layer under fixed routing weights:
// returns (W2 diag(r) W1, W2 (r ⊙ b1) + b2). Off-graph; used as an oracle.
std::pair<Tensor, Tensor> collapse_to_dense(const RoutedDense& d, const std::vector<double>& r);

// Plain causal dilated conv layer with per-output-channel bias.
struct Conv1d {
    Tensor kernels;  // [c_out, c_in, k]
    Tensor bias;     // [c_out]
    int dilation = 1;

    Conv1d() = default;
    Conv1d(int c_in, int c_out, int k, int dilation, Rng& rng);
    std::vector<Tensor*> parameters() { return {&kernels, &bias}; }
};

Graph::Ref conv1d(Graph& g, Conv1d& c, Graph::Ref x);  // x:[c_in,T] -> [c_out,T]

// Causal conv factored through latent channels: a width-k input convolution
// into `latent` channels, channelwise gating by r, then a 1x1 output
// convolution back to c_out channels.
struct RoutedConv1d {
    Tensor k_in;   // [latent, c_in, k]
    Tensor b_in;   // [latent]
    Tensor k_out;  // [c_out, latent, 1]
    Tensor b_out;  // [c_out]
    int dilation = 1;

    RoutedConv1d() = default;
    RoutedConv1d(int c_in, int c_out, int k, int dilation, int latent, Rng& rng);
    int latent() const { return k_in.shape.empty() ? 0 : k_in.shape[0]; }
    std::vector<Tensor*> parameters() { return {&k_in, &b_in, &k_out, &b_out}; }
};

Graph::Ref routed_conv_forward(Graph& g, RoutedConv1d& c, Graph::Ref x, Graph::Ref r);

// Plain single-head self-attention over token rows.
struct SelfAttention {
    Tensor wq, wk, wv;  // [d_in, d]
    Tensor wo;          // [d, d_out]

    SelfAttention() = default;
    SelfAttention(int d_in, int d, int d_out, Rng& rng);
    int inner_dim() const { return wq.shape.size() < 2 ? 0 : wq.shape[1]; }
    std::vector<Tensor*> parameters() { return {&wq, &wk, &wv, &wo}; }
};

Graph::Ref self_attention_forward(Graph& g, SelfAttention& a, Graph::Ref x);  // x:[N,d_in]

// Attention factored through learnable latents: one attention map from the
// latents (as queries) onto the keys, one from the queries onto the latents
// (as keys). The latent summaries between the two maps are gated by r.
struct RoutedLatentAttention {
    Tensor latents;     // [latent, d]
    Tensor wq, wk, wv;  // [d_in, d]
    Tensor wo;          // [d, d_out]

    RoutedLatentAttention() = default;
    RoutedLatentAttention(int d_in, int d, int d_out, int latent, Rng& rng);
    int latent() const { return latents.shape.empty() ? 0 : latents.shape[0]; }
    int inner_dim() const { return latents.shape.size() < 2 ? 0 : latents.shape[1]; }
    std::vector<Tensor*> parameters() { return {&latents, &wq, &wk, &wv, &wo}; }
};

struct LatentAttentionOut {
    Graph::Ref output;      // [N, d_out]
    Graph::Ref keys_map;    // [latent, N], rows sum to 1
    Graph::Ref queries_map; // [N, latent], rows sum to 1
};

LatentAttentionOut routed_latent_attention_forward(Graph& g, RoutedLatentAttention& a,
                                                   Graph::Ref x, Graph::Ref r);

}  // namespace air

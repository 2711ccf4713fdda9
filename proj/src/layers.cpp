#include "air/layers.hpp"

#include <cmath>

namespace air {

namespace {
Tensor zero_bias(int n) {
    Tensor b({n});
    b.requires_grad = true;
    return b;
}
}  // namespace

Dense::Dense(int in, int out, Rng& rng)
    : w(xavier_uniform({out, in}, in, out, rng)), b(zero_bias(out)) {}

Graph::Ref dense_vec(Graph& g, Dense& d, Graph::Ref x) {
    return g.add(g.matvec(g.param(d.w), x), g.param(d.b));
}

Graph::Ref dense_rows(Graph& g, Dense& d, Graph::Ref x) {
    return g.add_rowwise(g.matmul(x, g.transpose(g.param(d.w))), g.param(d.b));
}

Graph::Ref dense_cols(Graph& g, Dense& d, Graph::Ref x) {
    return g.add_colwise(g.matmul(g.param(d.w), x), g.param(d.b));
}

RoutedDense::RoutedDense(int in, int out, int latent, Rng& rng)
    : w1(xavier_uniform({latent, in}, in, latent, rng)),
      b1(zero_bias(latent)),
      w2(xavier_uniform({out, latent}, latent, out, rng)),
      b2(zero_bias(out)) {}

Graph::Ref routed_dense_vec(Graph& g, RoutedDense& d, Graph::Ref x, Graph::Ref r) {
    Graph::Ref h = g.add(g.matvec(g.param(d.w1), x), g.param(d.b1));
    Graph::Ref gated = g.mul(h, r);
    return g.add(g.matvec(g.param(d.w2), gated), g.param(d.b2));
}

Graph::Ref routed_dense_rows(Graph& g, RoutedDense& d, Graph::Ref x, Graph::Ref r) {
    Graph::Ref h = g.add_rowwise(g.matmul(x, g.transpose(g.param(d.w1))), g.param(d.b1));
    Graph::Ref gated = g.mul_rowwise(h, r);
    return g.add_rowwise(g.matmul(gated, g.transpose(g.param(d.w2))), g.param(d.b2));
}

Graph::Ref routed_dense_cols(Graph& g, RoutedDense& d, Graph::Ref x, Graph::Ref r) {
    Graph::Ref h = g.add_colwise(g.matmul(g.param(d.w1), x), g.param(d.b1));
    Graph::Ref gated = g.mul_colwise(h, r);
    return g.add_colwise(g.matmul(g.param(d.w2), gated), g.param(d.b2));
}

std::pair<Tensor, Tensor> collapse_to_dense(const RoutedDense& d, const std::vector<double>& r) {
    const int latent = d.w1.shape[0];
    const int in = d.w1.shape[1];
    const int out = d.w2.shape[0];
    if (static_cast<int>(r.size()) != latent)
        throw DimensionError("collapse_to_dense: routing length " + std::to_string(r.size()) +
                             ", expected " + std::to_string(latent));
    Tensor w({out, in});
    for (int o = 0; o < out; ++o)
        for (int i = 0; i < in; ++i) {
            double acc = 0.0;
            for (int l = 0; l < latent; ++l)
                acc += d.w2.at(o, l) * r[static_cast<size_t>(l)] * d.w1.at(l, i);
            w.at(o, i) = acc;
        }
    Tensor b({out});
    for (int o = 0; o < out; ++o) {
        double acc = d.b2.at(o);
        for (int l = 0; l < latent; ++l)
            acc += d.w2.at(o, l) * r[static_cast<size_t>(l)] * d.b1.at(l);
        b.at(o) = acc;
    }
    return {std::move(w), std::move(b)};
}

Conv1d::Conv1d(int c_in, int c_out, int k, int dilation_, Rng& rng)
    : kernels(xavier_uniform({c_out, c_in, k}, c_in * k, c_out * k, rng)),
      bias(zero_bias(c_out)),
      dilation(dilation_) {}

Graph::Ref conv1d(Graph& g, Conv1d& c, Graph::Ref x) {
    return g.add_colwise(g.conv1d_causal(x, g.param(c.kernels), c.dilation), g.param(c.bias));
}

RoutedConv1d::RoutedConv1d(int c_in, int c_out, int k, int dilation_, int latent, Rng& rng)
    : k_in(xavier_uniform({latent, c_in, k}, c_in * k, latent * k, rng)),
      b_in(zero_bias(latent)),
      k_out(xavier_uniform({c_out, latent, 1}, latent, c_out, rng)),
      b_out(zero_bias(c_out)),
      dilation(dilation_) {}

Graph::Ref routed_conv_forward(Graph& g, RoutedConv1d& c, Graph::Ref x, Graph::Ref r) {
    Graph::Ref h = g.add_colwise(g.conv1d_causal(x, g.param(c.k_in), c.dilation), g.param(c.b_in));
    Graph::Ref gated = g.mul_colwise(h, r);
    return g.add_colwise(g.conv1d_causal(gated, g.param(c.k_out), 1), g.param(c.b_out));
}

SelfAttention::SelfAttention(int d_in, int d, int d_out, Rng& rng)
    : wq(xavier_uniform({d_in, d}, d_in, d, rng)),
      wk(xavier_uniform({d_in, d}, d_in, d, rng)),
      wv(xavier_uniform({d_in, d}, d_in, d, rng)),
      wo(xavier_uniform({d, d_out}, d, d_out, rng)) {}

Graph::Ref self_attention_forward(Graph& g, SelfAttention& a, Graph::Ref x) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(a.inner_dim()));
    Graph::Ref q = g.matmul(x, g.param(a.wq));
    Graph::Ref k = g.matmul(x, g.param(a.wk));
    Graph::Ref v = g.matmul(x, g.param(a.wv));
    Graph::Ref attn = g.softmax_last_axis(g.scale(g.matmul(q, g.transpose(k)), inv_sqrt_d));
    return g.matmul(g.matmul(attn, v), g.param(a.wo));
}

RoutedLatentAttention::RoutedLatentAttention(int d_in, int d, int d_out, int latent, Rng& rng)
    : latents(normal_init({latent, d}, 0.0, 1.0 / std::sqrt(static_cast<double>(d)), rng)),
      wq(xavier_uniform({d_in, d}, d_in, d, rng)),
      wk(xavier_uniform({d_in, d}, d_in, d, rng)),
      wv(xavier_uniform({d_in, d}, d_in, d, rng)),
      wo(xavier_uniform({d, d_out}, d, d_out, rng)) {}

LatentAttentionOut routed_latent_attention_forward(Graph& g, RoutedLatentAttention& a,
                                                   Graph::Ref x, Graph::Ref r) {
    const Shape& xs = g.shape(x);
    if (xs.size() != 2 || xs[0] < 1)
        throw DimensionError("latent attention: expected [N,d_in] input, got " + shape_str(xs));
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(a.inner_dim()));
    Graph::Ref z = g.param(a.latents);
    Graph::Ref q = g.matmul(x, g.param(a.wq));  // [N,d]
    Graph::Ref k = g.matmul(x, g.param(a.wk));
    Graph::Ref v = g.matmul(x, g.param(a.wv));
    // Latents attend over the keys to build one summary per latent.
    Graph::Ref a1 = g.softmax_last_axis(g.scale(g.matmul(z, g.transpose(k)), inv_sqrt_d));  // [L,N]
    Graph::Ref summaries = g.matmul(a1, v);  // [L,d]
    Graph::Ref gated = g.mul_colwise(summaries, r);
    // Queries attend over the latents to mix the gated summaries.
    Graph::Ref a2 = g.softmax_last_axis(g.scale(g.matmul(q, g.transpose(z)), inv_sqrt_d));  // [N,L]
    Graph::Ref out = g.matmul(g.matmul(a2, gated), g.param(a.wo));
    return {out, a1, a2};
}

}  // namespace air

#pragma once

#include <cstdint>
#include <vector>

#include "air/tensor.hpp"

namespace air {

// MLP that maps a text embedding to per-layer routing logits. One shared
// trunk (embed_dim -> hidden -> hidden, ReLU) feeds one output head per
// routed layer; each head emits `latent` logits.
struct WeightGenerator {
    int embed_dim = 0;
    int hidden = 256;
    int latent = 32;

    Tensor trunk_w1, trunk_b1;  // [hidden, embed_dim], [hidden]
    Tensor trunk_w2, trunk_b2;  // [hidden, hidden], [hidden]
    std::vector<Tensor> head_w;  // per head: [latent, hidden]
    std::vector<Tensor> head_b;  // per head: [latent]

    WeightGenerator() = default;
    WeightGenerator(int embed_dim, int hidden, int latent, int heads, Rng& rng);
    int heads() const { return static_cast<int>(head_w.size()); }
    std::vector<Tensor*> parameters();
};

// Learnable table of routing-logit prototypes.
struct Codebook {
    Tensor entries;  // [K, latent], logit space

    Codebook() = default;
    Codebook(int entries_count, int latent, Rng& rng);  // N(0, 0.5^2) init
    int size() const { return entries.shape.empty() ? 0 : entries.shape[0]; }
    int latent() const { return entries.shape.size() < 2 ? 0 : entries.shape[1]; }
    std::vector<Tensor*> parameters() { return {&entries}; }
};

// Brute-force nearest entry by squared Euclidean distance; ties resolve to
// the lowest index.
int nearest_codebook_entry(const std::vector<double>& z, const Codebook& c);

// Per-head logits on the graph (differentiable through the generator).
std::vector<Graph::Ref> generate_logits(Graph& g, WeightGenerator& gen, Graph::Ref embedding);

struct QuantizeOut {
    Graph::Ref quantized;       // forward value = selected entry; d/dz passes through
    Graph::Ref codebook_loss;   // ||stopgrad(z) - entry||^2, trains the codebook
    Graph::Ref commit_loss;     // ||z - stopgrad(entry)||^2, trains the generator
    int index = -1;
};

QuantizeOut straight_through_quantize(Graph& g, Graph::Ref z, Codebook& codebook);

// Relative weight of the commitment term inside the auxiliary loss
// (aux = codebook_loss + kCommitWeight * commit_loss).
inline constexpr double kCommitWeight = 0.25;

struct RoutingOutput {
    std::vector<Graph::Ref> weights;  // per head: softmax-normalized [latent]
    std::vector<Graph::Ref> logits;   // per head: pre-softmax vector actually used
    std::vector<int> indices;         // per head: chosen codebook entry, -1 if VQ off
    Graph::Ref codebook_loss;         // scalar, 0 when VQ off
    Graph::Ref commit_loss;           // scalar, 0 when VQ off
};

// Full routing pass: embedding -> logits -> (VQ | identity) -> softmax.
RoutingOutput route_weights(Graph& g, WeightGenerator& gen, Codebook& codebook,
                            const std::vector<double>& embedding, bool vq_enabled);

// Generator + codebook for one text stream, serving `heads` routed layers.
struct RoutingModule {
    WeightGenerator generator;
    Codebook codebook;

    RoutingModule(int embed_dim, int hidden, int latent, int codebook_entries, int heads,
                  std::uint64_t seed);
    RoutingOutput route(Graph& g, const std::vector<double>& embedding, bool vq_enabled) {
        return route_weights(g, generator, codebook, embedding, vq_enabled);
    }
    std::vector<Tensor*> parameters();
};

}  // namespace air

#include "air/routing.hpp"

namespace air {

WeightGenerator::WeightGenerator(int embed_dim_, int hidden_, int latent_, int heads, Rng& rng)
    : embed_dim(embed_dim_), hidden(hidden_), latent(latent_) {
    if (embed_dim < 1 || hidden < 1 || latent < 1 || heads < 1)
        throw ConfigError("weight generator: embed_dim/hidden/latent/heads must all be >= 1");
    trunk_w1 = xavier_uniform({hidden, embed_dim}, embed_dim, hidden, rng);
    trunk_b1 = Tensor({hidden});
    trunk_b1.requires_grad = true;
    trunk_w2 = xavier_uniform({hidden, hidden}, hidden, hidden, rng);
    trunk_b2 = Tensor({hidden});
    trunk_b2.requires_grad = true;
    head_w.reserve(static_cast<size_t>(heads));
    head_b.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        head_w.push_back(xavier_uniform({latent, hidden}, hidden, latent, rng));
        Tensor b({latent});
        b.requires_grad = true;
        head_b.push_back(std::move(b));
    }
}

std::vector<Tensor*> WeightGenerator::parameters() {
    std::vector<Tensor*> out{&trunk_w1, &trunk_b1, &trunk_w2, &trunk_b2};
    for (size_t h = 0; h < head_w.size(); ++h) {
        out.push_back(&head_w[h]);
        out.push_back(&head_b[h]);
    }
    return out;
}

Codebook::Codebook(int entries_count, int latent, Rng& rng) {
    if (entries_count < 1) throw ConfigError("codebook: need at least one entry");
    if (latent < 1) throw ConfigError("codebook: latent dimension must be >= 1");
    entries = normal_init({entries_count, latent}, 0.0, 0.5, rng);
}

int nearest_codebook_entry(const std::vector<double>& z, const Codebook& c) {
    const int k = c.size();
    if (k < 1) throw ConfigError("codebook is empty");
    const int l = c.latent();
    if (static_cast<int>(z.size()) != l)
        throw DimensionError("nearest_codebook_entry: vector length " + std::to_string(z.size()) +
                             " does not match codebook latent " + std::to_string(l));
    int best = 0;
    double best_d = 0.0;
    for (int i = 0; i < k; ++i) {
        double d = 0.0;
        for (int j = 0; j < l; ++j) {
            const double diff = z[static_cast<size_t>(j)] - c.entries.at(i, j);
            d += diff * diff;
        }
        if (i == 0 || d < best_d) {
            best = i;
            best_d = d;
        }
    }
    return best;
}

std::vector<Graph::Ref> generate_logits(Graph& g, WeightGenerator& gen, Graph::Ref embedding) {
    const Shape& es = g.shape(embedding);
    if (es.size() != 1 || es[0] != gen.embed_dim)
        throw DimensionError("generate_logits: embedding shape " + shape_str(es) +
                             ", expected [" + std::to_string(gen.embed_dim) + "]");
    Graph::Ref h1 = g.relu(g.add(g.matvec(g.param(gen.trunk_w1), embedding), g.param(gen.trunk_b1)));
    Graph::Ref h2 = g.relu(g.add(g.matvec(g.param(gen.trunk_w2), h1), g.param(gen.trunk_b2)));
    std::vector<Graph::Ref> out;
    out.reserve(gen.head_w.size());
    for (size_t h = 0; h < gen.head_w.size(); ++h)
        out.push_back(g.add(g.matvec(g.param(gen.head_w[h]), h2), g.param(gen.head_b[h])));
    return out;
}

QuantizeOut straight_through_quantize(Graph& g, Graph::Ref z, Codebook& codebook) {
    QuantizeOut out;
    out.index = nearest_codebook_entry(g.val(z), codebook);
    Graph::Ref entry = g.select_row(g.param(codebook.entries), out.index);
    out.quantized = g.straight_through(z, entry);
    Graph::Ref d_cb = g.sub(g.detach(z), entry);
    out.codebook_loss = g.sum(g.mul(d_cb, d_cb));
    Graph::Ref d_cm = g.sub(z, g.detach(entry));
    out.commit_loss = g.sum(g.mul(d_cm, d_cm));
    return out;
}

RoutingOutput route_weights(Graph& g, WeightGenerator& gen, Codebook& codebook,
                            const std::vector<double>& embedding, bool vq_enabled) {
    if (static_cast<int>(embedding.size()) != gen.embed_dim)
        throw DimensionError("route_weights: embedding length " + std::to_string(embedding.size()) +
                             ", expected " + std::to_string(gen.embed_dim));
    Graph::Ref e = g.input({gen.embed_dim}, embedding);
    std::vector<Graph::Ref> logits = generate_logits(g, gen, e);
    RoutingOutput out;
    out.codebook_loss = g.constant(0.0);
    out.commit_loss = g.constant(0.0);
    for (Graph::Ref z : logits) {
        if (vq_enabled) {
            QuantizeOut q = straight_through_quantize(g, z, codebook);
            out.logits.push_back(q.quantized);
            out.indices.push_back(q.index);
            out.codebook_loss = g.add(out.codebook_loss, q.codebook_loss);
            out.commit_loss = g.add(out.commit_loss, q.commit_loss);
        } else {
            out.logits.push_back(z);
            out.indices.push_back(-1);
        }
        out.weights.push_back(g.softmax_last_axis(out.logits.back()));
    }
    return out;
}

RoutingModule::RoutingModule(int embed_dim, int hidden, int latent, int codebook_entries, int heads,
                             std::uint64_t seed) {
    Rng rng(seed);
    generator = WeightGenerator(embed_dim, hidden, latent, heads, rng);
    codebook = Codebook(codebook_entries, latent, rng);
}

std::vector<Tensor*> RoutingModule::parameters() {
    std::vector<Tensor*> out = generator.parameters();
    out.push_back(&codebook.entries);
    return out;
}

}  // namespace air

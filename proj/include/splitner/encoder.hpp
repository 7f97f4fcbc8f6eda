#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "splitner/graph.hpp"
#include "splitner/nn.hpp"
#include "splitner/rng.hpp"

namespace splitner {

// Small trainable contextual encoder: learned token/position/segment
// embeddings, post-layer-norm self-attention blocks with a GELU feed-forward.
struct EncoderConfig {
    int layers = 2;
    int heads = 4;
    int hidden = 128;
    int ff = 512;
    int max_seq_len = 256;
    double dropout = 0.1;
    int vocab_size = 0;

    void validate() const {
        if (layers < 1 || heads < 1 || hidden < heads || ff < 1 || max_seq_len < 2 ||
            vocab_size < 5)
            throw std::runtime_error("encoder config out of range");
        if (hidden % heads != 0)
            throw std::runtime_error("encoder hidden " + std::to_string(hidden) +
                                     " not divisible by heads " + std::to_string(heads));
    }
};

// Runs the encoder over one sequence; returns the [len x hidden] output node.
// Positions with attention==0 are excluded as keys everywhere, which leaves
// the outputs at attended positions identical whether or not padding is
// appended. Dropout draws from `drop_rng` only when train is set.
template <typename T>
typename Graph<T>::Ref encoder_forward(Graph<T>& g, ParamStore<T>& ps, const EncoderConfig& cfg,
                                       const std::vector<int>& ids,
                                       const std::vector<int>& segments,
                                       const std::vector<uint8_t>& attention, bool train,
                                       Rng& drop_rng) {
    cfg.validate();
    const int n = static_cast<int>(ids.size());
    if (n < 1 || n > cfg.max_seq_len)
        throw std::runtime_error("encoder input length " + std::to_string(n) +
                                 " outside [1," + std::to_string(cfg.max_seq_len) + "]");
    if (segments.size() != ids.size() || attention.size() != ids.size())
        throw std::runtime_error("encoder input arrays differ in length");
    const int H = cfg.hidden;
    const T drop = static_cast<T>(cfg.dropout);

    const auto tok = g.param(ps.get("enc.tok.embed", {cfg.vocab_size, H}, Init::kEmbedding));
    const auto pos = g.param(ps.get("enc.pos.embed", {cfg.max_seq_len, H}, Init::kEmbedding));
    const auto seg = g.param(ps.get("enc.seg.embed", {2, H}, Init::kEmbedding));
    std::vector<int> positions(n);
    for (int i = 0; i < n; ++i) positions[i] = i;
    for (int s : segments)
        if (s != 0 && s != 1) throw std::runtime_error("segment ids must be 0 or 1");

    auto x = g.add(g.add(g.embedding(tok, ids), g.embedding(pos, positions)),
                   g.embedding(seg, segments));
    x = g.layer_norm(x, g.param(ps.get("enc.emb_ln.g", {H}, Init::kOne)),
                     g.param(ps.get("enc.emb_ln.b", {H}, Init::kZero)));
    x = g.dropout(x, drop, drop_rng, train);

    // Additive attention bias: masked keys get a large negative score.
    Tensor<T> bias({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            bias.data[static_cast<size_t>(i) * n + j] = attention[j] ? T(0) : T(-1e9);
    const auto mask_bias = g.input(std::move(bias));

    const int dh = H / cfg.heads;
    const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));

    for (int l = 0; l < cfg.layers; ++l) {
        const std::string base = "enc.l" + std::to_string(l) + ".";
        auto lin = [&](const char* wn, const char* bn, int in, int out, auto src) {
            const auto w = g.param(ps.get(base + wn, {in, out}, Init::kGlorot));
            const auto b = g.param(ps.get(base + bn, {out}, Init::kZero));
            return g.add_bias(g.matmul(src, w), b);
        };
        const auto q = lin("attn.wq", "attn.bq", H, H, x);
        const auto k = lin("attn.wk", "attn.bk", H, H, x);
        const auto v = lin("attn.wv", "attn.bv", H, H, x);
        std::vector<typename Graph<T>::Ref> heads;
        for (int hd = 0; hd < cfg.heads; ++hd) {
            const int c0 = hd * dh, c1 = (hd + 1) * dh;
            auto scores = g.scale(g.matmul_nt(g.slice_cols(q, c0, c1), g.slice_cols(k, c0, c1)),
                                  inv_sqrt_dh);
            auto probs = g.softmax_rows(g.add(scores, mask_bias));
            probs = g.dropout(probs, drop, drop_rng, train);
            heads.push_back(g.matmul(probs, g.slice_cols(v, c0, c1)));
        }
        auto attn = lin("attn.wo", "attn.bo", H, H, g.concat_cols(heads));
        attn = g.dropout(attn, drop, drop_rng, train);
        x = g.layer_norm(g.add(x, attn), g.param(ps.get(base + "ln1.g", {H}, Init::kOne)),
                         g.param(ps.get(base + "ln1.b", {H}, Init::kZero)));
        auto ff = lin("ff.w2", "ff.b2", cfg.ff, H,
                      g.gelu(lin("ff.w1", "ff.b1", H, cfg.ff, x)));
        ff = g.dropout(ff, drop, drop_rng, train);
        x = g.layer_norm(g.add(x, ff), g.param(ps.get(base + "ln2.g", {H}, Init::kOne)),
                         g.param(ps.get(base + "ln2.b", {H}, Init::kZero)));
    }
    return x;
}

}  // namespace splitner

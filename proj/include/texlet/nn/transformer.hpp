// transformer.hpp — pre-LN transformer building blocks shared by the VAE
// stages and the flow DiT: linear layers, multi-head self-attention, and the
// sinusoidal embeddings for anchors and timesteps.
#pragma once

#include <cmath>
#include <string>

#include "texlet/nn/tape.hpp"

namespace texlet::nn {

inline Value linear(Tape& t, Value x, ModelParams& p, const std::string& prefix, int in, int out,
                    Init w_init = Init::TruncNormalFanIn) {
    p.declare(prefix + ".w", {in, out}, w_init);
    p.declare(prefix + ".b", {1, out}, Init::Zeros);
    return add(t, matmul(t, x, t.param(prefix + ".w")), t.param(prefix + ".b"));
}

inline Value layer_norm_p(Tape& t, Value x, ModelParams& p, const std::string& prefix, int dim) {
    p.declare(prefix + ".g", {1, dim}, Init::Ones);
    p.declare(prefix + ".b", {1, dim}, Init::Zeros);
    return layer_norm(t, x, t.param(prefix + ".g"), t.param(prefix + ".b"));
}

inline Value multihead_attention(Tape& t, Value x, ModelParams& p, const std::string& prefix,
                                 int width, int heads) {
    require(width % heads == 0, "attention width must be divisible by head count");
    int dh = width / heads;
    Value q = linear(t, x, p, prefix + ".q", width, width);
    Value k = linear(t, x, p, prefix + ".k", width, width);
    Value v = linear(t, x, p, prefix + ".v", width, width);
    Value merged{-1};
    for (int h = 0; h < heads; ++h) {
        Value qh = slice_cols(t, q, h * dh, (h + 1) * dh);
        Value kh = slice_cols(t, k, h * dh, (h + 1) * dh);
        Value vh = slice_cols(t, v, h * dh, (h + 1) * dh);
        Value oh = scaled_dot_attention(t, qh, kh, vh);
        merged = h == 0 ? oh : concat_cols(t, merged, oh);
    }
    return linear(t, merged, p, prefix + ".o", width, width);
}

// x + MHA(LN(x)); x + MLP(LN(x)), MLP hidden = 4*width with GELU.
inline Value transformer_block(Tape& t, Value x, ModelParams& p, const std::string& prefix,
                               int width, int heads) {
    Value h = add(t, x, multihead_attention(t, layer_norm_p(t, x, p, prefix + ".ln1", width), p,
                                            prefix + ".attn", width, heads));
    Value m = layer_norm_p(t, h, p, prefix + ".ln2", width);
    m = linear(t, m, p, prefix + ".mlp1", width, 4 * width);
    m = gelu(t, m);
    m = linear(t, m, p, prefix + ".mlp2", 4 * width, width);
    return add(t, h, m);
}

// Sinusoidal embedding of one scalar at octave frequencies 2^k, k < octaves:
// [sin(x), cos(x), sin(2x), cos(2x), ...].
inline void sincos_octaves(double x, int octaves, std::vector<double>& out) {
    double f = 1.0;
    for (int k = 0; k < octaves; ++k) {
        out.push_back(std::sin(f * x));
        out.push_back(std::cos(f * x));
        f *= 2.0;
    }
}

// Timestep embedding row (1 x 2*octaves).
inline Tensor timestep_embedding(double tval, int octaves) {
    std::vector<double> v;
    v.reserve(2 * octaves);
    sincos_octaves(3.14159265358979323846 * tval, octaves, v);
    return Tensor::row(std::move(v));
}

}  // namespace texlet::nn

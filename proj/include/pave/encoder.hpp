#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pave/backbone.hpp"
#include "pave/deform.hpp"
#include "pave/nn.hpp"
#include "pave/tensor.hpp"

namespace pave {

enum class EncoderMode { spatial, spatiotemporal };
enum class AttentionKind { dense, deformable };

struct EncoderConfig {
    int layers = 2;
    EncoderMode mode = EncoderMode::spatial;
    AttentionKind kind = AttentionKind::deformable;
    std::int64_t embed_dim = 64;
    int heads = 4;
    int points = 4;
    int levels = 2;
    int max_frames = 1;  // sizes the frame embedding table (spatiotemporal only)
};

// Exact multiply-add counts per the documented formulas:
//   dense spatiotemporal: layers * D * (f*N)^2
//   dense spatial:        layers * D * f * N^2   (f independent per-frame passes)
//   deformable:           layers * D * (f*N) * slots, slots = heads*points*levels*(f for ST, 1 for spatial)
// so dense ST / dense single-frame = f^2 for every N.
std::int64_t count_attention_cost(const EncoderConfig& cfg, int f, std::int64_t n_tokens);

// One encoder layer: deformable self-attention (each token anchors at its own
// normalized center, one slot per level -- and per frame in spatiotemporal
// mode) followed by a token-wise FFN. Both sublayers are residual + post-norm.
struct EncoderLayer {
    DeformAttn attn;
    Ffn ffn;

    EncoderLayer() = default;
    EncoderLayer(ParamRegistry& reg, const std::string& prefix, const EncoderConfig& cfg, Rng& rng);
};

struct Encoder {
    EncoderConfig cfg;
    Var pos_row_emb, pos_col_emb;  // [GRID_MAX, D] each, indexed by pyramid row / col
    Var scale_emb;                 // [levels, D]
    Var frame_emb;                 // [max_frames, D], zero-init so f=1 ST == spatial
    std::vector<EncoderLayer> layers;

    static constexpr std::int64_t GRID_MAX = 64;

    Encoder() = default;
    Encoder(ParamRegistry& reg, const std::string& prefix, const EncoderConfig& cfg, Rng& rng);

    // Per-frame encoding; the output depends on this frame's tokens only.
    TokenSet encode_frame(const TokenSet& in) const;

    // Joint encoding over all f frames; returns the updated keyframe tokens.
    // Sampling slots are indexed by (frame, level) so attention can land on
    // any frame's pyramid.
    TokenSet encode_clip(const std::vector<TokenSet>& frames, int keyframe) const;

private:
    Var embed(const TokenSet& ts, int frame_idx, bool use_frame_emb) const;
};

}  // namespace pave

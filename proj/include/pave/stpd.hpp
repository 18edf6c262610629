#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pave/backbone.hpp"
#include "pave/deform.hpp"
#include "pave/nn.hpp"
#include "pave/tensor.hpp"

namespace pave {

// Pose matrices are frame-major: a pose block for M queries over f frames is
// [M, f*J*2] with column ((fi*J + j)*2 + xy). Keyframe poses are the
// [M, J*2] slice at fi = keyframe.

struct StpdConfig {
    int layers = 3;
    std::int64_t queries = 20;  // M
    int joints = 15;            // J
    std::int64_t embed_dim = 64;
    int heads = 4;
    int points = 4;
    int levels = 2;
    int frames = 3;  // f = 2T+1
    bool learnable_refs = false;  // true: random learnable reference poses (ablation)
};

// One decoder layer: pose-to-pose self-attention, per-frame sampling-offset
// regression, pose-aware deformable cross-attention anchored at the query's
// current per-frame joint positions, FFN, then pose refinement.
struct StpdLayer {
    Mhsa self_attn;
    Mlp sample_offset_head;  // D -> f*J*2, zero-init (per-frame offsets)
    DeformAttn cross_attn;   // A = f*J*levels anchor slots
    Ffn ffn;
    Mlp refine_head;  // D -> f*J*2, zero-init

    StpdLayer() = default;
    StpdLayer(ParamRegistry& reg, const std::string& prefix, const StpdConfig& cfg, Rng& rng);
};

struct StpdOutput {
    // Initial token-wise candidates over all N keyframe tokens.
    Var candidate_poses;   // [N, J*2], normalized keyframe coordinates
    Var candidate_logits;  // [N, 1]
    Var candidate_scales;  // [N, J*2], positive (RLE supervision of the initial head)
    std::vector<std::int64_t> selected;  // top-M candidate indices, score desc, ties by index

    Var ref0;  // [M, f*J*2] layer-0 references, identical across frames by construction

    // Per supervised decoder layer l = 1..layers.
    std::vector<Var> layer_poses;   // [M, J*2] keyframe poses (reference + residual head)
    std::vector<Var> layer_logits;  // [M, 1]
    std::vector<Var> layer_scales;  // [M, J*2], strictly positive
    std::vector<Var> layer_refs;    // [M, f*J*2] refined references P^l (all frames)

    Var queries;  // final [M, D]
};

struct Stpd {
    StpdConfig cfg;
    Var pose_queries;    // [M, D]
    Var learnable_ref;   // [M, J*2] (only used with learnable_refs)
    Mlp init_pose_head;  // D -> J*2, offsets from token center
    Mlp init_score_head; // D -> 1
    Mlp init_scale_head; // D -> J*2, softplus-mapped
    Mlp res_head;        // D -> J*2, zero-init residual on top of the reference
    Mlp score_head;      // D -> 1
    Mlp scale_head;      // D -> J*2, softplus-mapped
    std::vector<StpdLayer> layers;

    Stpd() = default;
    Stpd(ParamRegistry& reg, const std::string& prefix, const StpdConfig& cfg, Rng& rng);

    // keyframe_tokens drive initial pose prediction; frames are the encoded
    // token sets the cross-attention samples from (keyframe only for the
    // baseline image-style decoder).
    StpdOutput forward(const TokenSet& keyframe_tokens, const std::vector<TokenSet>& frames) const;
};

// Top-M indices by score descending, ties broken by lower index.
std::vector<std::int64_t> top_m_indices(const std::vector<double>& scores, std::int64_t m);

// Expands per-frame joint positions [Q, f*J*2] into deformable anchor points
// [Q, f*J*levels*2] (slot a = (fi*J + j)*levels + l), plus the matching
// (frame, level) slot map.
Var expand_pose_anchors(const Var& positions, int frames, int joints, int levels);
std::vector<std::pair<int, int>> pose_anchor_map(int frames, int joints, int levels);

}  // namespace pave

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pave/backbone.hpp"
#include "pave/deform.hpp"
#include "pave/nn.hpp"
#include "pave/stpd.hpp"
#include "pave/tensor.hpp"

namespace pave {

struct StjdConfig {
    int layers = 3;
    int joints = 15;
    std::int64_t embed_dim = 64;
    int heads = 4;
    int points = 4;
    int levels = 2;
    int frames = 3;
};

// One joint-decoder layer: joint-to-joint self-attention, per-frame joint
// offset regression, deformable cross-attention anchored at each joint's
// current per-frame location, FFN, per-joint coordinate refinement.
struct StjdLayer {
    Mhsa self_attn;
    Mlp sample_offset_head;  // D -> f*2 per joint query, zero-init
    DeformAttn cross_attn;   // A = f*levels anchor slots
    Ffn ffn;
    Mlp refine_head;  // D -> f*2, zero-init

    StjdLayer() = default;
    StjdLayer(ParamRegistry& reg, const std::string& prefix, const StjdConfig& cfg, Rng& rng);
};

// Per-pose joint refinement with one shared set of J joint queries.
// Confidence is not touched; only coordinates are refined.
struct Stjd {
    StjdConfig cfg;
    Var joint_queries;  // [J, D], shared across all poses
    std::vector<StjdLayer> layers;

    Stjd() = default;
    Stjd(ParamRegistry& reg, const std::string& prefix, const StjdConfig& cfg, Rng& rng);

    // pose: [J, 2] normalized keyframe joints; returns the refined [J, 2].
    Var refine(const Var& pose, const std::vector<TokenSet>& frames) const;

    // Row-wise batch version: poses [M, J*2] -> refined [M, J*2]. All poses
    // share one [M*J, D] pass; self-attention stays within each pose's block.
    Var refine_all(const Var& poses, const std::vector<TokenSet>& frames) const;
};

}  // namespace pave

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pave/nn.hpp"
#include "pave/tensor.hpp"

namespace pave {

struct DeformAttnConfig {
    int heads = 4;
    int points = 4;  // K sampled points per (anchor) slot
    int levels = 2;
    std::int64_t embed_dim = 64;

    void validate() const;
};

// Row layout of a frame's token matrix: tokens of level l occupy rows
// [level_offset[l], level_offset[l] + level_h[l]*level_w[l]) in row-major
// (r, c) order.
struct GridInfo {
    std::vector<std::int64_t> level_h, level_w, level_offset;
    std::int64_t total = 0;

    int levels() const { return static_cast<int>(level_h.size()); }
    std::int64_t level_size(int l) const { return level_h[l] * level_w[l]; }
};

// Bilinear interpolation of a [H,W,D] map at a continuous pixel-space point
// (x, y). Out-of-bounds neighbourhood cells contribute zeros; differentiable
// w.r.t. both the map values and the point coordinates.
Var bilinear_sample(const Var& map, const Var& point);

// Fused multi-scale (and multi-frame) deformable attention core.
//   values:     one [N, Dv] matrix per frame (already value-projected)
//   anchors:    [Q, A*2] normalized base points, A anchor slots per query
//   anchor_map: per anchor slot a -> (frame index, level index)
//   offsets:    [Q, A*heads*K*2] normalized offsets, layout [a][h][k][xy]
//   logits:     [Q, A*heads*K] attention logits, layout [a][h][k]
// Per head, weights are softmax-normalized across all A*K slots. Sampling uses
// x_px = (anchor_x + offset_x) * (W_l - 1) and zero padding out of bounds.
// Returns [Q, Dv], the per-head weighted sums concatenated over heads.
Var deform_attend(const std::vector<Var>& values, const GridInfo& grid, const Var& anchors,
                  const std::vector<std::pair<int, int>>& anchor_map, const Var& offsets, const Var& logits,
                  int heads, int points);

// Deformable attention block with residual and post-norm. The anchor slot
// count A is fixed at construction (it sizes the offset / logit heads).
struct DeformAttn {
    int heads = 4, points = 4, anchors = 1;
    Linear value_proj, offset_head, logit_head, out_proj;
    LayerNormBlock norm;

    DeformAttn() = default;
    DeformAttn(ParamRegistry& reg, const std::string& prefix, std::int64_t dim, int heads, int points, int anchors,
               Rng& rng);

    Var forward(const Var& queries, const Var& anchor_pts, const std::vector<Var>& frame_tokens, const GridInfo& grid,
                const std::vector<std::pair<int, int>>& anchor_map) const;

    // Value projection split out so callers that attend into the same frame
    // tokens many times (e.g. per-pose joint refinement) can project once.
    std::vector<Var> project_values(const std::vector<Var>& frame_tokens) const;
    Var attend(const Var& queries, const Var& anchor_pts, const std::vector<Var>& projected_values,
               const GridInfo& grid, const std::vector<std::pair<int, int>>& anchor_map) const;
};

}  // namespace pave

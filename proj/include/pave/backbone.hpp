#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pave/deform.hpp"
#include "pave/nn.hpp"
#include "pave/tensor.hpp"

namespace pave {

// A window of 2T+1 frames centered on the keyframe. Frames are H*W*3 RGB in
// [0,1], row-major.
struct VideoClip {
    std::int64_t height = 0, width = 0;
    int span = 1;  // T
    std::vector<std::vector<double>> frames;  // size 2T+1, keyframe at index span

    int frame_count() const { return static_cast<int>(frames.size()); }
    int keyframe_index() const { return span; }
};

struct TokenMeta {
    int level;
    std::int64_t row, col;
    double cx, cy;  // normalized center, x_px = cx * (W_l - 1)
};

struct FeaturePyramid {
    std::vector<Var> levels;  // each [H_l, W_l, D]
    std::vector<int> strides;
};

struct TokenSet {
    Var tokens;  // [N, D]
    GridInfo grid;
    std::vector<TokenMeta> meta;  // meta[i] for token row i

    std::int64_t count() const { return tokens->dim(0); }
    std::vector<std::int64_t> level_of_token() const;
};

// Four conv stages (3x3, im2col-backed), strides 2-2-1-2, producing a
// two-level pyramid at strides {4, 8} with channel width D.
struct Backbone {
    std::int64_t embed_dim = 64;
    Linear conv1, conv2, conv3, conv4;  // im2col patch matmuls, [9*Cin, Cout]

    Backbone() = default;
    Backbone(ParamRegistry& reg, const std::string& prefix, std::int64_t d, Rng& rng);

    // frame: [H, W, 3]; H and W must be divisible by the largest stride (8).
    FeaturePyramid extract(const Var& frame) const;
};

// 1x1 patch embedding over pyramid cells; records (level, row, col, center)
// metadata for every token.
struct Tokenizer {
    Linear proj;

    Tokenizer() = default;
    Tokenizer(ParamRegistry& reg, const std::string& prefix, std::int64_t d, Rng& rng);

    TokenSet tokenize(const FeaturePyramid& pyramid) const;
};

// im2col for a 3x3 kernel with padding 1: [H,W,C] -> [(H/s)*(W/s), 9*C].
Var im2col3x3(const Var& x, int stride);

Var frame_to_var(const VideoClip& clip, int frame_idx);

}  // namespace pave

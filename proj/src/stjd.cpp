#include "pave/stjd.hpp"

#include <stdexcept>

namespace pave {

StjdLayer::StjdLayer(ParamRegistry& reg, const std::string& prefix, const StjdConfig& cfg, Rng& rng)
    : self_attn(reg, prefix + ".self", cfg.embed_dim, cfg.heads, rng),
      sample_offset_head(reg, prefix + ".sample_offset", cfg.embed_dim, cfg.embed_dim,
                         static_cast<std::int64_t>(cfg.frames) * 2, rng, /*zero_out=*/true),
      cross_attn(reg, prefix + ".cross", cfg.embed_dim, cfg.heads, cfg.points, cfg.frames * cfg.levels, rng),
      ffn(reg, prefix + ".ffn", cfg.embed_dim, 2 * cfg.embed_dim, rng),
      refine_head(reg, prefix + ".refine", cfg.embed_dim, cfg.embed_dim,
                  static_cast<std::int64_t>(cfg.frames) * 2, rng, /*zero_out=*/true) {}

Stjd::Stjd(ParamRegistry& reg, const std::string& prefix, const StjdConfig& c, Rng& rng) : cfg(c) {
    std::vector<double> q(static_cast<std::size_t>(cfg.joints * cfg.embed_dim));
    for (auto& x : q) x = rng.normal() * 0.02;
    joint_queries = reg.create(prefix + ".joint_queries", {cfg.joints, cfg.embed_dim}, std::move(q));
    for (int i = 0; i < cfg.layers; ++i)
        layers.emplace_back(reg, prefix + ".layer." + std::to_string(i), cfg, rng);
}

Var Stjd::refine(const Var& pose, const std::vector<TokenSet>& frames) const {
    if (pose->rank() != 2 || pose->dim(0) != cfg.joints || pose->dim(1) != 2)
        throw std::invalid_argument("stjd: pose must be [J, 2] with J = " + std::to_string(cfg.joints));
    Var out = refine_all(reshape(pose, {1, static_cast<std::int64_t>(cfg.joints) * 2}), frames);
    return reshape(out, {cfg.joints, 2});
}

Var Stjd::refine_all(const Var& poses, const std::vector<TokenSet>& frames) const {
    const std::int64_t m = poses->dim(0);
    const std::int64_t j2 = static_cast<std::int64_t>(cfg.joints) * 2;
    if (poses->rank() != 2 || poses->dim(1) != j2) throw std::invalid_argument("stjd: poses must be [M, J*2]");
    const int f = static_cast<int>(frames.size());
    if (f != cfg.frames) throw std::invalid_argument("stjd: frame count does not match the configured window");
    const int kf = f / 2;
    const GridInfo& grid = frames[0].grid;
    // Anchor slots per joint: (frame, level); same layout as the pose decoder
    // with a single "joint" per row.
    const auto amap = pose_anchor_map(f, 1, cfg.levels);

    std::vector<Var> frame_vars;
    for (const auto& ts : frames) frame_vars.push_back(ts.tokens);

    // All poses share one [M*J, D] pass: matmuls, FFNs and the deformable
    // cross-attention are row-wise, and self-attention is restricted to each
    // pose's J-row block, so poses stay independent. Frame tokens are
    // value-projected once per layer for every pose.
    Var pos0 = reshape(poses, {m * cfg.joints, 2});
    // [M*J, f*2] per-frame locations, initialized by replicating the keyframe.
    Var pos = concat_cols(std::vector<Var>(static_cast<std::size_t>(f), pos0));
    Var q = repeat_rows(joint_queries, m);
    for (const auto& layer : layers) {
        q = layer.self_attn.forward_blocks(q, cfg.joints);
        Var sample_pts = add(pos, layer.sample_offset_head.forward(q));
        Var anchors = expand_pose_anchors(sample_pts, f, 1, cfg.levels);
        q = layer.cross_attn.attend(q, anchors, layer.cross_attn.project_values(frame_vars), grid, amap);
        q = layer.ffn.forward(q);
        pos = add(pos, layer.refine_head.forward(q));
    }
    Var key = slice_cols(pos, static_cast<std::int64_t>(kf) * 2, 2);
    return reshape(key, {m, j2});
}

}  // namespace pave

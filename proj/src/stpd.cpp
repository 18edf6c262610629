#include "pave/stpd.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace pave {

std::vector<std::int64_t> top_m_indices(const std::vector<double>& scores, std::int64_t m) {
    if (static_cast<std::int64_t>(scores.size()) < m) throw std::invalid_argument("top_m_indices: fewer scores than M");
    std::vector<std::int64_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    idx.resize(static_cast<std::size_t>(m));
    return idx;
}

Var expand_pose_anchors(const Var& positions, int frames, int joints, int levels) {
    const std::int64_t expect = static_cast<std::int64_t>(frames) * joints * 2;
    if (positions->rank() != 2 || positions->dim(1) != expect)
        throw std::invalid_argument("expand_pose_anchors: positions shape mismatch");
    std::vector<Var> parts;
    parts.reserve(static_cast<std::size_t>(frames) * joints * levels);
    for (int fi = 0; fi < frames; ++fi) {
        for (int j = 0; j < joints; ++j) {
            Var p = slice_cols(positions, (static_cast<std::int64_t>(fi) * joints + j) * 2, 2);
            for (int l = 0; l < levels; ++l) parts.push_back(p);
        }
    }
    return concat_cols(parts);
}

std::vector<std::pair<int, int>> pose_anchor_map(int frames, int joints, int levels) {
    std::vector<std::pair<int, int>> amap;
    amap.reserve(static_cast<std::size_t>(frames) * joints * levels);
    for (int fi = 0; fi < frames; ++fi)
        for (int j = 0; j < joints; ++j)
            for (int l = 0; l < levels; ++l) amap.emplace_back(fi, l);
    return amap;
}

StpdLayer::StpdLayer(ParamRegistry& reg, const std::string& prefix, const StpdConfig& cfg, Rng& rng)
    : self_attn(reg, prefix + ".self", cfg.embed_dim, cfg.heads, rng),
      sample_offset_head(reg, prefix + ".sample_offset", cfg.embed_dim, cfg.embed_dim,
                         static_cast<std::int64_t>(cfg.frames) * cfg.joints * 2, rng, /*zero_out=*/true),
      cross_attn(reg, prefix + ".cross", cfg.embed_dim, cfg.heads, cfg.points,
                 cfg.frames * cfg.joints * cfg.levels, rng),
      ffn(reg, prefix + ".ffn", cfg.embed_dim, 2 * cfg.embed_dim, rng),
      refine_head(reg, prefix + ".refine", cfg.embed_dim, cfg.embed_dim,
                  static_cast<std::int64_t>(cfg.frames) * cfg.joints * 2, rng, /*zero_out=*/true) {}

Stpd::Stpd(ParamRegistry& reg, const std::string& prefix, const StpdConfig& c, Rng& rng) : cfg(c) {
    const std::int64_t m = cfg.queries, d = cfg.embed_dim, j2 = static_cast<std::int64_t>(cfg.joints) * 2;
    std::vector<double> q(static_cast<std::size_t>(m * d));
    for (auto& x : q) x = rng.normal() * 0.02;
    pose_queries = reg.create(prefix + ".pose_queries", {m, d}, std::move(q));
    std::vector<double> r(static_cast<std::size_t>(m * j2));
    for (auto& x : r) x = rng.uniform(0.0, 1.0);
    learnable_ref = reg.create(prefix + ".learnable_ref", {m, j2}, std::move(r));
    init_pose_head = Mlp(reg, prefix + ".init_pose", d, d, j2, rng, /*zero_out=*/true);
    init_score_head = Mlp(reg, prefix + ".init_score", d, d, 1, rng);
    init_scale_head = Mlp(reg, prefix + ".init_scale", d, d, j2, rng);
    res_head = Mlp(reg, prefix + ".res", d, d, j2, rng, /*zero_out=*/true);
    score_head = Mlp(reg, prefix + ".score", d, d, 1, rng);
    scale_head = Mlp(reg, prefix + ".scale", d, d, j2, rng);
    for (int i = 0; i < cfg.layers; ++i)
        layers.emplace_back(reg, prefix + ".layer." + std::to_string(i), cfg, rng);
}

StpdOutput Stpd::forward(const TokenSet& keyframe_tokens, const std::vector<TokenSet>& frames) const {
    const int f = static_cast<int>(frames.size());
    if (f != cfg.frames) throw std::invalid_argument("stpd: frame count does not match the configured window");
    const std::int64_t n = keyframe_tokens.count(), m = cfg.queries;
    const std::int64_t j2 = static_cast<std::int64_t>(cfg.joints) * 2;
    if (n < m) throw std::invalid_argument("stpd: fewer tokens than pose queries");
    const int kf = f / 2;

    StpdOutput out;
    // Token-wise initial candidates: joint coordinates as offsets from the
    // token's normalized center.
    std::vector<double> centers(static_cast<std::size_t>(n * j2));
    for (std::int64_t i = 0; i < n; ++i) {
        for (int j = 0; j < cfg.joints; ++j) {
            centers[static_cast<std::size_t>(i * j2 + j * 2)] = keyframe_tokens.meta[static_cast<std::size_t>(i)].cx;
            centers[static_cast<std::size_t>(i * j2 + j * 2 + 1)] = keyframe_tokens.meta[static_cast<std::size_t>(i)].cy;
        }
    }
    out.candidate_poses = add(init_pose_head.forward(keyframe_tokens.tokens), make_var({n, j2}, std::move(centers)));
    out.candidate_logits = init_score_head.forward(keyframe_tokens.tokens);
    out.candidate_scales = softplus(init_scale_head.forward(keyframe_tokens.tokens));
    out.selected = top_m_indices(out.candidate_logits->data, m);

    Var ref_key = cfg.learnable_refs ? learnable_ref : gather_rows(out.candidate_poses, out.selected);
    out.ref0 = concat_cols(std::vector<Var>(static_cast<std::size_t>(f), ref_key));

    std::vector<Var> frame_vars;
    for (const auto& ts : frames) frame_vars.push_back(ts.tokens);
    const GridInfo& grid = frames[0].grid;
    const auto amap = pose_anchor_map(f, cfg.joints, cfg.levels);

    Var q = pose_queries;
    Var ref = out.ref0;
    for (const auto& layer : layers) {
        q = layer.self_attn.forward(q);
        Var sample_pts = add(ref, layer.sample_offset_head.forward(q));
        Var anchors = expand_pose_anchors(sample_pts, f, cfg.joints, cfg.levels);
        q = layer.cross_attn.forward(q, anchors, frame_vars, grid, amap);
        q = layer.ffn.forward(q);
        ref = add(ref, layer.refine_head.forward(q));
        out.layer_refs.push_back(ref);
        Var key = slice_cols(ref, static_cast<std::int64_t>(kf) * j2, j2);
        out.layer_poses.push_back(add(key, res_head.forward(q)));
        out.layer_logits.push_back(score_head.forward(q));
        out.layer_scales.push_back(softplus(scale_head.forward(q)));
    }
    out.queries = q;
    return out;
}

}  // namespace pave

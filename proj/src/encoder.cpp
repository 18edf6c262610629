#include "pave/encoder.hpp"

#include <stdexcept>

namespace pave {

std::int64_t count_attention_cost(const EncoderConfig& cfg, int f, std::int64_t n_tokens) {
    if (f < 1 || n_tokens < 1) throw std::invalid_argument("count_attention_cost: f and N must be >= 1");
    const std::int64_t L = cfg.layers, D = cfg.embed_dim, N = n_tokens, F = f;
    if (cfg.kind == AttentionKind::dense) {
        if (cfg.mode == EncoderMode::spatiotemporal) return L * D * (F * N) * (F * N);
        return L * D * F * N * N;
    }
    const std::int64_t per_query_slots =
        static_cast<std::int64_t>(cfg.heads) * cfg.points * cfg.levels * (cfg.mode == EncoderMode::spatiotemporal ? F : 1);
    return L * D * (F * N) * per_query_slots;
}

EncoderLayer::EncoderLayer(ParamRegistry& reg, const std::string& prefix, const EncoderConfig& cfg, Rng& rng)
    : attn(reg, prefix + ".attn", cfg.embed_dim, cfg.heads, cfg.points,
           cfg.levels * (cfg.mode == EncoderMode::spatiotemporal ? cfg.max_frames : 1), rng),
      ffn(reg, prefix + ".ffn", cfg.embed_dim, 2 * cfg.embed_dim, rng) {}

Encoder::Encoder(ParamRegistry& reg, const std::string& prefix, const EncoderConfig& c, Rng& rng) : cfg(c) {
    const std::int64_t d = cfg.embed_dim;
    auto init = [&](std::int64_t rows) {
        std::vector<double> v(static_cast<std::size_t>(rows * d));
        for (auto& x : v) x = rng.normal() * 0.02;
        return v;
    };
    pos_row_emb = reg.create(prefix + ".pos_row", {GRID_MAX, d}, init(GRID_MAX));
    pos_col_emb = reg.create(prefix + ".pos_col", {GRID_MAX, d}, init(GRID_MAX));
    scale_emb = reg.create(prefix + ".scale", {cfg.levels, d}, init(cfg.levels));
    frame_emb = reg.create(prefix + ".frame", {cfg.max_frames, d},
                           std::vector<double>(static_cast<std::size_t>(cfg.max_frames * d), 0.0));
    for (int i = 0; i < cfg.layers; ++i) layers.emplace_back(reg, prefix + ".layer." + std::to_string(i), cfg, rng);
}

Var Encoder::embed(const TokenSet& ts, int frame_idx, bool use_frame_emb) const {
    std::vector<std::int64_t> rows, cols, lvls, frames;
    rows.reserve(ts.meta.size());
    for (const auto& m : ts.meta) {
        if (m.row >= GRID_MAX || m.col >= GRID_MAX) throw std::invalid_argument("encoder: pyramid exceeds GRID_MAX");
        rows.push_back(m.row);
        cols.push_back(m.col);
        lvls.push_back(m.level);
        frames.push_back(frame_idx);
    }
    Var x = add(ts.tokens, add(gather_rows(pos_row_emb, rows), gather_rows(pos_col_emb, cols)));
    x = add(x, gather_rows(scale_emb, lvls));
    if (use_frame_emb) x = add(x, gather_rows(frame_emb, frames));
    return x;
}

namespace {

// [Q, A*2] anchors: every token anchors all its slots at its own center.
Var own_center_anchors(const TokenSet& ts, int slots) {
    const auto n = ts.count();
    std::vector<double> a(static_cast<std::size_t>(n * slots * 2));
    for (std::int64_t i = 0; i < n; ++i) {
        for (int s = 0; s < slots; ++s) {
            a[static_cast<std::size_t>((i * slots + s) * 2)] = ts.meta[static_cast<std::size_t>(i)].cx;
            a[static_cast<std::size_t>((i * slots + s) * 2 + 1)] = ts.meta[static_cast<std::size_t>(i)].cy;
        }
    }
    return make_var({n, static_cast<std::int64_t>(slots) * 2}, std::move(a));
}

}  // namespace

TokenSet Encoder::encode_frame(const TokenSet& in) const {
    if (cfg.mode != EncoderMode::spatial) throw std::logic_error("encode_frame requires spatial mode");
    TokenSet out = in;
    if (layers.empty()) return out;
    const int slots = cfg.levels;
    std::vector<std::pair<int, int>> amap;
    for (int l = 0; l < cfg.levels; ++l) amap.emplace_back(0, l);
    Var anchors = own_center_anchors(in, slots);
    Var x = embed(in, 0, false);
    for (const auto& layer : layers) {
        x = layer.attn.forward(x, anchors, {x}, in.grid, amap);
        x = layer.ffn.forward(x);
    }
    out.tokens = x;
    return out;
}

TokenSet Encoder::encode_clip(const std::vector<TokenSet>& frames, int keyframe) const {
    if (cfg.mode != EncoderMode::spatiotemporal) throw std::logic_error("encode_clip requires spatiotemporal mode");
    const int f = static_cast<int>(frames.size());
    if (f < 1 || keyframe < 0 || keyframe >= f) throw std::invalid_argument("encode_clip: bad frame window");
    if (f != cfg.max_frames)
        throw std::invalid_argument("encode_clip: frame count does not match the configured window");
    TokenSet out = frames[static_cast<std::size_t>(keyframe)];
    if (layers.empty()) return out;

    const std::int64_t n = frames[0].count();
    const int slots = f * cfg.levels;
    std::vector<std::pair<int, int>> amap;
    for (int fi = 0; fi < f; ++fi)
        for (int l = 0; l < cfg.levels; ++l) amap.emplace_back(fi, l);

    std::vector<Var> embedded, anchor_parts;
    for (int fi = 0; fi < f; ++fi) {
        embedded.push_back(embed(frames[static_cast<std::size_t>(fi)], fi, true));
        anchor_parts.push_back(own_center_anchors(frames[static_cast<std::size_t>(fi)], slots));
    }
    Var x = concat_rows(embedded);          // [f*N, D]
    Var anchors = concat_rows(anchor_parts);  // [f*N, slots*2]

    const GridInfo& grid = frames[0].grid;
    for (const auto& layer : layers) {
        std::vector<Var> per_frame;
        for (int fi = 0; fi < f; ++fi) per_frame.push_back(slice_rows(x, fi * n, n));
        x = layer.attn.forward(x, anchors, per_frame, grid, amap);
        x = layer.ffn.forward(x);
    }
    out.tokens = slice_rows(x, keyframe * n, n);
    return out;
}

}  // namespace pave

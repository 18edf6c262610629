#include "pave/backbone.hpp"

#include <stdexcept>

namespace pave {

std::vector<std::int64_t> TokenSet::level_of_token() const {
    std::vector<std::int64_t> out(meta.size());
    for (std::size_t i = 0; i < meta.size(); ++i) out[i] = meta[i].level;
    return out;
}

Var im2col3x3(const Var& x, int stride) {
    if (x->rank() != 3) throw std::invalid_argument("im2col3x3: need [H,W,C]");
    const std::int64_t h = x->dim(0), w = x->dim(1), c = x->dim(2);
    if (h % stride != 0 || w % stride != 0) throw std::invalid_argument("im2col3x3: size not divisible by stride");
    const std::int64_t oh = h / stride, ow = w / stride;
    const std::int64_t cols = 9 * c;
    auto out = std::make_shared<TensorNode>();
    out->shape = {oh * ow, cols};
    out->data.assign(static_cast<std::size_t>(oh * ow * cols), 0.0);
    out->parents = {x};
    out->name = "im2col3x3";
    out->requires_grad = x->requires_grad;
    for (std::int64_t r = 0; r < oh; ++r) {
        for (std::int64_t q = 0; q < ow; ++q) {
            double* orow = out->data.data() + (r * ow + q) * cols;
            for (int ky = 0; ky < 3; ++ky) {
                const std::int64_t sy = r * stride + ky - 1;
                if (sy < 0 || sy >= h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const std::int64_t sx = q * stride + kx - 1;
                    if (sx < 0 || sx >= w) continue;
                    const double* src = x->data.data() + (sy * w + sx) * c;
                    double* dst = orow + (ky * 3 + kx) * c;
                    for (std::int64_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
                }
            }
        }
    }
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var px = x;
        out->backprop = [o, px, h, w, c, stride]() {
            px->ensure_grad();
            const std::int64_t oh = h / stride, ow = w / stride, cols = 9 * c;
            for (std::int64_t r = 0; r < oh; ++r) {
                for (std::int64_t q = 0; q < ow; ++q) {
                    const double* grow = o->grad.data() + (r * ow + q) * cols;
                    for (int ky = 0; ky < 3; ++ky) {
                        const std::int64_t sy = r * stride + ky - 1;
                        if (sy < 0 || sy >= h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const std::int64_t sx = q * stride + kx - 1;
                            if (sx < 0 || sx >= w) continue;
                            double* dst = px->grad.data() + (sy * w + sx) * c;
                            const double* src = grow + (ky * 3 + kx) * c;
                            for (std::int64_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                        }
                    }
                }
            }
        };
    }
    return out;
}

Backbone::Backbone(ParamRegistry& reg, const std::string& prefix, std::int64_t d, Rng& rng) : embed_dim(d) {
    conv1 = Linear(reg, prefix + ".conv.1", 9 * 3, 16, rng);
    conv2 = Linear(reg, prefix + ".conv.2", 9 * 16, 32, rng);
    conv3 = Linear(reg, prefix + ".conv.3", 9 * 32, d, rng);
    conv4 = Linear(reg, prefix + ".conv.4", 9 * d, d, rng);
}

FeaturePyramid Backbone::extract(const Var& frame) const {
    if (frame->rank() != 3 || frame->dim(2) != 3) throw std::invalid_argument("extract_features: need [H,W,3]");
    const std::int64_t h = frame->dim(0), w = frame->dim(1);
    if (h % 8 != 0 || w % 8 != 0) {
        throw std::invalid_argument("extract_features: frame " + std::to_string(h) + "x" + std::to_string(w) +
                                    " not divisible by the largest stride 8");
    }
    auto stage = [](const Var& x, const Linear& conv, int stride) {
        const std::int64_t oh = x->dim(0) / stride, ow = x->dim(1) / stride;
        Var y = relu(conv.forward(im2col3x3(x, stride)));
        return reshape(y, {oh, ow, y->dim(1)});
    };
    Var s1 = stage(frame, conv1, 2);  // H/2
    Var s2 = stage(s1, conv2, 2);     // H/4
    Var s3 = stage(s2, conv3, 1);     // H/4, width D  -> stride-4 level
    Var s4 = stage(s3, conv4, 2);     // H/8           -> stride-8 level
    FeaturePyramid p;
    p.levels = {s3, s4};
    p.strides = {4, 8};
    return p;
}

Tokenizer::Tokenizer(ParamRegistry& reg, const std::string& prefix, std::int64_t d, Rng& rng)
    : proj(reg, prefix + ".proj", d, d, rng) {}

TokenSet Tokenizer::tokenize(const FeaturePyramid& pyramid) const {
    if (pyramid.levels.empty()) throw std::invalid_argument("tokenize: empty pyramid");
    TokenSet ts;
    std::vector<Var> flat;
    std::int64_t offset = 0;
    for (std::size_t l = 0; l < pyramid.levels.size(); ++l) {
        const Var& lvl = pyramid.levels[l];
        const std::int64_t lh = lvl->dim(0), lw = lvl->dim(1), d = lvl->dim(2);
        if (l > 0 && lh * lw >= ts.grid.level_size(static_cast<int>(l) - 1)) {
            throw std::invalid_argument("tokenize: pyramid resolutions must strictly decrease with level");
        }
        flat.push_back(reshape(lvl, {lh * lw, d}));
        ts.grid.level_h.push_back(lh);
        ts.grid.level_w.push_back(lw);
        ts.grid.level_offset.push_back(offset);
        offset += lh * lw;
        for (std::int64_t r = 0; r < lh; ++r) {
            for (std::int64_t c = 0; c < lw; ++c) {
                TokenMeta m;
                m.level = static_cast<int>(l);
                m.row = r;
                m.col = c;
                m.cx = lw > 1 ? static_cast<double>(c) / static_cast<double>(lw - 1) : 0.5;
                m.cy = lh > 1 ? static_cast<double>(r) / static_cast<double>(lh - 1) : 0.5;
                ts.meta.push_back(m);
            }
        }
    }
    ts.grid.total = offset;
    ts.tokens = proj.forward(flat.size() == 1 ? flat[0] : concat_rows(flat));
    return ts;
}

Var frame_to_var(const VideoClip& clip, int frame_idx) {
    return make_var({clip.height, clip.width, 3}, clip.frames.at(static_cast<std::size_t>(frame_idx)));
}

}  // namespace pave

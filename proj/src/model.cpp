#include "pave/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pave {

Variant parse_variant(const std::string& name) {
    if (name == "pave") return Variant::pave;
    if (name == "baseline-ste") return Variant::baseline_ste;
    if (name == "no-stjd") return Variant::no_stjd;
    if (name == "random-refs") return Variant::random_refs;
    if (name == "image-only") return Variant::image_only;
    throw std::invalid_argument("unknown variant \"" + name +
                                "\" (expected pave|baseline-ste|no-stjd|random-refs|image-only)");
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::pave: return "pave";
        case Variant::baseline_ste: return "baseline-ste";
        case Variant::no_stjd: return "no-stjd";
        case Variant::random_refs: return "random-refs";
        case Variant::image_only: return "image-only";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (embed_dim <= 0 || queries <= 0 || joints <= 0 || enc_layers < 0 || dec_layers <= 0 || joint_layers <= 0 ||
        heads <= 0 || points <= 0 || levels <= 0)
        throw std::invalid_argument("model config: counts must be positive");
    if (span < 0 || span > 2) throw std::invalid_argument("model config: span must be in {0, 1, 2}");
    if (height % 8 != 0 || width % 8 != 0) throw std::invalid_argument("model config: H and W must be divisible by 8");
}

namespace {

StpdConfig make_stpd_cfg(const ModelConfig& c) {
    StpdConfig s;
    s.layers = c.dec_layers;
    s.queries = c.queries;
    s.joints = c.joints;
    s.embed_dim = c.embed_dim;
    s.heads = c.heads;
    s.points = c.points;
    s.levels = c.levels;
    s.frames = c.decode_frames();
    s.learnable_refs = c.variant == Variant::random_refs || c.variant == Variant::baseline_ste;
    return s;
}

StjdConfig make_stjd_cfg(const ModelConfig& c) {
    StjdConfig s;
    s.layers = c.joint_layers;
    s.joints = c.joints;
    s.embed_dim = c.embed_dim;
    s.heads = c.heads;
    s.points = c.points;
    s.levels = c.levels;
    s.frames = c.decode_frames();
    return s;
}

EncoderConfig make_enc_cfg(const ModelConfig& c) {
    EncoderConfig e;
    e.layers = c.enc_layers;
    e.mode = c.variant == Variant::baseline_ste ? EncoderMode::spatiotemporal : EncoderMode::spatial;
    e.embed_dim = c.embed_dim;
    e.heads = c.heads;
    e.points = c.points;
    e.levels = c.levels;
    e.max_frames = c.variant == Variant::baseline_ste ? 2 * c.span + 1 : 1;
    return e;
}

}  // namespace

PaveNet::PaveNet(const ModelConfig& c, std::uint64_t seed) : cfg(c) {
    cfg.validate();
    Rng rng(mix_seed(seed, 0x70617665ull));
    backbone = Backbone(params, "backbone", cfg.embed_dim, rng);
    tokenizer = Tokenizer(params, "tokenizer", cfg.embed_dim, rng);
    encoder = Encoder(params, "encoder", make_enc_cfg(cfg), rng);
    stpd = Stpd(params, "stpd", make_stpd_cfg(cfg), rng);
    stjd = Stjd(params, "stjd", make_stjd_cfg(cfg), rng);
}

std::vector<TokenSet> PaveNet::encode_window(const VideoClip& clip) const {
    if (clip.height != cfg.height || clip.width != cfg.width)
        throw std::invalid_argument("forward: clip resolution does not match the model");
    const int window = clip.frame_count();
    const int kf = clip.keyframe_index();
    auto tokens_of = [&](int fi) { return tokenizer.tokenize(backbone.extract(frame_to_var(clip, fi))); };

    if (cfg.variant == Variant::image_only) return {encoder.encode_frame(tokens_of(kf))};
    if (window != 2 * cfg.span + 1) throw std::invalid_argument("forward: clip window does not match the model span");
    if (cfg.variant == Variant::baseline_ste) {
        std::vector<TokenSet> all;
        for (int fi = 0; fi < window; ++fi) all.push_back(tokens_of(fi));
        return {encoder.encode_clip(all, kf)};
    }
    std::vector<TokenSet> out;
    for (int fi = 0; fi < window; ++fi) out.push_back(encoder.encode_frame(tokens_of(fi)));
    return out;
}

ModelOutput PaveNet::forward(const VideoClip& clip) const {
    const auto frames = encode_window(clip);
    const int kf = static_cast<int>(frames.size()) / 2;
    ModelOutput out;
    out.stpd = stpd.forward(frames[static_cast<std::size_t>(kf)], frames);
    out.final_logits = out.stpd.layer_logits.back();
    out.final_scales = out.stpd.layer_scales.back();
    if (cfg.variant == Variant::no_stjd) {
        out.final_poses = out.stpd.layer_poses.back();
    } else {
        out.final_poses = stjd.refine_all(out.stpd.layer_poses.back(), frames);
        out.has_joint_stage = true;
    }
    return out;
}

std::vector<StageOutput> ModelOutput::stages() const {
    std::vector<StageOutput> st;
    st.push_back({stpd.candidate_poses, stpd.candidate_logits, stpd.candidate_scales});
    for (std::size_t l = 0; l < stpd.layer_poses.size(); ++l)
        st.push_back({stpd.layer_poses[l], stpd.layer_logits[l], stpd.layer_scales[l]});
    if (has_joint_stage) st.push_back({final_poses, final_logits, final_scales});
    return st;
}

std::vector<ScoredPose> PaveNet::predict(const VideoClip& clip, double threshold) const {
    const ModelOutput out = forward(clip);
    std::vector<ScoredPose> poses;
    const std::int64_t m = out.final_poses->dim(0), j2 = out.final_poses->dim(1);
    for (std::int64_t i = 0; i < m; ++i) {
        const double conf = 1.0 / (1.0 + std::exp(-out.final_logits->data[static_cast<std::size_t>(i)]));
        if (conf <= threshold) continue;
        ScoredPose p;
        p.confidence = conf;
        p.joints.assign(out.final_poses->data.begin() + i * j2, out.final_poses->data.begin() + (i + 1) * j2);
        poses.push_back(std::move(p));
    }
    return poses;
}

namespace {

CheckpointEntry config_entry(const ModelConfig& c) {
    CheckpointEntry e;
    e.data = {1.0,  // format revision of this entry
              static_cast<double>(c.embed_dim), static_cast<double>(c.queries), static_cast<double>(c.joints),
              static_cast<double>(c.span),      static_cast<double>(c.enc_layers), static_cast<double>(c.dec_layers),
              static_cast<double>(c.joint_layers), static_cast<double>(c.heads),  static_cast<double>(c.points),
              static_cast<double>(c.levels),    static_cast<double>(c.height),  static_cast<double>(c.width),
              static_cast<double>(static_cast<int>(c.variant))};
    e.shape = {static_cast<std::int64_t>(e.data.size())};
    return e;
}

}  // namespace

void PaveNet::save(const std::string& path, const std::vector<std::pair<std::string, CheckpointEntry>>& extra) const {
    auto entries = params.snapshot();
    entries.emplace_back("__model_config__", config_entry(cfg));
    for (const auto& e : extra) entries.push_back(e);
    save_checkpoint(path, entries);
}

std::map<std::string, CheckpointEntry> PaveNet::load(const std::string& path) {
    auto entries = load_checkpoint(path);
    const auto it = entries.find("__model_config__");
    if (it == entries.end()) throw std::runtime_error("checkpoint: missing model config entry");
    const auto want = config_entry(cfg);
    if (it->second.data != want.data)
        throw std::runtime_error("checkpoint: model configuration mismatch (incompatible checkpoint)");
    entries.erase(it);
    std::map<std::string, CheckpointEntry> known;
    for (const auto& [name, v] : params.all()) {
        auto e = entries.find(name);
        if (e != entries.end()) {
            known.emplace(*e);
            entries.erase(e);
        }
    }
    params.load(known);
    return entries;  // leftover (optimizer state etc.)
}

VideoClip crop_clip(const VideoClip& clip, double cx, double cy, std::int64_t crop_h, std::int64_t crop_w) {
    VideoClip out;
    out.height = crop_h;
    out.width = crop_w;
    out.span = clip.span;
    const double px = cx * static_cast<double>(clip.width - 1), py = cy * static_cast<double>(clip.height - 1);
    const double x0 = px - static_cast<double>(crop_w) / 2.0, y0 = py - static_cast<double>(crop_h) / 2.0;
    for (const auto& src : clip.frames) {
        std::vector<double> img(static_cast<std::size_t>(crop_h * crop_w * 3));
        for (std::int64_t y = 0; y < crop_h; ++y) {
            for (std::int64_t x = 0; x < crop_w; ++x) {
                const double sx = std::clamp(x0 + static_cast<double>(x), 0.0, static_cast<double>(clip.width - 1));
                const double sy = std::clamp(y0 + static_cast<double>(y), 0.0, static_cast<double>(clip.height - 1));
                const auto ix = static_cast<std::int64_t>(sx), iy = static_cast<std::int64_t>(sy);
                const std::int64_t ix1 = std::min(ix + 1, clip.width - 1), iy1 = std::min(iy + 1, clip.height - 1);
                const double fx = sx - static_cast<double>(ix), fy = sy - static_cast<double>(iy);
                for (int c = 0; c < 3; ++c) {
                    auto at = [&](std::int64_t yy, std::int64_t xx) {
                        return src[static_cast<std::size_t>((yy * clip.width + xx) * 3 + c)];
                    };
                    img[static_cast<std::size_t>((y * crop_w + x) * 3 + c)] =
                        (1 - fy) * ((1 - fx) * at(iy, ix) + fx * at(iy, ix1)) +
                        fy * ((1 - fx) * at(iy1, ix) + fx * at(iy1, ix1));
                }
            }
        }
        out.frames.push_back(std::move(img));
    }
    return out;
}

namespace {

ModelConfig two_stage_cfg(int span) {
    ModelConfig c;
    c.queries = 1;
    c.span = span;
    c.height = 32;
    c.width = 32;
    c.variant = Variant::pave;
    return c;
}

}  // namespace

TwoStageRef::TwoStageRef(std::uint64_t seed, int span) : net(two_stage_cfg(span), seed) {}

std::vector<ScoredPose> TwoStageRef::predict(const VideoClip& clip, const std::vector<GtPose>& boxes) const {
    std::vector<ScoredPose> out;
    for (const auto& g : boxes) {
        double sx = 0, sy = 0;
        for (int j = 0; j < g.joint_count(); ++j) {
            sx += g.joints[static_cast<std::size_t>(j * 2)];
            sy += g.joints[static_cast<std::size_t>(j * 2 + 1)];
        }
        const double cx = sx / g.joint_count(), cy = sy / g.joint_count();
        const VideoClip crop = crop_clip(clip, cx, cy, net.cfg.height, net.cfg.width);
        auto preds = net.predict(crop, 0.0);
        if (!preds.empty()) out.push_back(preds.front());
    }
    return out;
}

}  // namespace pave

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pave/backbone.hpp"
#include "pave/encoder.hpp"
#include "pave/eval.hpp"
#include "pave/matching.hpp"
#include "pave/stjd.hpp"
#include "pave/stpd.hpp"

namespace pave {

enum class Variant { pave, baseline_ste, no_stjd, random_refs, image_only };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

struct ModelConfig {
    std::int64_t embed_dim = 64;
    std::int64_t queries = 20;  // M
    int joints = 15;
    int span = 1;  // T
    int enc_layers = 2;
    int dec_layers = 3;
    int joint_layers = 3;
    int heads = 4;
    int points = 4;
    int levels = 2;
    std::int64_t height = 64, width = 96;
    Variant variant = Variant::pave;

    // Frames the decoder attends over: the whole window, except image-only
    // (keyframe alone) and baseline-ste (STE already fused the window into
    // keyframe tokens).
    int decode_frames() const {
        if (variant == Variant::image_only || variant == Variant::baseline_ste) return 1;
        return 2 * span + 1;
    }
    void validate() const;
};

struct ModelOutput {
    StpdOutput stpd;
    Var final_poses;   // [M, J*2]
    Var final_logits;  // [M, 1]
    Var final_scales;  // [M, J*2]

    // Supervision stages: initial candidates, each decoder layer, then the
    // joint decoder output when present.
    std::vector<StageOutput> stages() const;
    bool has_joint_stage = false;
};

struct PaveNet {
    ModelConfig cfg;
    ParamRegistry params;
    Backbone backbone;
    Tokenizer tokenizer;
    Encoder encoder;  // spatial, or spatiotemporal for baseline-ste
    Stpd stpd;
    Stjd stjd;

    PaveNet(const ModelConfig& cfg, std::uint64_t seed);

    ModelOutput forward(const VideoClip& clip) const;
    std::vector<ScoredPose> predict(const VideoClip& clip, double threshold = 0.3) const;

    void save(const std::string& path, const std::vector<std::pair<std::string, CheckpointEntry>>& extra = {}) const;
    // Returns the extra (non-parameter) entries for the caller.
    std::map<std::string, CheckpointEntry> load(const std::string& path);

private:
    std::vector<TokenSet> encode_window(const VideoClip& clip) const;
};

// Fixed-size crop around a normalized center, bilinearly resampled from the
// source frames (the per-person input of the two-stage reference pipeline).
VideoClip crop_clip(const VideoClip& clip, double cx, double cy, std::int64_t crop_h, std::int64_t crop_w);

// Two-stage reference: one independent single-query forward per person crop.
struct TwoStageRef {
    PaveNet net;

    explicit TwoStageRef(std::uint64_t seed, int span);
    std::vector<ScoredPose> predict(const VideoClip& clip, const std::vector<GtPose>& boxes) const;
};

}  // namespace pave

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pave/backbone.hpp"
#include "pave/matching.hpp"
#include "pave/tensor.hpp"

namespace pave {

inline constexpr int kNumJoints = 15;

// PoseTrack-2018 keypoint order.
const std::vector<std::string>& keypoint_names();
// Index of the left/right-swapped counterpart of each keypoint (horizontal
// flip augmentation).
const std::array<int, kNumJoints>& flip_pairs();

enum class Difficulty { easy, hard };
enum class CorruptMode { blur, occluder };

struct FigureSpec {
    double base_x = 0, base_y = 0;  // hip center at the keyframe, pixels
    double vx = 0, vy = 0;          // pixels per frame
    double height = 32;             // head-top to ankle, pixels
    double phase = 0, freq = 0.6, amp = 0.08;  // limb swing (amp in units of height)
    std::array<double, 3> color{1, 1, 1};
};

struct RectI {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
    bool valid = false;
};

struct ClipSample {
    VideoClip clip;
    std::vector<std::vector<GtPose>> gt;  // [frame][person], normalized coords
    std::vector<FigureSpec> figures;
    RectI occluder;                  // keyframe occluder, if applied
    std::uint64_t seed = 0;
    int persons = 0;

    const std::vector<GtPose>& keyframe_gt() const { return gt[static_cast<std::size_t>(clip.keyframe_index())]; }
};

// Joint pixel positions of a figure at frame offset dt from the keyframe.
std::array<std::array<double, 2>, kNumJoints> figure_joints(const FigureSpec& fig, double dt);

// Paints anti-aliased limb segments and joint disks over a textured
// background; later figures occlude earlier ones.
std::vector<double> render_frame(const std::vector<FigureSpec>& figures, double dt, std::int64_t h, std::int64_t w,
                                 std::uint64_t bg_seed);

// Renders frames and computes ground truth / visibility for a fixed figure
// list (generate_clip's back half; useful for handcrafted scenes).
ClipSample assemble_clip(const std::vector<FigureSpec>& figures, int span, std::int64_t h, std::int64_t w,
                         std::uint64_t bg_seed);

// Deterministic per (seed, args). easy: well-separated slow figures; hard:
// overlapping trajectories, faster motion.
ClipSample generate_clip(std::uint64_t seed, int n_persons, Difficulty difficulty, int span);

// blur: normalized box kernel along each figure's motion direction, width
// grows with severity; occluder: a rectangle over one person's region in the
// keyframe only. Corruptions alter pixels, never annotations: ground truth
// (coordinates and visibility) is copied through unchanged, so joints hidden
// in the keyframe are still scored — they stay observable in the auxiliary
// frames.
ClipSample corrupt_clip(const ClipSample& sample, CorruptMode mode, double severity, std::uint64_t seed);

struct ClipDesc {
    std::uint64_t seed = 0;
    int persons = 1;
    Difficulty difficulty = Difficulty::easy;
    int span = 1;
    std::string split = "train";
    double blur = 0, occlude = 0;  // corruption severities, 0 = off
};

ClipSample materialize(const ClipDesc& desc);

// One JSON object per line; images are regenerated on demand, never stored.
void write_manifest(const std::string& path, const std::vector<ClipDesc>& clips);
std::vector<ClipDesc> read_manifest(const std::string& path);

}  // namespace pave

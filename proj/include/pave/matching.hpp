#pragma once

#include <cstdint>
#include <vector>

#include "pave/tensor.hpp"

namespace pave {

// Ground-truth pose for one person on one frame, normalized coordinates.
struct GtPose {
    std::vector<double> joints;  // J*2, [j*2] = x, [j*2+1] = y
    std::vector<bool> visible;   // J

    int joint_count() const { return static_cast<int>(visible.size()); }
};

struct MatchResult {
    std::vector<std::pair<int, int>> pairs;  // (prediction index, ground-truth index)
    std::vector<int> background;             // unmatched prediction indices
};

// Minimum-cost one-to-one assignment of every column (ground truth) to a
// distinct row (prediction). cost is [preds][gts]; throws if gts > preds.
// Exact optimum (Jonker-Volgenant style potentials).
MatchResult hungarian_match(const std::vector<std::vector<double>>& cost);

// cost = l_cls*(1 - score) + l_rle * mean_j |pred_j - gt_j|_1 over visible
// joints; classification term only when nothing is visible.
double match_cost(const double* pred_joints, double score, const GtPose& gt, double l_cls, double l_rle);

// Laplace negative log-likelihood for a single coordinate; throws if b <= 0.
double rle_nll(double mu, double b, double gt);

// Batched Laplace NLL: log(2b) + |mu - gt| / b summed over the visible joints
// and coordinates of every matched pair, averaged over matches. mu and b are
// [M, J*2]; b must be strictly positive at the used entries.
Var rle_loss(const Var& mu, const Var& b, const std::vector<GtPose>& gts, const MatchResult& match);

// Sigmoid focal loss (alpha = 0.25, gamma = 2) on [M, 1] logits; matched
// predictions target 1, background 0; normalized by max(1, #ground truths).
Var cls_loss(const Var& logits, const MatchResult& match, int n_gt);

struct StageOutput {
    Var poses;   // [M, J*2]
    Var logits;  // [M, 1]
    Var scales;  // [M, J*2], positive
};

struct LossBreakdown {
    Var total;  // scalar, = l_cls * sum(cls) + l_rle * sum(rle) exactly
    std::vector<double> stage_cls, stage_rle;
    double cls_sum = 0, rle_sum = 0;
    std::vector<MatchResult> matches;
};

// Independent Hungarian matching and focal + RLE loss per supervision stage.
LossBreakdown total_loss(const std::vector<StageOutput>& stages, const std::vector<GtPose>& gts, double l_cls = 0.5,
                         double l_rle = 1.0);

}  // namespace pave

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pave/matching.hpp"
#include "pave/synth.hpp"

namespace pave {

struct ScoredPose {
    std::vector<double> joints;  // J*2 normalized
    double confidence = 0;
};

struct AnnotationImage {
    std::int64_t id = 0;
    std::string file_name;
    std::vector<GtPose> poses;
};

struct AnnotationSet {
    std::vector<AnnotationImage> images;
    std::vector<std::string> keypoint_order;
};

struct Detection {
    double confidence = 0;
    bool correct = false;
};

struct EvalReport {
    std::vector<double> keypoint_ap;  // per keypoint, J entries
    double map = 0;
    std::vector<std::vector<std::pair<double, double>>> pr_curves;  // (recall, precision) per keypoint
    std::int64_t matched = 0, missed = 0;
};

// Height of a ground-truth figure: vertical extent over its joints, used to
// scale the correctness radius (radius = radius_fraction * height).
double gt_height(const GtPose& gt);

// Greedy matching: predictions in descending confidence each claim the
// unclaimed ground truth with the most joints within radius (at least one
// required). Returns gt index per prediction, -1 if unmatched.
std::vector<int> match_poses_to_gt(const std::vector<ScoredPose>& preds, const std::vector<GtPose>& gts,
                                   double radius_fraction);

// All-point interpolated average precision. total_gt = 0: 1.0 with no
// detections (nothing to find, nothing wrong), 0.0 otherwise.
double compute_ap(std::vector<Detection> detections, std::int64_t total_gt,
                  std::vector<std::pair<double, double>>* pr_curve = nullptr);

double compute_map(const std::vector<double>& keypoint_aps);

// Scores predictions against ground truth over a set of scenes (one entry
// per image/keyframe).
EvalReport evaluate(const std::vector<std::vector<ScoredPose>>& preds, const std::vector<std::vector<GtPose>>& gts,
                    double radius_fraction = 0.1);

// PoseTrack/COCO-style layout: "images" (id, file_name), "annotations"
// (image_id, keypoints x,y,v triplets), "categories" (keypoint names).
AnnotationSet parse_posetrack_json(const std::string& path);
void write_predictions(const std::vector<AnnotationImage>& images, const std::string& path);

// CSV with header "keypoint,ap" and a final mAP row.
void write_report_csv(const EvalReport& report, const std::string& path);

// Skeleton overlay of a frame, binary PPM (P6).
void write_overlay_ppm(const std::vector<double>& frame, std::int64_t h, std::int64_t w,
                       const std::vector<ScoredPose>& poses, const std::string& path);

}  // namespace pave

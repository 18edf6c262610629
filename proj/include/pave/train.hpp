#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pave/model.hpp"
#include "pave/synth.hpp"

namespace pave {

// Decoupled weight decay; parameters whose name starts with "backbone" get a
// 0.1x learning-rate multiplier.
struct AdamW {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-4;
    std::int64_t t = 0;
    std::vector<std::vector<double>> m, v;
    std::vector<double> lr_mult;

    void init(const ParamRegistry& params);
    void step(ParamRegistry& params, double lr);

    std::vector<std::pair<std::string, CheckpointEntry>> snapshot(const ParamRegistry& params) const;
    void load(const ParamRegistry& params, const std::map<std::string, CheckpointEntry>& entries);
};

struct TrainConfig {
    int steps = 2000;
    int batch = 8;
    int threads = 8;
    double lr = 2e-4;
    double weight_decay = 1e-4;
    double l_cls = 0.5, l_rle = 1.0;
    std::uint64_t seed = 1;
    Difficulty difficulty = Difficulty::easy;
    int min_persons = 1, max_persons = 3;
    double blur = 0, occlude = 0;  // corruption applied to train/val clips
    double flip_prob = 0.5;
    double scale_aug = 0.2;  // max extra zoom factor; 0 disables scale/crop
    int eval_every = 250;
    int eval_clips = 24;
    double score_threshold = 0.3;
    double target_map = -1;  // stop early once validation mAP reaches this
    int stop_after = 0;      // > 0: pause after this many steps (checkpointed); resume keeps the full-run lr schedule
    std::string out_dir;     // metrics.csv + checkpoint.bin land here if set
};

// Step-count schedule mirroring a 30-epoch run with decays at epochs 20/25:
// lr * 0.1 after 2/3 of the steps, * 0.01 after 5/6.
double lr_at_step(double base_lr, int step, int total_steps);

// Horizontal flip with left/right keypoint swap.
ClipSample flip_sample(const ClipSample& s);
// Random zoom-in crop, resampled back to the original resolution.
ClipSample scale_crop_sample(const ClipSample& s, double zoom, double off_x, double off_y);

struct TrainResult {
    int steps_run = 0;
    double final_map = 0;
    std::vector<double> losses;  // per-step totals
    std::string checkpoint_path;
};

double validate_map(const PaveNet& model, const TrainConfig& cfg);

TrainResult train(PaveNet& model, const TrainConfig& cfg);

}  // namespace pave

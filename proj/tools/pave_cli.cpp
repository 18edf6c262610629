// pave: train / eval / bench / ablate entry points for the synthetic-clip
// pose estimation pipeline. All commands are deterministic given
// (config, seed); only the wall-clock columns of bench vary between runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pave/config.hpp"
#include "pave/encoder.hpp"
#include "pave/eval.hpp"
#include "pave/model.hpp"
#include "pave/synth.hpp"
#include "pave/train.hpp"

namespace fs = std::filesystem;
using namespace pave;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    f << text;
}

// Multiply-add count of the encoder stage for one clip, per the documented
// attention-cost formulas. The spatial encoder runs once per frame; the
// spatiotemporal baseline attends over the whole window at once.
std::int64_t encoder_cost(const ModelConfig& m) {
    EncoderConfig e;
    e.layers = m.enc_layers;
    e.mode = m.variant == Variant::baseline_ste ? EncoderMode::spatiotemporal : EncoderMode::spatial;
    e.embed_dim = m.embed_dim;
    e.heads = m.heads;
    e.points = m.points;
    e.levels = m.levels;
    const int f = 2 * m.span + 1;
    e.max_frames = e.mode == EncoderMode::spatiotemporal ? f : 1;
    const std::int64_t n_tokens = (m.height / 4) * (m.width / 4) + (m.height / 8) * (m.width / 8);
    if (e.mode == EncoderMode::spatiotemporal) return count_attention_cost(e, f, n_tokens);
    return f * count_attention_cost(e, 1, n_tokens);
}

// A keyframe-centered scene with exactly n figures on a jittered grid; used
// by bench, which needs person counts beyond what generate_clip produces.
ClipSample bench_scene(int n, int span, std::int64_t h, std::int64_t w, std::uint64_t seed) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(n)));
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const int rows = (n + cols - 1) / cols;
    std::vector<FigureSpec> figs;
    for (int i = 0; i < n; ++i) {
        FigureSpec fg;
        const int r = i / cols, c = i % cols;
        fg.height = std::min<double>(static_cast<double>(h) / (rows + 1.0), 24.0);
        fg.base_x = (c + 0.5) / cols * static_cast<double>(w - 1);
        fg.base_y = (r + 0.7) / rows * static_cast<double>(h - 1);
        fg.base_x += (rng.uniform() - 0.5) * 2.0;
        fg.vx = (rng.uniform() - 0.5) * 1.0;
        fg.vy = (rng.uniform() - 0.5) * 0.5;
        fg.phase = rng.uniform() * 6.28;
        fg.color = {0.5 + 0.5 * rng.uniform(), 0.5 + 0.5 * rng.uniform(), 0.5 + 0.5 * rng.uniform()};
        figs.push_back(fg);
    }
    return assemble_clip(figs, span, h, w, mix_seed(seed, 0xb6u));
}

struct TimingStats {
    double median_ms = 0, iqr_ms = 0;
};

template <typename Fn>
TimingStats time_fn(Fn&& fn, int reps) {
    for (int i = 0; i < 2; ++i) fn();  // warm-up, excluded
    std::vector<double> ms;
    ms.reserve(static_cast<std::size_t>(reps));
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    TimingStats s;
    s.median_ms = ms[ms.size() / 2];
    s.iqr_ms = ms[ms.size() * 3 / 4] - ms[ms.size() / 4];
    return s;
}

std::vector<std::vector<ScoredPose>> predict_clips(const PaveNet& model, const TrainConfig& t,
                                                   std::vector<ClipSample>& clips_out, int n_clips) {
    std::vector<std::vector<ScoredPose>> preds;
    for (int k = 0; k < n_clips; ++k) {
        ClipDesc d;
        d.seed = mix_seed(t.seed, 0xa11dau + static_cast<std::uint64_t>(k) * 131);
        d.persons = t.min_persons + k % (t.max_persons - t.min_persons + 1);
        d.difficulty = t.difficulty;
        d.span = model.cfg.span;
        d.blur = t.blur;
        d.occlude = t.occlude;
        d.split = "val";
        clips_out.push_back(materialize(d));
        preds.push_back(model.predict(clips_out.back().clip, t.score_threshold));
    }
    return preds;
}

void write_report_json(const EvalReport& rep, const fs::path& path) {
    nlohmann::json j;
    j["mAP"] = rep.map;
    j["keypoint_ap"] = nlohmann::json::object();
    for (std::size_t k = 0; k < rep.keypoint_ap.size(); ++k) {
        const auto& names = keypoint_names();
        const std::string name = k < names.size() ? names[k] : "kp" + std::to_string(k);
        j["keypoint_ap"][name] = rep.keypoint_ap[k];
    }
    j["matched"] = rep.matched;
    j["missed"] = rep.missed;
    write_text(path, j.dump(2) + "\n");
}

int cmd_train(const std::string& config_path, std::uint64_t seed, bool seed_set, const std::string& out,
              const std::string& variant) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::parse_file(config_path);
    if (seed_set) cfg.train.seed = seed;
    if (!variant.empty()) cfg.model.variant = parse_variant(variant);
    if (cfg.model.variant == Variant::image_only) cfg.model.span = 0;
    cfg.train.out_dir = out;
    fs::create_directories(out);
    write_text(fs::path(out) / "config.txt", cfg.echo());

    PaveNet model(cfg.model, cfg.train.seed);
    TrainResult res = train(model, cfg.train);
    std::cout << "trained " << res.steps_run << " steps, final val mAP " << res.final_map << "\n"
              << "checkpoint: " << res.checkpoint_path << "\n"
              << "metrics: " << (fs::path(out) / "metrics.csv").string() << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint, std::uint64_t seed, bool seed_set,
             const std::string& out, int clips, int overlays, double radius, const std::string& annotations,
             const std::string& predictions) {
    fs::create_directories(out);
    EvalReport rep;
    if (!annotations.empty()) {
        // Score a prediction file against an annotation file, both in the
        // PoseTrack-style JSON layout.
        if (predictions.empty()) throw std::runtime_error("eval: --annotations requires --predictions");
        AnnotationSet gt = parse_posetrack_json(annotations);
        AnnotationSet pr = parse_posetrack_json(predictions);
        std::map<std::int64_t, const AnnotationImage*> by_id;
        for (const auto& im : pr.images) by_id[im.id] = &im;
        std::vector<std::vector<ScoredPose>> preds;
        std::vector<std::vector<GtPose>> gts;
        for (const auto& im : gt.images) {
            gts.push_back(im.poses);
            std::vector<ScoredPose> scene;
            const auto it = by_id.find(im.id);
            if (it != by_id.end()) {
                for (const auto& p : it->second->poses) scene.push_back({p.joints, 1.0});
            }
            preds.push_back(std::move(scene));
        }
        rep = evaluate(preds, gts, radius);
    } else {
        if (checkpoint.empty()) throw std::runtime_error("eval: need --checkpoint or --annotations/--predictions");
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::parse_file(config_path);
        if (seed_set) cfg.train.seed = seed;
        PaveNet model(cfg.model, 0);
        model.load(checkpoint);
        std::vector<ClipSample> samples;
        auto preds = predict_clips(model, cfg.train, samples, clips);
        std::vector<std::vector<GtPose>> gts;
        for (const auto& s : samples) gts.push_back(s.keyframe_gt());
        rep = evaluate(preds, gts, radius);

        std::vector<AnnotationImage> pred_images;
        for (std::size_t k = 0; k < preds.size(); ++k) {
            AnnotationImage im;
            im.id = static_cast<std::int64_t>(k);
            im.file_name = "clip" + std::to_string(k) + ".ppm";
            for (const auto& p : preds[k]) {
                GtPose g;
                g.joints = p.joints;
                g.visible.assign(p.joints.size() / 2, true);
                im.poses.push_back(std::move(g));
            }
            pred_images.push_back(std::move(im));
        }
        write_predictions(pred_images, (fs::path(out) / "predictions.json").string());
        if (overlays > 0) {
            fs::create_directories(fs::path(out) / "overlays");
            for (int k = 0; k < std::min<int>(overlays, static_cast<int>(samples.size())); ++k) {
                const auto& clip = samples[static_cast<std::size_t>(k)].clip;
                write_overlay_ppm(clip.frames[static_cast<std::size_t>(clip.keyframe_index())], clip.height,
                                  clip.width, preds[static_cast<std::size_t>(k)],
                                  (fs::path(out) / "overlays" / ("clip" + std::to_string(k) + ".ppm")).string());
            }
        }
    }
    write_report_csv(rep, (fs::path(out) / "report.csv").string());
    write_report_json(rep, fs::path(out) / "report.json");
    std::cout << "mAP " << rep.map << " (matched " << rep.matched << ", missed " << rep.missed << ")\n"
              << "report: " << (fs::path(out) / "report.json").string() << "\n";
    return 0;
}

int cmd_bench(const std::string& config_path, const std::string& checkpoint, std::uint64_t seed,
              const std::string& out, std::vector<int> persons, int reps) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::parse_file(config_path);
    std::sort(persons.begin(), persons.end());
    persons.erase(std::unique(persons.begin(), persons.end()), persons.end());
    if (persons.empty()) throw std::runtime_error("bench: need at least one person count");
    // layout capacity: the query set must exceed the largest person count
    cfg.model.queries = std::max<std::int64_t>(cfg.model.queries, persons.back() + 1);
    PaveNet model(cfg.model, seed);
    if (!checkpoint.empty()) model.load(checkpoint);
    TwoStageRef two_stage(seed, cfg.model.span);

    fs::create_directories(out);
    std::ofstream csv(fs::path(out) / "bench.csv");
    csv << "pipeline,persons,reps,median_ms,iqr_ms\n";
    csv.precision(6);
    for (int n : persons) {
        ClipSample scene = bench_scene(n, cfg.model.span, cfg.model.height, cfg.model.width, seed);
        TimingStats pave_t = time_fn([&]() { model.forward(scene.clip); }, reps);
        TimingStats two_t = time_fn([&]() { two_stage.predict(scene.clip, scene.keyframe_gt()); }, reps);
        csv << "pave," << n << "," << reps << "," << std::fixed << pave_t.median_ms << "," << pave_t.iqr_ms << "\n";
        csv << "two_stage," << n << "," << reps << "," << two_t.median_ms << "," << two_t.iqr_ms << "\n";
        std::cout << "n=" << n << ": pave " << pave_t.median_ms << " ms, two-stage " << two_t.median_ms << " ms\n";
    }
    std::cout << "bench: " << (fs::path(out) / "bench.csv").string() << "\n";
    return 0;
}

int cmd_ablate(const std::string& config_path, std::uint64_t seed, const std::string& out,
               const std::vector<std::string>& variants, int seeds) {
    RunConfig base = config_path.empty() ? RunConfig{} : RunConfig::parse_file(config_path);
    if (seeds < 1) throw std::runtime_error("ablate: seeds must be >= 1");
    fs::create_directories(out);
    std::ofstream csv(fs::path(out) / "ablate.csv");
    csv << "variant,seed,span,map,encoder_madds\n";
    csv.precision(6);
    for (const auto& vn : variants) {
        RunConfig cfg = base;
        cfg.model.variant = parse_variant(vn);
        if (cfg.model.variant == Variant::image_only) cfg.model.span = 0;
        for (int s = 0; s < seeds; ++s) {
            cfg.train.seed = seed + static_cast<std::uint64_t>(s);
            cfg.train.out_dir = (fs::path(out) / (vn + "_seed" + std::to_string(s))).string();
            PaveNet model(cfg.model, cfg.train.seed);
            TrainResult res = train(model, cfg.train);
            csv << variant_name(cfg.model.variant) << "," << cfg.train.seed << "," << cfg.model.span << ","
                << std::fixed << res.final_map << "," << encoder_cost(cfg.model) << "\n";
            csv.flush();
            std::cout << vn << " seed " << cfg.train.seed << ": mAP " << res.final_map << "\n";
        }
    }
    std::cout << "ablate: " << (fs::path(out) / "ablate.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-person video pose estimation on synthetic clips"};
    app.require_subcommand(1);

    std::string config_path, out = "runs/out", variant, checkpoint, annotations, predictions;
    std::uint64_t seed = 1;
    int clips = 24, overlays = 4, reps = 20, seeds = 3;
    double radius = 0.1;
    std::vector<int> persons = {1, 5, 10, 20};
    std::vector<std::string> variants = {"pave", "baseline-ste", "no-stjd", "random-refs", "image-only"};

    auto* tr = app.add_subcommand("train", "train a variant on synthetic clips");
    tr->add_option("--config", config_path, "run configuration file (key = value)");
    auto* tr_seed = tr->add_option("--seed", seed, "RNG seed (overrides config)");
    tr->add_option("--out", out, "output directory (metrics.csv, checkpoint.bin, config.txt)");
    tr->add_option("--variant", variant, "pave | baseline-ste | no-stjd | random-refs | image-only");

    auto* ev = app.add_subcommand("eval", "score a checkpoint, or a prediction file against annotations");
    ev->add_option("--config", config_path, "run configuration file");
    ev->add_option("--checkpoint", checkpoint, "model checkpoint to evaluate");
    auto* ev_seed = ev->add_option("--seed", seed, "validation clip seed");
    ev->add_option("--out", out, "output directory (report.csv/json, predictions.json, overlays/)");
    ev->add_option("--clips", clips, "number of validation clips");
    ev->add_option("--overlays", overlays, "number of keyframe overlays to write");
    ev->add_option("--radius", radius, "correctness radius as a fraction of figure height");
    ev->add_option("--annotations", annotations, "ground-truth JSON (file-scoring mode)");
    ev->add_option("--predictions", predictions, "prediction JSON (file-scoring mode)");

    auto* be = app.add_subcommand("bench", "time the end-to-end forward against the two-stage reference");
    be->add_option("--config", config_path, "run configuration file");
    be->add_option("--checkpoint", checkpoint, "optional checkpoint for the timed model");
    be->add_option("--seed", seed, "scene seed");
    be->add_option("--out", out, "output directory (bench.csv)");
    be->add_option("--persons", persons, "person counts to time")->delimiter(',');
    be->add_option("--reps", reps, "timed repetitions per cell")->check(CLI::Range(1, 100000));

    auto* ab = app.add_subcommand("ablate", "train and score a variant grid with shared seeds");
    ab->add_option("--config", config_path, "base run configuration file");
    ab->add_option("--seed", seed, "first seed of the grid");
    ab->add_option("--out", out, "output directory (ablate.csv + per-run subdirectories)");
    ab->add_option("--variants", variants, "variant names")->delimiter(',');
    ab->add_option("--seeds", seeds, "seeds per variant");

    CLI11_PARSE(app, argc, argv);
    try {
        if (tr->parsed()) return cmd_train(config_path, seed, tr_seed->count() > 0, out, variant);
        if (ev->parsed())
            return cmd_eval(config_path, checkpoint, seed, ev_seed->count() > 0, out, clips, overlays, radius,
                            annotations, predictions);
        if (be->parsed()) return cmd_bench(config_path, checkpoint, seed, out, persons, reps);
        if (ab->parsed()) return cmd_ablate(config_path, seed, out, variants, seeds);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

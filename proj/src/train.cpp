#include "pave/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <atomic>
#include <memory>
#include <stdexcept>
#include <thread>

namespace pave {

void AdamW::init(const ParamRegistry& params) {
    m.clear();
    v.clear();
    lr_mult.clear();
    t = 0;
    for (const auto& [name, p] : params.all()) {
        m.emplace_back(p->data.size(), 0.0);
        v.emplace_back(p->data.size(), 0.0);
        lr_mult.push_back(name.rfind("backbone", 0) == 0 ? 0.1 : 1.0);
    }
}

void AdamW::step(ParamRegistry& params, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    const auto& all = params.all();
    for (std::size_t i = 0; i < all.size(); ++i) {
        auto& p = all[i].second;
        if (p->grad.empty()) continue;  // parameter not touched by this graph
        const double lri = lr * lr_mult[i];
        for (std::size_t k = 0; k < p->data.size(); ++k) {
            const double g = p->grad[k];
            m[i][k] = beta1 * m[i][k] + (1.0 - beta1) * g;
            v[i][k] = beta2 * v[i][k] + (1.0 - beta2) * g * g;
            const double mh = m[i][k] / bc1, vh = v[i][k] / bc2;
            p->data[k] -= lri * (mh / (std::sqrt(vh) + eps) + weight_decay * p->data[k]);
        }
    }
}

std::vector<std::pair<std::string, CheckpointEntry>> AdamW::snapshot(const ParamRegistry& params) const {
    std::vector<std::pair<std::string, CheckpointEntry>> out;
    const auto& all = params.all();
    for (std::size_t i = 0; i < all.size(); ++i) {
        out.push_back({"opt.m." + all[i].first, {all[i].second->shape, m[i]}});
        out.push_back({"opt.v." + all[i].first, {all[i].second->shape, v[i]}});
    }
    out.push_back({"opt.t", {{1}, {static_cast<double>(t)}}});
    return out;
}

void AdamW::load(const ParamRegistry& params, const std::map<std::string, CheckpointEntry>& entries) {
    init(params);
    const auto& all = params.all();
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto mi = entries.find("opt.m." + all[i].first);
        const auto vi = entries.find("opt.v." + all[i].first);
        if (mi == entries.end() || vi == entries.end())
            throw std::runtime_error("optimizer state missing for " + all[i].first);
        if (mi->second.data.size() != m[i].size() || vi->second.data.size() != v[i].size())
            throw std::runtime_error("optimizer state size mismatch for " + all[i].first);
        m[i] = mi->second.data;
        v[i] = vi->second.data;
    }
    const auto ti = entries.find("opt.t");
    if (ti == entries.end()) throw std::runtime_error("optimizer state missing step count");
    t = static_cast<std::int64_t>(ti->second.data.at(0));
}

double lr_at_step(double base_lr, int step, int total_steps) {
    if (3 * step >= 2 * total_steps) {
        if (6 * step >= 5 * total_steps) return base_lr * 0.01;
        return base_lr * 0.1;
    }
    return base_lr;
}

ClipSample flip_sample(const ClipSample& s) {
    ClipSample out = s;
    const std::int64_t h = s.clip.height, w = s.clip.width;
    for (auto& img : out.clip.frames) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w / 2; ++x) {
                for (int c = 0; c < 3; ++c) {
                    std::swap(img[static_cast<std::size_t>((y * w + x) * 3 + c)],
                              img[static_cast<std::size_t>((y * w + (w - 1 - x)) * 3 + c)]);
                }
            }
        }
    }
    const auto& swap_idx = flip_pairs();
    for (auto& frame_gt : out.gt) {
        for (auto& g : frame_gt) {
            GtPose src = g;
            for (int j = 0; j < g.joint_count(); ++j) {
                const int sj = swap_idx[static_cast<std::size_t>(j)];
                g.joints[static_cast<std::size_t>(j * 2)] = 1.0 - src.joints[static_cast<std::size_t>(sj * 2)];
                g.joints[static_cast<std::size_t>(j * 2 + 1)] = src.joints[static_cast<std::size_t>(sj * 2 + 1)];
                g.visible[static_cast<std::size_t>(j)] = src.visible[static_cast<std::size_t>(sj)];
            }
        }
    }
    return out;
}

ClipSample scale_crop_sample(const ClipSample& s, double zoom, double off_x, double off_y) {
    if (zoom < 1.0) throw std::invalid_argument("scale_crop_sample: zoom must be >= 1");
    ClipSample out = s;
    const std::int64_t h = s.clip.height, w = s.clip.width;
    // Crop window in source pixels, then resample back to full resolution.
    const double span_x = static_cast<double>(w - 1) / zoom, span_y = static_cast<double>(h - 1) / zoom;
    const double x0 = off_x * (static_cast<double>(w - 1) - span_x), y0 = off_y * (static_cast<double>(h - 1) - span_y);
    for (std::size_t fi = 0; fi < out.clip.frames.size(); ++fi) {
        const auto& src = s.clip.frames[fi];
        auto& dst = out.clip.frames[fi];
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                const double sx = x0 + static_cast<double>(x) / static_cast<double>(w - 1) * span_x;
                const double sy = y0 + static_cast<double>(y) / static_cast<double>(h - 1) * span_y;
                const auto ix = static_cast<std::int64_t>(sx), iy = static_cast<std::int64_t>(sy);
                const std::int64_t ix1 = std::min(ix + 1, w - 1), iy1 = std::min(iy + 1, h - 1);
                const double fx = sx - static_cast<double>(ix), fy = sy - static_cast<double>(iy);
                for (int c = 0; c < 3; ++c) {
                    auto at = [&](std::int64_t yy, std::int64_t xx) {
                        return src[static_cast<std::size_t>((yy * w + xx) * 3 + c)];
                    };
                    dst[static_cast<std::size_t>((y * w + x) * 3 + c)] =
                        (1 - fy) * ((1 - fx) * at(iy, ix) + fx * at(iy, ix1)) +
                        fy * ((1 - fx) * at(iy1, ix) + fx * at(iy1, ix1));
                }
            }
        }
    }
    for (auto& frame_gt : out.gt) {
        for (auto& g : frame_gt) {
            for (int j = 0; j < g.joint_count(); ++j) {
                const double px = g.joints[static_cast<std::size_t>(j * 2)] * static_cast<double>(w - 1);
                const double py = g.joints[static_cast<std::size_t>(j * 2 + 1)] * static_cast<double>(h - 1);
                const double nx = (px - x0) / span_x, ny = (py - y0) / span_y;
                g.joints[static_cast<std::size_t>(j * 2)] = nx;
                g.joints[static_cast<std::size_t>(j * 2 + 1)] = ny;
                if (nx < 0 || nx > 1 || ny < 0 || ny > 1) g.visible[static_cast<std::size_t>(j)] = false;
            }
        }
    }
    return out;
}

namespace {

ClipSample training_sample(const TrainConfig& cfg, int span, std::uint64_t step, int item) {
    Rng rng(mix_seed(cfg.seed, mix_seed(step, static_cast<std::uint64_t>(item) + 1)));
    ClipDesc d;
    d.seed = rng.next_u64();
    d.persons = static_cast<int>(rng.uniform_int(cfg.min_persons, cfg.max_persons));
    d.difficulty = cfg.difficulty;
    d.span = span;
    d.blur = cfg.blur;
    d.occlude = cfg.occlude;
    ClipSample s = materialize(d);
    if (cfg.flip_prob > 0 && rng.uniform() < cfg.flip_prob) s = flip_sample(s);
    if (cfg.scale_aug > 0) {
        const double zoom = 1.0 + rng.uniform() * cfg.scale_aug;
        s = scale_crop_sample(s, zoom, rng.uniform(), rng.uniform());
    }
    return s;
}

ClipSample validation_sample(const TrainConfig& cfg, int span, int k) {
    ClipDesc d;
    d.seed = mix_seed(cfg.seed, 0xa11dau + static_cast<std::uint64_t>(k) * 131);
    d.persons = cfg.min_persons + k % (cfg.max_persons - cfg.min_persons + 1);
    d.difficulty = cfg.difficulty;
    d.span = span;
    d.blur = cfg.blur;
    d.occlude = cfg.occlude;
    d.split = "val";
    return materialize(d);
}

void zero_grads(const ParamRegistry& params) {
    for (const auto& [name, p] : params.all()) p->grad.assign(p->data.size(), 0.0);
}

}  // namespace

double validate_map(const PaveNet& model, const TrainConfig& cfg) {
    std::vector<std::vector<ScoredPose>> preds(static_cast<std::size_t>(cfg.eval_clips));
    std::vector<std::vector<GtPose>> gts(static_cast<std::size_t>(cfg.eval_clips));
    const int workers = std::max(1, std::min(cfg.threads, cfg.eval_clips));
    std::vector<std::thread> pool;
    std::atomic_int next{0};
    for (int wi = 0; wi < workers; ++wi) {
        pool.emplace_back([&]() {
            for (int k = next.fetch_add(1); k < cfg.eval_clips; k = next.fetch_add(1)) {
                ClipSample s = validation_sample(cfg, model.cfg.span, k);
                preds[static_cast<std::size_t>(k)] = model.predict(s.clip, cfg.score_threshold);
                gts[static_cast<std::size_t>(k)] = s.keyframe_gt();
            }
        });
    }
    for (auto& th : pool) th.join();
    return evaluate(preds, gts).map;
}

TrainResult train(PaveNet& model, const TrainConfig& cfg) {
    TrainResult res;
    AdamW opt;
    opt.weight_decay = cfg.weight_decay;
    opt.init(model.params);

    int start_step = 0;
    std::string ckpt_path;
    std::ofstream metrics;
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        ckpt_path = cfg.out_dir + "/checkpoint.bin";
        bool resumed = false;
        if (std::filesystem::exists(ckpt_path)) {
            auto extra = model.load(ckpt_path);
            opt.load(model.params, extra);
            const auto it = extra.find("train.step");
            if (it != extra.end()) start_step = static_cast<int>(it->second.data.at(0));
            resumed = true;
        }
        metrics.open(cfg.out_dir + "/metrics.csv", resumed ? std::ios::app : std::ios::out);
        if (!resumed) metrics << "step,total,cls,rle,lr,val_map\n";
        metrics.precision(12);
    }

    const int batch = std::max(1, cfg.batch);
    // Replicas share the master's architecture; their parameter data is
    // refreshed from the master every step so each batch item can build and
    // differentiate its own graph in parallel.
    std::vector<std::unique_ptr<PaveNet>> replicas;
    for (int i = 0; i < batch; ++i) replicas.push_back(std::make_unique<PaveNet>(model.cfg, 0));

    const auto& master_params = model.params.all();
    auto save_ckpt = [&](int step) {
        if (ckpt_path.empty()) return;
        auto extra = opt.snapshot(model.params);
        extra.push_back({"train.step", {{1}, {static_cast<double>(step)}}});
        model.save(ckpt_path, extra);
    };

    double last_val = 0.0;
    for (int step = start_step; step < cfg.steps; ++step) {
        for (auto& r : replicas) {
            const auto& rp = r->params.all();
            for (std::size_t i = 0; i < rp.size(); ++i) rp[i].second->data = master_params[i].second->data;
        }
        std::vector<double> totals(static_cast<std::size_t>(batch)), clss(static_cast<std::size_t>(batch)),
            rles(static_cast<std::size_t>(batch));
        std::vector<std::string> errors(static_cast<std::size_t>(batch));
        const int workers = std::max(1, std::min(cfg.threads, batch));
        std::vector<std::thread> pool;
        std::atomic_int next{0};
        for (int wi = 0; wi < workers; ++wi) {
            pool.emplace_back([&]() {
                for (int i = next.fetch_add(1); i < batch; i = next.fetch_add(1)) {
                    try {
                        PaveNet& net = *replicas[static_cast<std::size_t>(i)];
                        ClipSample s = training_sample(cfg, net.cfg.span, static_cast<std::uint64_t>(step), i);
                        zero_grads(net.params);
                        ModelOutput out = net.forward(s.clip);
                        LossBreakdown loss = total_loss(out.stages(), s.keyframe_gt(), cfg.l_cls, cfg.l_rle);
                        backward(loss.total);
                        totals[static_cast<std::size_t>(i)] = loss.total->data[0];
                        clss[static_cast<std::size_t>(i)] = loss.cls_sum;
                        rles[static_cast<std::size_t>(i)] = loss.rle_sum;
                    } catch (const std::exception& e) {
                        errors[static_cast<std::size_t>(i)] = e.what();
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        for (const auto& e : errors) {
            if (!e.empty()) throw std::runtime_error("training step failed: " + e);
        }

        // Deterministic accumulation: batch items in index order.
        zero_grads(model.params);
        for (int i = 0; i < batch; ++i) {
            const auto& rp = replicas[static_cast<std::size_t>(i)]->params.all();
            for (std::size_t pi = 0; pi < master_params.size(); ++pi) {
                const auto& g = rp[pi].second->grad;
                if (g.empty()) continue;
                auto& mg = master_params[pi].second->grad;
                for (std::size_t k = 0; k < g.size(); ++k) mg[k] += g[k] / static_cast<double>(batch);
            }
        }
        const double lr = lr_at_step(cfg.lr, step, cfg.steps);
        opt.step(model.params, lr);

        double tot = 0, cl = 0, rl = 0;
        for (int i = 0; i < batch; ++i) {
            tot += totals[static_cast<std::size_t>(i)] / batch;
            cl += clss[static_cast<std::size_t>(i)] / batch;
            rl += rles[static_cast<std::size_t>(i)] / batch;
        }
        res.losses.push_back(tot);
        res.steps_run = step + 1 - start_step;  // steps executed by this call, not the global count

        const bool eval_now = cfg.eval_every > 0 && ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.steps);
        if (eval_now) {
            last_val = validate_map(model, cfg);
            save_ckpt(step + 1);
        }
        if (metrics.is_open()) {
            metrics << (step + 1) << "," << tot << "," << cl << "," << rl << "," << lr << ",";
            if (eval_now) metrics << last_val;
            metrics << "\n";
        }
        if (eval_now && cfg.target_map > 0 && last_val >= cfg.target_map) break;
        if (cfg.stop_after > 0 && res.steps_run >= cfg.stop_after) {
            if (!eval_now) save_ckpt(step + 1);
            break;
        }
    }
    if (cfg.eval_every <= 0) last_val = validate_map(model, cfg);
    res.final_map = last_val;
    save_ckpt(start_step + res.steps_run);  // global step, so a resumed run can itself be resumed
    res.checkpoint_path = ckpt_path;
    return res;
}

}  // namespace pave

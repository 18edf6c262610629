// Release acceptance suite: one pass/fail line per criterion, exit code is
// the number of failures. Everything runs from scratch (including the
// training-based criteria), so a full pass takes a while; the gradient,
// matching, and invariant criteria alone finish in a few minutes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "pave/model.hpp"
#include "pave/train.hpp"
#include "test_util.hpp"

using namespace pave;
using pave_test::fd_check_sampled;
using pave_test::random_var;
using pave_test::weighted_sum;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

// ---------------------------------------------------------------- criterion 1
// Analytic gradients of every differentiable block match central finite
// differences (64-bit, eps 1e-5) with max relative error < 1e-4 over >= 10
// random seeds per block, in under 5 minutes.

// Shared token fixture: backbone + tokenizer over a small hand-assembled clip
// (built once; the FD loops only differentiate the modules under test).
struct TokenFixture {
    ParamRegistry reg;
    Rng rng{7};
    Backbone bb{reg, "backbone", 32, rng};
    Tokenizer tok{reg, "tok", 32, rng};
    ClipSample clip;
    std::vector<TokenSet> frames;

    TokenFixture() {
        FigureSpec a, b;
        a.base_x = 10;
        a.base_y = 18;
        a.height = 16;
        a.vx = 1.2;
        b.base_x = 24;
        b.base_y = 16;
        b.height = 20;
        b.vy = -0.8;
        clip = assemble_clip({a, b}, 1, 32, 32, 31);
        for (int f = 0; f < clip.clip.frame_count(); ++f) {
            frames.push_back(tok.tokenize(bb.extract(frame_to_var(clip.clip, f))));
        }
    }
};

GtPose rnd_gt(Rng& rng, int joints) {
    GtPose g;
    for (int j = 0; j < joints; ++j) {
        g.joints.push_back(rng.uniform(0.1, 0.9));
        g.joints.push_back(rng.uniform(0.1, 0.9));
        g.visible.push_back(rng.uniform() > 0.2);
    }
    if (std::none_of(g.visible.begin(), g.visible.end(), [](bool v) { return v; })) g.visible[0] = true;
    return g;
}

// FD against the analytic gradient of one named parameter of a full model
// under the total set loss (fn mutates the parameter in place and restores it).
// Coordinates whose gradient sits below the finite-difference noise floor are
// skipped: with a loss of magnitude ~50, the rounding of each evaluation is
// ~1e-14, so the central difference carries ~5e-10 of absolute noise and a
// derivative below ~1e-5 cannot be resolved to 1e-4 relative.
double fd_param(const PaveNet& model, const std::string& pname, const VideoClip& clip,
                const std::vector<GtPose>& gts, int n_coords, std::uint64_t seed) {
    Var w = model.params.find(pname);
    auto loss_of = [&]() {
        ModelOutput out = model.forward(clip);
        return total_loss(out.stages(), gts).total;
    };
    backward(loss_of());
    std::vector<double> analytic = w->grad;
    Rng rng(seed);
    const double eps = 1e-5;
    double max_rel = 0;
    int tested = 0;
    for (int c = 0; c < 20 * n_coords && tested < n_coords; ++c) {
        const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w->data.size()) - 1));
        if (std::fabs(analytic[i]) < 1e-5) continue;
        ++tested;
        const double keep = w->data[i];
        w->data[i] = keep + eps;
        const double fp = loss_of()->data[0];
        w->data[i] = keep - eps;
        const double fm = loss_of()->data[0];
        w->data[i] = keep;
        const double fd = (fp - fm) / (2.0 * eps);
        max_rel = std::max(max_rel, std::fabs(fd - analytic[i]) / (std::fabs(analytic[i]) + 1e-8));
    }
    return max_rel;
}

Outcome criterion_gradients() {
    const double t0 = now_s();
    double worst = 0;
    std::string worst_block = "-";
    auto track = [&](const char* block, double err) {
        if (err > worst) {
            worst = err;
            worst_block = block;
        }
    };

    TokenFixture fx;
    const int kf = fx.clip.clip.keyframe_index();

    for (std::uint64_t s = 0; s < 10; ++s) {
        // layer_norm
        {
            ParamRegistry reg;
            LayerNormBlock ln(reg, "ln", 8);
            Var x = random_var({4, 8}, 100 + s);
            auto fn = [&](const Var& v) { return weighted_sum(ln.forward(v), 11 + s); };
            track("layer_norm", fd_check_sampled(fn, x, 8, 900 + s));
        }
        // mhsa
        {
            ParamRegistry reg;
            Rng rng(150 + s);
            Mhsa attn(reg, "mhsa", 16, 4, rng);
            Var x = random_var({6, 16}, 200 + s);
            auto fn = [&](const Var& v) { return weighted_sum(attn.forward(v), 13 + s); };
            track("mhsa", fd_check_sampled(fn, x, 6, 910 + s));
        }
        // ffn
        {
            ParamRegistry reg;
            Rng rng(160 + s);
            Ffn ffn(reg, "ffn", 16, 32, rng);
            Var x = random_var({5, 16}, 210 + s);
            auto fn = [&](const Var& v) { return weighted_sum(ffn.forward(v), 17 + s); };
            track("ffn", fd_check_sampled(fn, x, 6, 920 + s));
        }
        // regression / score heads (linear and mlp)
        {
            ParamRegistry reg;
            Rng rng(170 + s);
            Linear lin(reg, "lin", 6, 9, rng);
            Mlp mlp(reg, "mlp", 6, 12, 4, rng);
            Var x = random_var({3, 6}, 220 + s);
            auto fn_lin = [&](const Var& v) { return weighted_sum(lin.forward(v), 19 + s); };
            track("linear_head", fd_check_sampled(fn_lin, x, 6, 930 + s));
            auto fn_mlp = [&](const Var& v) { return weighted_sum(softplus(mlp.forward(v)), 23 + s); };
            track("mlp_head", fd_check_sampled(fn_mlp, x, 6, 940 + s));
        }
        // msdeform_attn core: two levels, two frames, FD through every input
        {
            GridInfo grid;
            grid.level_h = {3, 2};
            grid.level_w = {4, 2};
            grid.level_offset = {0, 12};
            grid.total = 16;
            std::vector<Var> values = {random_var({16, 4}, 300 + s), random_var({16, 4}, 301 + s)};
            std::vector<std::pair<int, int>> amap = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
            Var anchors = random_var({3, 8}, 302 + s, 0.1, 0.9);
            Var offsets = random_var({3, 32}, 303 + s, -0.2, 0.2);
            Var logits = random_var({3, 16}, 304 + s);
            auto run = [&](const std::vector<Var>& v, const Var& a, const Var& o, const Var& l) {
                return weighted_sum(deform_attend(v, grid, a, amap, o, l, 2, 2), 29 + s);
            };
            auto fn_val = [&](const Var& v) { return run({v, values[1]}, anchors, offsets, logits); };
            track("msdeform_attn/values", fd_check_sampled(fn_val, values[0], 5, 950 + s));
            auto fn_anc = [&](const Var& v) { return run(values, v, offsets, logits); };
            track("msdeform_attn/anchors", fd_check_sampled(fn_anc, anchors, 4, 951 + s));
            auto fn_off = [&](const Var& v) { return run(values, anchors, v, logits); };
            track("msdeform_attn/offsets", fd_check_sampled(fn_off, offsets, 4, 952 + s));
            auto fn_log = [&](const Var& v) { return run(values, anchors, offsets, v); };
            track("msdeform_attn/logits", fd_check_sampled(fn_log, logits, 4, 953 + s));
        }
        // spatial encoder wrt keyframe tokens
        {
            EncoderConfig ec;
            ec.layers = 1;
            ec.embed_dim = 32;
            ec.heads = 4;
            ec.points = 2;
            ec.levels = 2;
            ParamRegistry reg;
            Rng rng(400 + s);
            Encoder enc(reg, "enc", ec, rng);
            auto fn = [&](const Var& v) {
                TokenSet ts = fx.frames[static_cast<std::size_t>(kf)];
                ts.tokens = v;
                return weighted_sum(enc.encode_frame(ts).tokens, 31 + s);
            };
            track("spatial_encoder", fd_check_sampled(fn, fx.frames[static_cast<std::size_t>(kf)].tokens, 4, 960 + s));
        }
        // spatiotemporal encoder wrt an auxiliary frame's tokens
        {
            EncoderConfig ec;
            ec.layers = 1;
            ec.embed_dim = 32;
            ec.heads = 4;
            ec.points = 2;
            ec.levels = 2;
            ec.mode = EncoderMode::spatiotemporal;
            ec.max_frames = 3;
            ParamRegistry reg;
            Rng rng(420 + s);
            Encoder enc(reg, "ste", ec, rng);
            auto fn = [&](const Var& v) {
                std::vector<TokenSet> frames = fx.frames;
                frames[0].tokens = v;
                return weighted_sum(enc.encode_clip(frames, kf).tokens, 37 + s);
            };
            track("st_encoder", fd_check_sampled(fn, fx.frames[0].tokens, 4, 970 + s));
        }
        // pose decoder wrt keyframe tokens (through poses, logits and scales)
        {
            StpdConfig sc;
            sc.layers = 2;
            sc.queries = 4;
            sc.joints = 15;
            sc.embed_dim = 32;
            sc.heads = 4;
            sc.points = 2;
            sc.levels = 2;
            sc.frames = 3;
            ParamRegistry reg;
            Rng rng(440 + s);
            Stpd dec(reg, "stpd", sc, rng);
            auto fn = [&](const Var& v) {
                std::vector<TokenSet> frames = fx.frames;
                frames[static_cast<std::size_t>(kf)].tokens = v;
                StpdOutput out = dec.forward(frames[static_cast<std::size_t>(kf)], frames);
                return add(weighted_sum(out.layer_poses.back(), 41 + s),
                           add(weighted_sum(out.layer_logits.back(), 43 + s),
                               weighted_sum(out.layer_scales.back(), 47 + s)));
            };
            track("stpd", fd_check_sampled(fn, fx.frames[static_cast<std::size_t>(kf)].tokens, 3, 980 + s));
        }
        // joint decoder wrt the input poses
        {
            StjdConfig jc;
            jc.layers = 2;
            jc.joints = 15;
            jc.embed_dim = 32;
            jc.heads = 4;
            jc.points = 2;
            jc.levels = 2;
            jc.frames = 3;
            ParamRegistry reg;
            Rng rng(460 + s);
            Stjd dec(reg, "stjd", jc, rng);
            // The refinement heads are zero-initialized (identity); perturb
            // them so the FD exercises a non-trivial function.
            for (auto& layer : dec.layers) {
                for (auto& w : layer.refine_head.fc2.weight->data) w = rng.uniform(-0.05, 0.05);
            }
            Var poses = random_var({2, 30}, 470 + s, 0.2, 0.8);
            auto fn = [&](const Var& v) { return weighted_sum(dec.refine_all(v, fx.frames), 53 + s); };
            track("stjd", fd_check_sampled(fn, poses, 5, 990 + s));
        }
        // rle_loss wrt mu and (softplus-mapped) scale
        {
            Rng rng(500 + s);
            std::vector<GtPose> gts = {rnd_gt(rng, 3), rnd_gt(rng, 3)};
            MatchResult match;
            match.pairs = {{2, 0}, {0, 1}};
            match.background = {1, 3};
            Var mu = random_var({4, 6}, 510 + s);
            Var raw = random_var({4, 6}, 511 + s);
            auto fn_mu = [&](const Var& v) { return rle_loss(v, softplus(raw), gts, match); };
            track("rle_loss/mu", fd_check_sampled(fn_mu, mu, 6, 995 + s));
            auto fn_b = [&](const Var& v) { return rle_loss(mu, softplus(v), gts, match); };
            track("rle_loss/scale", fd_check_sampled(fn_b, raw, 6, 996 + s));
        }
        // cls_loss wrt logits, full sweep
        {
            MatchResult match;
            match.pairs = {{1, 0}, {4, 1}};
            match.background = {0, 2, 3};
            Var logits = random_var({5, 1}, 520 + s, -2, 2);
            auto fn = [&](const Var& v) { return cls_loss(v, match, 2); };
            track("cls_loss", fd_check_sampled(fn, logits, 5, 997 + s));
        }
    }

    // total_loss through a tiny end-to-end model, FD on a rotating parameter.
    {
        ModelConfig mc;
        mc.embed_dim = 16;
        mc.queries = 4;
        mc.span = 1;
        mc.enc_layers = 1;
        mc.dec_layers = 1;
        mc.joint_layers = 1;
        mc.heads = 4;
        mc.points = 2;
        const std::vector<std::string> names = {
            "stpd.layer.0.self.wq.weight",   "stjd.layer.0.cross.value_proj.weight",
            "encoder.layer.0.ffn.fc1.weight", "backbone.conv.4.weight",
            "stpd.score.fc2.weight",
        };
        for (std::uint64_t s = 0; s < 10; ++s) {
            PaveNet model(mc, 60 + s);
            // The residual / refinement heads are zero-initialized, which
            // kills the gradient of everything upstream of them; jiggle the
            // output layers so the joint-decoder path carries gradient.
            Rng jig(700 + s);
            for (auto& layer : model.stjd.layers) {
                for (auto& v : layer.refine_head.fc2.weight->data) v = jig.uniform(-0.02, 0.02);
            }
            for (auto& layer : model.stpd.layers) {
                for (auto& v : layer.refine_head.fc2.weight->data) v = jig.uniform(-0.02, 0.02);
            }
            ClipSample clip = generate_clip(600 + s, 2, Difficulty::easy, 1);
            const std::string& pname = names[static_cast<std::size_t>(s) % names.size()];
            track("total_loss", fd_param(model, pname, clip.clip, clip.keyframe_gt(), 3, 998 + s));
        }
    }

    const double dt = now_s() - t0;
    Outcome o;
    o.pass = worst < 1e-4 && dt < 300.0;
    o.detail = fmt("max rel err %.3e (worst: %s), %.1f s", worst, worst_block.c_str(), dt);
    return o;
}

// ---------------------------------------------------------------- criterion 2
// Hungarian matcher reproduces the permutation brute force exactly on 200
// random cost matrices with all shapes up to 6x6, in under 10 seconds.

double assignment_cost(const std::vector<std::vector<double>>& cost, const MatchResult& m) {
    double total = 0;
    for (auto [p, g] : m.pairs) total += cost[static_cast<std::size_t>(p)][static_cast<std::size_t>(g)];
    return total;
}

double brute_force_cost(const std::vector<std::vector<double>>& cost) {
    const int m = static_cast<int>(cost.size());
    const int g = static_cast<int>(cost[0].size());
    std::vector<int> preds(static_cast<std::size_t>(m));
    std::iota(preds.begin(), preds.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0;
        for (int j = 0; j < g; ++j) {
            total += cost[static_cast<std::size_t>(preds[static_cast<std::size_t>(j)])][static_cast<std::size_t>(j)];
        }
        best = std::min(best, total);
    } while (std::next_permutation(preds.begin(), preds.end()));
    return best;
}

Outcome criterion_hungarian() {
    const double t0 = now_s();
    Rng rng(404);
    double max_gap = 0;
    int bad = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int g = 1 + static_cast<int>(rng.uniform_int(0, 5));
        const int m = g + static_cast<int>(rng.uniform_int(0, 6 - g));
        std::vector<std::vector<double>> cost(static_cast<std::size_t>(m),
                                              std::vector<double>(static_cast<std::size_t>(g)));
        for (auto& row : cost) {
            for (auto& c : row) c = rng.uniform(-2, 10);
        }
        MatchResult res = hungarian_match(cost);
        std::vector<bool> used(static_cast<std::size_t>(m), false);
        bool ok = static_cast<int>(res.pairs.size()) == g;
        for (auto [p, gt] : res.pairs) {
            if (used[static_cast<std::size_t>(p)]) ok = false;
            used[static_cast<std::size_t>(p)] = true;
        }
        const double gap = std::fabs(assignment_cost(cost, res) - brute_force_cost(cost));
        max_gap = std::max(max_gap, gap);
        if (!ok || gap > 1e-12) ++bad;
    }
    const double dt = now_s() - t0;
    Outcome o;
    o.pass = bad == 0 && dt < 10.0;
    o.detail = fmt("200 trials, max |cost gap| %.2e, %.2f s", max_gap, dt);
    return o;
}

// ---------------------------------------------------------------- criterion 3
// Attention cost accounting: dense spatiotemporal / single-frame = f^2
// exactly, 25 at f = 5; the spatial encoder's clip total is exactly f times
// the single-frame cost.

Outcome criterion_cost_scaling() {
    EncoderConfig dense;
    dense.kind = AttentionKind::dense;
    dense.layers = 3;
    dense.embed_dim = 48;
    dense.mode = EncoderMode::spatiotemporal;

    bool ok = true;
    for (std::int64_t n : {10, 117, 4096}) {
        const std::int64_t single = count_attention_cost(dense, 1, n);
        for (int f = 1; f <= 5; ++f) {
            if (count_attention_cost(dense, f, n) != single * f * f) ok = false;
        }
        if (count_attention_cost(dense, 5, n) != 25 * single) ok = false;
    }

    EncoderConfig spatial;
    spatial.mode = EncoderMode::spatial;
    for (AttentionKind kind : {AttentionKind::dense, AttentionKind::deformable}) {
        spatial.kind = kind;
        for (std::int64_t n : {10, 480}) {
            const std::int64_t single = count_attention_cost(spatial, 1, n);
            for (int f = 1; f <= 5; ++f) {
                if (count_attention_cost(spatial, f, n) != single * f) ok = false;
            }
        }
    }

    Outcome o;
    o.pass = ok;
    o.detail = "dense ST/single = f^2 (25 at f=5); spatial clip total = f x single-frame";
    return o;
}

// ---------------------------------------------------------------- criterion 4
// Structural invariants: (a) keyframe candidates ignore auxiliary frames
// bitwise, (b) layer-0 references repeat the keyframe pose across frames,
// (c) zero-initialized refinement leaves final poses at the references,
// (d) top-M selection is exact on 1000 random score vectors.

Outcome criterion_invariants() {
    bool ok_a = true, ok_b = true, ok_c = true, ok_d = true;

    ModelConfig mc;
    mc.embed_dim = 32;
    mc.queries = 6;
    mc.span = 1;
    mc.enc_layers = 1;
    mc.dec_layers = 2;
    mc.joint_layers = 1;
    mc.heads = 4;
    mc.points = 2;
    mc.height = 32;
    mc.width = 32;
    PaveNet model(mc, 11);
    FigureSpec a, b;
    a.base_x = 10;
    a.base_y = 18;
    a.height = 16;
    a.vx = 1.2;
    b.base_x = 24;
    b.base_y = 16;
    b.height = 20;
    b.vy = -0.8;
    ClipSample clip = assemble_clip({a, b}, 1, 32, 32, 31);

    ModelOutput base = model.forward(clip.clip);

    // (a) scribble over a non-keyframe frame; candidates and selection must
    // not move by a single bit.
    {
        VideoClip mutated = clip.clip;
        Rng rng(321);
        for (auto& px : mutated.frames[0]) px = rng.uniform(0, 1);
        ModelOutput pert = model.forward(mutated);
        ok_a = pert.stpd.selected == base.stpd.selected &&
               pert.stpd.candidate_poses->data == base.stpd.candidate_poses->data &&
               pert.stpd.candidate_logits->data == base.stpd.candidate_logits->data &&
               pert.stpd.candidate_scales->data == base.stpd.candidate_scales->data;
    }

    // (b) ref0 is the keyframe pose broadcast to every frame, exactly.
    {
        const Var& r = base.stpd.ref0;
        const std::int64_t m = r->dim(0);
        const int frames = mc.decode_frames();
        const std::int64_t jc2 = r->dim(1) / frames;
        const int kf = frames / 2;
        for (std::int64_t q = 0; q < m && ok_b; ++q) {
            for (int fi = 0; fi < frames; ++fi) {
                for (std::int64_t c = 0; c < jc2; ++c) {
                    if (r->data[static_cast<std::size_t>(q * r->dim(1) + fi * jc2 + c)] !=
                        r->data[static_cast<std::size_t>(q * r->dim(1) + kf * jc2 + c)]) {
                        ok_b = false;
                    }
                }
            }
        }
    }

    // (c) at initialization every refinement head is zero, so the keyframe
    // block of the layer-0 references flows through both decoders untouched.
    {
        const Var& r = base.stpd.ref0;
        const int frames = mc.decode_frames();
        const std::int64_t jc2 = r->dim(1) / frames;
        const int kf = frames / 2;
        for (std::size_t l = 0; l < base.stpd.layer_poses.size() && ok_c; ++l) {
            const Var& ref = l == 0 ? base.stpd.ref0 : base.stpd.layer_refs[l - 1];
            const Var& pose = base.stpd.layer_poses[l];
            for (std::size_t i = 0; i < pose->data.size(); ++i) {
                const auto q = static_cast<std::int64_t>(i) / jc2;
                const auto c = static_cast<std::int64_t>(i) % jc2;
                if (pose->data[i] != ref->data[static_cast<std::size_t>(q * ref->dim(1) + kf * jc2 + c)]) ok_c = false;
            }
        }
        if (base.final_poses->data != base.stpd.layer_poses.back()->data) ok_c = false;
    }

    // (d) top-M: min selected >= max unselected on 1000 random vectors.
    {
        Rng rng(99);
        for (int trial = 0; trial < 1000 && ok_d; ++trial) {
            const int n = 3 + static_cast<int>(rng.uniform_int(0, 60));
            const std::int64_t m = 1 + rng.uniform_int(0, n - 1);
            std::vector<double> s(static_cast<std::size_t>(n));
            for (auto& v : s) v = rng.uniform(-3, 3);
            auto idx = top_m_indices(s, m);
            if (static_cast<std::int64_t>(idx.size()) != m) ok_d = false;
            std::vector<bool> in(static_cast<std::size_t>(n), false);
            double min_sel = 1e300;
            for (auto i : idx) {
                in[static_cast<std::size_t>(i)] = true;
                min_sel = std::min(min_sel, s[static_cast<std::size_t>(i)]);
            }
            for (int i = 0; i < n; ++i) {
                if (!in[static_cast<std::size_t>(i)] && s[static_cast<std::size_t>(i)] > min_sel) ok_d = false;
            }
        }
    }

    Outcome o;
    o.pass = ok_a && ok_b && ok_c && ok_d;
    o.detail = fmt("aux-frame %s, ref broadcast %s, zero-init identity %s, top-M %s", ok_a ? "ok" : "FAIL",
                   ok_b ? "ok" : "FAIL", ok_c ? "ok" : "FAIL", ok_d ? "ok" : "FAIL");
    return o;
}

// ---------------------------------------------------------------- criterion 5
// The full model reaches validation mAP >= 0.85 (radius 0.1 x height) on the
// easy split within 5000 steps, seed-pinned.

Outcome criterion_training() {
    const double t0 = now_s();
    ModelConfig mc;  // paper-scale defaults
    PaveNet model(mc, 5);
    TrainConfig tc;
    tc.steps = 5000;
    tc.batch = 1;
    tc.threads = 1;
    tc.lr = 3e-4;
    tc.l_cls = 3.0;
    tc.score_threshold = 0.2;
    tc.eval_every = 100;
    tc.eval_clips = 8;
    tc.target_map = 0.85;
    tc.seed = 5;
    tc.difficulty = Difficulty::easy;
    TrainResult res = train(model, tc);
    const double dt = now_s() - t0;
    Outcome o;
    o.pass = res.final_map >= 0.85 && res.steps_run <= 5000;
    o.detail = fmt("val mAP %.3f after %d steps, %.0f s", res.final_map, res.steps_run, dt);
    return o;
}

// ------------------------------------------------------------ criteria 6 + 7
// On the keyframe-corrupted hard split (median over 3 seeds): the full model
// beats the no-joint-decoder variant and the single-frame variant by >= 0.02
// mAP, and pose-aware references beat random learnable references by >= 0.05.

double train_variant_map(Variant v, std::uint64_t seed, int steps) {
    ModelConfig mc;
    mc.embed_dim = 32;
    mc.queries = 8;
    mc.span = v == Variant::image_only ? 0 : 1;
    mc.enc_layers = 1;
    mc.dec_layers = 2;
    mc.joint_layers = 2;
    mc.heads = 4;
    mc.points = 2;
    mc.variant = v;
    PaveNet model(mc, seed);
    TrainConfig tc;
    tc.steps = steps;
    tc.batch = 1;
    tc.threads = 1;
    tc.lr = 3e-4;
    tc.l_cls = 3.0;
    tc.score_threshold = 0.2;
    tc.eval_every = steps;  // single final evaluation
    tc.eval_clips = 16;
    tc.seed = seed;
    tc.difficulty = Difficulty::hard;
    tc.occlude = 0.8;
    tc.max_persons = 2;
    TrainResult res = train(model, tc);
    return res.final_map;
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[1];
}

struct AblationMaps {
    double full = 0, no_stjd = 0, image_only = 0, random_refs = 0;
};

AblationMaps run_ablations(int steps) {
    AblationMaps m;
    std::vector<double> full, nj, io, rr;
    for (std::uint64_t seed : {1, 2, 3}) {
        full.push_back(train_variant_map(Variant::pave, seed, steps));
        nj.push_back(train_variant_map(Variant::no_stjd, seed, steps));
        io.push_back(train_variant_map(Variant::image_only, seed, steps));
        rr.push_back(train_variant_map(Variant::random_refs, seed, steps));
    }
    m.full = median3(full);
    m.no_stjd = median3(nj);
    m.image_only = median3(io);
    m.random_refs = median3(rr);
    return m;
}

Outcome criterion_temporal(const AblationMaps& m) {
    Outcome o;
    o.pass = m.full >= m.no_stjd + 0.02 && m.full >= m.image_only + 0.02;
    o.detail = fmt("median mAP: full %.3f, no-joint-decoder %.3f, single-frame %.3f", m.full, m.no_stjd, m.image_only);
    return o;
}

Outcome criterion_references(const AblationMaps& m) {
    Outcome o;
    o.pass = m.full >= m.random_refs + 0.05;
    o.detail = fmt("median mAP: pose-aware refs %.3f, random learnable refs %.3f", m.full, m.random_refs);
    return o;
}

// ---------------------------------------------------------------- criterion 8
// Forward wall-clock is person-count independent (< 15% spread across 1..20
// persons) while the two-stage per-person baseline grows >= 3x from 1 to 10.

ClipSample crowd_scene(int n, int span, std::int64_t h, std::int64_t w, std::uint64_t seed) {
    Rng rng(seed + static_cast<std::uint64_t>(n) * 7919);
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const int rows = (n + cols - 1) / cols;
    std::vector<FigureSpec> figs;
    for (int i = 0; i < n; ++i) {
        FigureSpec fg;
        const int r = i / cols, c = i % cols;
        fg.height = std::min<double>(static_cast<double>(h) / (rows + 1.0), 24.0);
        fg.base_x = (c + 0.5) / cols * static_cast<double>(w - 1) + (rng.uniform() - 0.5) * 2.0;
        fg.base_y = (r + 0.7) / rows * static_cast<double>(h - 1);
        fg.vx = (rng.uniform() - 0.5) * 1.0;
        fg.phase = rng.uniform() * 6.28;
        figs.push_back(fg);
    }
    return assemble_clip(figs, span, h, w, seed);
}

// Interleaved timing: one rep of every workload per round, so machine drift
// (frequency scaling, background load) hits all workloads equally instead of
// biasing whichever ran last. The rep count is high because a shared host's
// throughput can swing by 2x on second timescales; with ~150 interleaved
// samples the per-workload medians agree to a few percent.
std::vector<double> interleaved_medians(const std::vector<std::function<void()>>& fns, int reps) {
    for (const auto& fn : fns) fn();  // warm-up, excluded
    std::vector<std::vector<double>> ms(fns.size());
    for (int r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < fns.size(); ++i) {
            const double t0 = now_s();
            fns[i]();
            ms[i].push_back((now_s() - t0) * 1e3);
        }
    }
    std::vector<double> medians;
    for (auto& v : ms) {
        std::sort(v.begin(), v.end());
        medians.push_back(v[v.size() / 2]);
    }
    return medians;
}

Outcome criterion_timing() {
    ModelConfig mc;
    mc.queries = 21;  // fixed query budget above the largest crowd
    PaveNet model(mc, 9);
    TwoStageRef two_stage(9, mc.span);

    std::vector<ClipSample> scenes;
    for (int n : {1, 5, 10, 20}) scenes.push_back(crowd_scene(n, mc.span, mc.height, mc.width, 1234));
    std::vector<std::function<void()>> fns;
    for (const auto& s : scenes) fns.push_back([&model, &s]() { model.forward(s.clip); });
    const std::vector<double> pave_ms = interleaved_medians(fns, 150);
    const double lo = *std::min_element(pave_ms.begin(), pave_ms.end());
    const double hi = *std::max_element(pave_ms.begin(), pave_ms.end());
    const double spread = (hi - lo) / lo;

    const ClipSample& s1 = scenes[0];
    const ClipSample& s10 = scenes[2];
    const std::vector<double> two_ms = interleaved_medians(
        {[&]() { two_stage.predict(s1.clip, s1.keyframe_gt()); },
         [&]() { two_stage.predict(s10.clip, s10.keyframe_gt()); }},
        31);
    const double growth = two_ms[1] / two_ms[0];

    Outcome o;
    o.pass = spread < 0.15 && growth >= 3.0;
    o.detail = fmt("forward spread %.1f%% over 1/5/10/20 persons (%.0f-%.0f ms); two-stage 10-vs-1 growth %.1fx",
                   spread * 100, lo, hi, growth);
    return o;
}

// ---------------------------------------------------------------- criterion 9
// Evaluator fixtures: hand-computed AP of 5/6 and a lossless (1e-9)
// write-then-parse prediction round trip.

Outcome criterion_evaluator() {
    bool ok_ap = true, ok_io = true;
    double max_ap_err = 0, max_rt_err = 0;

    {
        std::vector<Detection> d = {{0.9, true}, {0.8, false}, {0.7, true}};
        max_ap_err = std::fabs(compute_ap(d, 2) - 5.0 / 6.0);
        ok_ap = max_ap_err < 1e-9;
    }
    {
        std::vector<AnnotationImage> images(2);
        Rng rng(8);
        for (std::size_t i = 0; i < images.size(); ++i) {
            images[i].id = static_cast<std::int64_t>(i) + 1;
            images[i].file_name = "frame_" + std::to_string(i) + ".jpg";
            for (int p = 0; p < 2; ++p) {
                GtPose g;
                for (int j = 0; j < kNumJoints; ++j) {
                    g.joints.push_back(rng.uniform(0, 1));
                    g.joints.push_back(rng.uniform(0, 1));
                    g.visible.push_back(j % 3 != 0);
                }
                images[i].poses.push_back(std::move(g));
            }
        }
        const std::string path = "/tmp/pave_acceptance_roundtrip.json";
        write_predictions(images, path);
        AnnotationSet back = parse_posetrack_json(path);
        std::remove(path.c_str());
        ok_io = back.images.size() == 2 && back.keypoint_order == keypoint_names();
        for (std::size_t i = 0; ok_io && i < 2; ++i) {
            ok_io = back.images[i].id == images[i].id && back.images[i].poses.size() == 2;
            for (std::size_t p = 0; ok_io && p < 2; ++p) {
                for (std::size_t c = 0; c < images[i].poses[p].joints.size(); ++c) {
                    max_rt_err = std::max(
                        max_rt_err, std::fabs(back.images[i].poses[p].joints[c] - images[i].poses[p].joints[c]));
                }
            }
        }
        ok_io = ok_io && max_rt_err < 1e-9;
    }

    Outcome o;
    o.pass = ok_ap && ok_io;
    o.detail = fmt("AP fixture err %.1e, round-trip err %.1e", max_ap_err, max_rt_err);
    return o;
}

// --------------------------------------------------------------- criterion 10
// Laplace NLL analytics: the scale minimizing log(2b) + r/b is b = r, and the
// loss at mu = gt, b = 1 is exactly log 2.

Outcome criterion_rle_analytics() {
    double max_min_err = 0;
    for (double r : {0.1, 1.0, 10.0}) {
        double lo = 1e-4, hi = 1e3;
        for (int it = 0; it < 200; ++it) {
            const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
            if (rle_nll(r, m1, 0.0) < rle_nll(r, m2, 0.0)) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        max_min_err = std::max(max_min_err, std::fabs((lo + hi) / 2 - r) / r);
    }
    const double at_center = std::fabs(rle_nll(0.3, 1.0, 0.3) - std::log(2.0));

    Outcome o;
    o.pass = max_min_err < 1e-6 && at_center < 1e-12;
    o.detail = fmt("minimizer rel err %.1e, value-at-center err %.1e", max_min_err, at_center);
    return o;
}

void report(int idx, const char* name, const Outcome& o, int& failures) {
    std::printf("[%2d/10] %s  %-24s %s\n", idx, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

}  // namespace

int main(int argc, char** argv) {
    // --fast skips the training-based criteria (1 h+); --only N runs a single
    // criterion. Both are for iterating; the release gate is a bare run.
    bool fast = false;
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--fast") fast = true;
        if (std::string(argv[i]) == "--only" && i + 1 < argc) only = std::atoi(argv[i + 1]);
    }
    auto wanted = [&](int idx) { return only == 0 || only == idx; };

    int failures = 0;
    if (wanted(1)) report(1, "gradient suite", criterion_gradients(), failures);
    if (wanted(2)) report(2, "hungarian vs brute force", criterion_hungarian(), failures);
    if (wanted(3)) report(3, "attention cost scaling", criterion_cost_scaling(), failures);
    if (wanted(4)) report(4, "structural invariants", criterion_invariants(), failures);
    if (fast) {
        std::printf("[ 5/10] SKIP  training to 0.85 mAP   (--fast)\n");
        std::printf("[ 6/10] SKIP  temporal benefit        (--fast)\n");
        std::printf("[ 7/10] SKIP  reference ablation      (--fast)\n");
    } else {
        if (wanted(5)) report(5, "training to 0.85 mAP", criterion_training(), failures);
        if (wanted(6) || wanted(7)) {
            // One variant grid feeds both ablation criteria.
            AblationMaps maps = run_ablations(600);
            report(6, "temporal benefit", criterion_temporal(maps), failures);
            report(7, "reference ablation", criterion_references(maps), failures);
        }
    }
    if (wanted(8)) report(8, "timing vs person count", criterion_timing(), failures);
    if (wanted(9)) report(9, "evaluator fixtures", criterion_evaluator(), failures);
    if (wanted(10)) report(10, "laplace nll analytics", criterion_rle_analytics(), failures);

    std::printf("%d/10 criteria failed\n", failures);
    return failures;
}

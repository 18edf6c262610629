#include <cmath>

#include "doctest.h"
#include "pave/stjd.hpp"
#include "pave/synth.hpp"
#include "test_util.hpp"

using namespace pave;

using pave_test::weighted_sum;

namespace {

struct JdFixture {
    ParamRegistry reg;
    Rng rng{33};
    Backbone bb{reg, "backbone", 32, rng};
    Tokenizer tok{reg, "tok", 32, rng};
    ClipSample clip;
    std::vector<TokenSet> frames;

    JdFixture() {
        FigureSpec fig;
        fig.base_x = 14;
        fig.base_y = 18;
        fig.height = 20;
        fig.vx = 1.0;
        clip = assemble_clip({fig}, 1, 32, 32, 55);
        for (int f = 0; f < clip.clip.frame_count(); ++f) {
            frames.push_back(tok.tokenize(bb.extract(frame_to_var(clip.clip, f))));
        }
    }

    StjdConfig cfg() const {
        StjdConfig c;
        c.layers = 2;
        c.joints = 15;
        c.embed_dim = 32;
        c.heads = 4;
        c.points = 2;
        c.levels = 2;
        c.frames = 3;
        return c;
    }

    Var pose(std::uint64_t seed) const {
        Rng r(seed);
        std::vector<double> p(30);
        for (auto& v : p) v = r.uniform(0.1, 0.9);
        return make_var({15, 2}, std::move(p));
    }
};

}  // namespace

TEST_CASE("joint decoder") {
    JdFixture fx;
    Rng rng(3);
    Stjd jd(fx.reg, "stjd", fx.cfg(), rng);

    SUBCASE("zero-initialized refine heads give back the input pose") {
        Var p = fx.pose(1);
        Var out = jd.refine(p, fx.frames);
        REQUIRE(out->shape == std::vector<std::int64_t>{15, 2});
        for (std::size_t i = 0; i < p->data.size(); ++i) {
            CHECK(out->data[i] == doctest::Approx(p->data[i]).epsilon(1e-12));
        }
    }

    SUBCASE("poses are refined independently of their batch neighbours") {
        // nudge a head weight so refinement is non-trivial
        Var w = fx.reg.find("stjd.layer.0.refine.fc2.weight");
        REQUIRE(w);
        for (auto& v : w->data) v = 0.01;
        Var batch2 = concat_rows({reshape(fx.pose(1), {1, 30}), reshape(fx.pose(2), {1, 30})});
        Var batch3 = concat_rows(
            {reshape(fx.pose(1), {1, 30}), reshape(fx.pose(2), {1, 30}), reshape(fx.pose(3), {1, 30})});
        Var out2 = jd.refine_all(batch2, fx.frames);
        Var out3 = jd.refine_all(batch3, fx.frames);
        double moved = 0;
        for (std::int64_t i = 0; i < 60; ++i) {
            CHECK(out2->data[static_cast<std::size_t>(i)] ==
                  doctest::Approx(out3->data[static_cast<std::size_t>(i)]).epsilon(1e-12));
            moved = std::max(moved, std::abs(out2->data[static_cast<std::size_t>(i)] -
                                             batch2->data[static_cast<std::size_t>(i)]));
        }
        CHECK(moved > 1e-6);  // the refinement actually did something
    }

    SUBCASE("single-pose refine agrees with the batched path") {
        Var w = fx.reg.find("stjd.layer.1.refine.fc2.weight");
        REQUIRE(w);
        for (auto& v : w->data) v = -0.02;
        Var p = fx.pose(4);
        Var one = jd.refine(p, fx.frames);
        Var all = jd.refine_all(reshape(p, {1, 30}), fx.frames);
        for (std::size_t i = 0; i < 30; ++i) {
            CHECK(one->data[i] == doctest::Approx(all->data[i]).epsilon(1e-12));
        }
    }

    SUBCASE("joint count and frame count are validated") {
        CHECK_THROWS_AS(jd.refine(make_var({14, 2}, std::vector<double>(28, 0.5)), fx.frames), std::invalid_argument);
        std::vector<TokenSet> two = {fx.frames[0], fx.frames[1]};
        CHECK_THROWS_AS(jd.refine(fx.pose(1), two), std::invalid_argument);
    }

    SUBCASE("joint queries are shared: permuting poses permutes outputs") {
        Var w = fx.reg.find("stjd.layer.0.refine.fc2.weight");
        REQUIRE(w);
        for (auto& v : w->data) v = 0.015;
        Var ab = concat_rows({reshape(fx.pose(5), {1, 30}), reshape(fx.pose(6), {1, 30})});
        Var ba = concat_rows({reshape(fx.pose(6), {1, 30}), reshape(fx.pose(5), {1, 30})});
        Var out_ab = jd.refine_all(ab, fx.frames);
        Var out_ba = jd.refine_all(ba, fx.frames);
        for (std::size_t i = 0; i < 30; ++i) {
            CHECK(out_ab->data[i] == doctest::Approx(out_ba->data[i + 30]).epsilon(1e-12));
            CHECK(out_ab->data[i + 30] == doctest::Approx(out_ba->data[i]).epsilon(1e-12));
        }
    }

    SUBCASE("gradient flows to the input pose") {
        Var w = fx.reg.find("stjd.layer.0.refine.fc2.weight");
        REQUIRE(w);
        Rng r2(9);
        for (auto& v : w->data) v = r2.uniform(-0.02, 0.02);
        auto fn = [&](const Var& x) { return weighted_sum(jd.refine(x, fx.frames)); };
        CHECK(finite_difference_check(fn, fx.pose(7)) < 1e-4);
    }

    SUBCASE("gradient flows to the frame tokens") {
        auto fn = [&](const Var& x) {
            std::vector<TokenSet> frames = fx.frames;
            frames[0].tokens = x;
            return weighted_sum(jd.refine(fx.pose(8), frames));
        };
        Var leaf = make_var(fx.frames[0].tokens->shape, fx.frames[0].tokens->data, true);
        CHECK(pave_test::fd_check_sampled(fn, leaf, 30) < 1e-4);
    }
}

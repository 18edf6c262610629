#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "pave/matching.hpp"
#include "test_util.hpp"

using namespace pave;

namespace {

double assignment_cost(const std::vector<std::vector<double>>& cost, const MatchResult& m) {
    double total = 0;
    for (auto [p, g] : m.pairs) total += cost[static_cast<std::size_t>(p)][static_cast<std::size_t>(g)];
    return total;
}

// exhaustive minimum over all injective gt -> pred assignments
double brute_force_cost(const std::vector<std::vector<double>>& cost) {
    const int m = static_cast<int>(cost.size());
    const int g = static_cast<int>(cost[0].size());
    std::vector<int> preds(static_cast<std::size_t>(m));
    std::iota(preds.begin(), preds.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    std::sort(preds.begin(), preds.end());
    do {
        double total = 0;
        for (int j = 0; j < g; ++j) total += cost[static_cast<std::size_t>(preds[static_cast<std::size_t>(j)])][static_cast<std::size_t>(j)];
        best = std::min(best, total);
    } while (std::next_permutation(preds.begin(), preds.end()));
    return best;
}

GtPose make_gt(std::vector<double> joints, std::vector<bool> vis) {
    GtPose g;
    g.joints = std::move(joints);
    g.visible = std::move(vis);
    return g;
}

}  // namespace

TEST_CASE("hungarian_match") {
    SUBCASE("hand example picks the off-diagonal") {
        // row = prediction, column = ground truth
        std::vector<std::vector<double>> cost = {{4, 1}, {1, 5}, {3, 3}};
        MatchResult m = hungarian_match(cost);
        REQUIRE(m.pairs.size() == 2);
        CHECK(assignment_cost(cost, m) == 2.0);
        CHECK(m.background == std::vector<int>{2});
    }
    SUBCASE("exact optimum against permutation brute force, 200 trials") {
        Rng rng(404);
        for (int trial = 0; trial < 200; ++trial) {
            const int g = 1 + static_cast<int>(rng.uniform_int(0, 5));
            const int m = g + static_cast<int>(rng.uniform_int(0, 6 - g));
            std::vector<std::vector<double>> cost(static_cast<std::size_t>(m),
                                                  std::vector<double>(static_cast<std::size_t>(g)));
            for (auto& row : cost) {
                for (auto& c : row) c = rng.uniform(-2, 10);
            }
            MatchResult res = hungarian_match(cost);
            REQUIRE(static_cast<int>(res.pairs.size()) == g);
            // one-to-one
            std::vector<bool> used(static_cast<std::size_t>(m), false);
            for (auto [p, gt] : res.pairs) {
                CHECK(!used[static_cast<std::size_t>(p)]);
                used[static_cast<std::size_t>(p)] = true;
            }
            CHECK(assignment_cost(cost, res) == doctest::Approx(brute_force_cost(cost)).epsilon(1e-12));
        }
    }
    SUBCASE("more ground truths than predictions is an error") {
        CHECK_THROWS_AS(hungarian_match({{1.0, 2.0}}), std::invalid_argument);
    }
    SUBCASE("ragged and non-finite costs are errors") {
        CHECK_THROWS_AS(hungarian_match({{1.0, 2.0}, {1.0}}), std::invalid_argument);
        CHECK_THROWS_AS(hungarian_match({{std::nan("")}, {1.0}}), std::invalid_argument);
    }
}

TEST_CASE("match_cost") {
    // 2 joints, one visible: cls term + mean visible L1
    GtPose gt = make_gt({0.5, 0.5, 0.9, 0.9}, {true, false});
    const double pred[4] = {0.6, 0.3, 0.0, 0.0};
    // L1 over the visible joint = |0.6-0.5| + |0.3-0.5| = 0.3, mean over 1 joint
    const double c = match_cost(pred, 0.8, gt, 0.5, 1.0);
    CHECK(c == doctest::Approx(0.5 * 0.2 + 0.3).epsilon(1e-12));

    SUBCASE("nothing visible leaves only the classification term") {
        GtPose blind = make_gt({0.5, 0.5}, {false});
        CHECK(match_cost(pred, 0.25, blind, 2.0, 1.0) == doctest::Approx(2.0 * 0.75).epsilon(1e-12));
    }
}

TEST_CASE("rle_nll analytics") {
    SUBCASE("value at mu = gt, b = 1 is log 2") {
        CHECK(rle_nll(0.3, 1.0, 0.3) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("minimizer over b equals the residual") {
        for (double r : {0.1, 1.0, 10.0}) {
            // golden-section search on log(2b) + r/b
            double lo = 1e-4, hi = 1e3;
            for (int it = 0; it < 200; ++it) {
                const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
                if (rle_nll(r, m1, 0.0) < rle_nll(r, m2, 0.0)) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            CHECK((lo + hi) / 2 == doctest::Approx(r).epsilon(1e-6));
        }
    }
    SUBCASE("non-positive scale is an error") { CHECK_THROWS_AS(rle_nll(0, 0.0, 0), std::invalid_argument); }
}

TEST_CASE("rle_loss") {
    // 2 preds, 2 joints each; match pred 1 -> gt 0 with one joint hidden
    Var mu = make_var({2, 4}, {0.0, 0.0, 0.0, 0.0, 0.2, 0.4, 0.9, 0.9}, true);
    Var b = full({2, 4}, 0.5, true);
    std::vector<GtPose> gts = {make_gt({0.1, 0.5, 0.0, 0.0}, {true, false})};
    MatchResult match;
    match.pairs = {{1, 0}};
    match.background = {0};

    Var loss = rle_loss(mu, b, gts, match);
    // visible coords: |0.2-0.1|/0.5 + |0.4-0.5|/0.5 + 2*log(1), averaged over 1 match
    const double expect = (std::log(2.0 * 0.5) + 0.1 / 0.5) + (std::log(2.0 * 0.5) + 0.1 / 0.5);
    CHECK(loss->data[0] == doctest::Approx(expect).epsilon(1e-12));

    SUBCASE("background predictions receive no coordinate gradient") {
        backward(loss);
        for (int c = 0; c < 4; ++c) CHECK(mu->grad[static_cast<std::size_t>(c)] == 0.0);
        CHECK(mu->grad[4] != 0.0);
    }
    SUBCASE("finite differences through mu and b") {
        auto fn_mu = [&](const Var& x) { return rle_loss(x, b, gts, match); };
        CHECK(finite_difference_check(fn_mu, mu) < 1e-6);
        auto fn_b = [&](const Var& x) { return rle_loss(mu, x, gts, match); };
        CHECK(finite_difference_check(fn_b, b) < 1e-6);
    }
}

TEST_CASE("cls_loss") {
    MatchResult match;
    match.pairs = {{0, 0}};
    match.background = {1};

    SUBCASE("matches the closed-form focal loss") {
        const double x0 = 0.7, x1 = -0.4;
        Var logits = make_var({2, 1}, {x0, x1}, true);
        Var loss = cls_loss(logits, match, 1);
        const double p0 = 1.0 / (1.0 + std::exp(-x0));
        const double p1 = 1.0 / (1.0 + std::exp(-x1));
        const double expect = 0.25 * std::pow(1 - p0, 2) * -std::log(p0)          // matched, target 1
                              + 0.75 * std::pow(p1, 2) * -std::log(1 - p1);       // background, target 0
        CHECK(loss->data[0] == doctest::Approx(expect).epsilon(1e-9));
    }
    SUBCASE("saturated predictions cost almost nothing") {
        Var logits = make_var({2, 1}, {30.0, -30.0});
        CHECK(cls_loss(logits, match, 1)->data[0] < 1e-6);
    }
    SUBCASE("normalized by ground-truth count, floor 1") {
        Var logits = make_var({2, 1}, {0.7, -0.4});
        MatchResult none;
        none.background = {0, 1};
        const double with_floor = cls_loss(logits, none, 0)->data[0];
        CHECK(with_floor > 0.0);
        Var big = cls_loss(logits, match, 4);
        Var small = cls_loss(logits, match, 1);
        CHECK(big->data[0] == doctest::Approx(small->data[0] / 4).epsilon(1e-12));
    }
    SUBCASE("finite differences") {
        Var logits = make_var({3, 1}, {0.7, -0.4, 0.1}, true);
        MatchResult m2;
        m2.pairs = {{2, 0}, {0, 1}};
        m2.background = {1};
        auto fn = [&](const Var& x) { return cls_loss(x, m2, 2); };
        CHECK(finite_difference_check(fn, logits) < 1e-6);
    }
}

TEST_CASE("total_loss") {
    Rng rng(777);
    auto random_stage = [&](std::int64_t m, int j) {
        StageOutput s;
        std::vector<double> p(static_cast<std::size_t>(m * j * 2)), l(static_cast<std::size_t>(m)),
            b(static_cast<std::size_t>(m * j * 2));
        for (auto& v : p) v = rng.uniform(0, 1);
        for (auto& v : l) v = rng.uniform(-1, 1);
        for (auto& v : b) v = rng.uniform(0.2, 1.0);
        s.poses = make_var({m, j * 2}, std::move(p), true);
        s.logits = make_var({m, 1}, std::move(l), true);
        s.scales = make_var({m, j * 2}, std::move(b), true);
        return s;
    };
    std::vector<GtPose> gts = {make_gt({0.2, 0.2, 0.5, 0.6}, {true, true}),
                               make_gt({0.8, 0.3, 0.7, 0.9}, {true, false})};

    SUBCASE("breakdown identity and per-stage bookkeeping") {
        std::vector<StageOutput> stages;
        for (int i = 0; i < 5; ++i) stages.push_back(random_stage(4, 2));
        LossBreakdown lb = total_loss(stages, gts, 0.5, 1.0);
        REQUIRE(lb.stage_cls.size() == 5);
        REQUIRE(lb.stage_rle.size() == 5);
        REQUIRE(lb.matches.size() == 5);
        double cls = 0, rle = 0;
        for (int i = 0; i < 5; ++i) {
            cls += lb.stage_cls[static_cast<std::size_t>(i)];
            rle += lb.stage_rle[static_cast<std::size_t>(i)];
            CHECK(lb.matches[static_cast<std::size_t>(i)].pairs.size() == 2);
        }
        CHECK(lb.total->data[0] == doctest::Approx(0.5 * cls + 1.0 * rle).epsilon(1e-12));
        CHECK(lb.cls_sum == doctest::Approx(cls).epsilon(1e-12));
        CHECK(lb.rle_sum == doctest::Approx(rle).epsilon(1e-12));
    }
    SUBCASE("invariant under prediction permutation") {
        StageOutput s = random_stage(4, 2);
        StageOutput perm;
        std::vector<std::int64_t> order = {2, 0, 3, 1};
        perm.poses = gather_rows(s.poses, order);
        perm.logits = gather_rows(s.logits, order);
        perm.scales = gather_rows(s.scales, order);
        LossBreakdown a = total_loss({s}, gts);
        LossBreakdown b = total_loss({perm}, gts);
        CHECK(a.total->data[0] == doctest::Approx(b.total->data[0]).epsilon(1e-9));
    }
    SUBCASE("finite differences through matching + loss") {
        StageOutput s = random_stage(3, 2);
        auto fn = [&](const Var& x) {
            StageOutput t = s;
            t.poses = x;
            return total_loss({t}, gts).total;
        };
        CHECK(finite_difference_check(fn, s.poses) < 1e-4);
        auto fn_l = [&](const Var& x) {
            StageOutput t = s;
            t.logits = x;
            return total_loss({t}, gts).total;
        };
        CHECK(finite_difference_check(fn_l, s.logits) < 1e-4);
        auto fn_b = [&](const Var& x) {
            StageOutput t = s;
            t.scales = x;
            return total_loss({t}, gts).total;
        };
        CHECK(finite_difference_check(fn_b, s.scales) < 1e-4);
    }
}

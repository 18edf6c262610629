#include "pave/matching.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pave {

MatchResult hungarian_match(const std::vector<std::vector<double>>& cost) {
    const int m = static_cast<int>(cost.size());  // predictions
    const int n = m == 0 ? 0 : static_cast<int>(cost[0].size());  // ground truths
    if (n > m) throw std::invalid_argument("hungarian_match: more ground truths than predictions");
    MatchResult res;
    if (n == 0) {
        for (int i = 0; i < m; ++i) res.background.push_back(i);
        return res;
    }
    for (const auto& row : cost) {
        if (static_cast<int>(row.size()) != n) throw std::invalid_argument("hungarian_match: ragged cost matrix");
        for (double c : row)
            if (!std::isfinite(c)) throw std::invalid_argument("hungarian_match: non-finite cost");
    }
    // Potentials over rows = ground truths (n) assigned to columns =
    // predictions (m), n <= m.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(i0 - 1)] -
                                   u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> gt_of_pred(static_cast<std::size_t>(m), -1);
    for (int j = 1; j <= m; ++j)
        if (p[static_cast<std::size_t>(j)] != 0) gt_of_pred[static_cast<std::size_t>(j - 1)] = p[static_cast<std::size_t>(j)] - 1;
    for (int i = 0; i < m; ++i) {
        if (gt_of_pred[static_cast<std::size_t>(i)] >= 0)
            res.pairs.emplace_back(i, gt_of_pred[static_cast<std::size_t>(i)]);
        else
            res.background.push_back(i);
    }
    return res;
}

double match_cost(const double* pred_joints, double score, const GtPose& gt, double l_cls, double l_rle) {
    const int J = gt.joint_count();
    double l1 = 0.0;
    int vis = 0;
    for (int j = 0; j < J; ++j) {
        if (!gt.visible[static_cast<std::size_t>(j)]) continue;
        l1 += std::abs(pred_joints[j * 2] - gt.joints[static_cast<std::size_t>(j * 2)]) +
              std::abs(pred_joints[j * 2 + 1] - gt.joints[static_cast<std::size_t>(j * 2 + 1)]);
        ++vis;
    }
    double c = l_cls * (1.0 - score);
    if (vis > 0) c += l_rle * (l1 / vis);
    return c;
}

double rle_nll(double mu, double b, double gt) {
    if (b <= 0.0) throw std::invalid_argument("rle_nll: scale must be positive");
    return std::log(2.0 * b) + std::abs(mu - gt) / b;
}

Var rle_loss(const Var& mu, const Var& b, const std::vector<GtPose>& gts, const MatchResult& match) {
    if (match.pairs.empty()) return scalar(0.0);
    const std::int64_t j2 = mu->dim(1);
    std::vector<std::int64_t> pred_idx;
    std::vector<double> gtv(match.pairs.size() * static_cast<std::size_t>(j2), 0.0);
    std::vector<double> mask(match.pairs.size() * static_cast<std::size_t>(j2), 0.0);
    for (std::size_t r = 0; r < match.pairs.size(); ++r) {
        const auto [pi, gi] = match.pairs[r];
        pred_idx.push_back(pi);
        const GtPose& g = gts[static_cast<std::size_t>(gi)];
        for (int j = 0; j < g.joint_count(); ++j) {
            if (!g.visible[static_cast<std::size_t>(j)]) continue;
            for (int c = 0; c < 2; ++c) {
                gtv[r * static_cast<std::size_t>(j2) + static_cast<std::size_t>(j * 2 + c)] =
                    g.joints[static_cast<std::size_t>(j * 2 + c)];
                mask[r * static_cast<std::size_t>(j2) + static_cast<std::size_t>(j * 2 + c)] = 1.0;
            }
        }
    }
    Var mu_m = gather_rows(mu, pred_idx);
    Var b_m = gather_rows(b, pred_idx);
    for (std::size_t i = 0; i < b_m->data.size(); ++i) {
        if (mask[i] > 0 && b_m->data[i] <= 0.0) throw std::invalid_argument("rle_loss: scale must be positive");
    }
    const auto rows = static_cast<std::int64_t>(match.pairs.size());
    Var gt_var = make_var({rows, j2}, std::move(gtv));
    Var mask_var = make_var({rows, j2}, std::move(mask));
    Var nll = add(log_(scale(b_m, 2.0)), divide(abs_(sub(mu_m, gt_var)), b_m));
    return scale(sum(mul(mask_var, nll)), 1.0 / static_cast<double>(rows));
}

Var cls_loss(const Var& logits, const MatchResult& match, int n_gt) {
    const std::int64_t m = logits->dim(0);
    std::vector<double> t(static_cast<std::size_t>(m), 0.0);
    for (const auto& [pi, gi] : match.pairs) t[static_cast<std::size_t>(pi)] = 1.0;
    Var target = make_var({m, 1}, std::move(t));
    Var ones = full({m, 1}, 1.0);
    // Focal terms written with softplus for stability: -log sigmoid(x) =
    // softplus(-x), 1 - sigmoid(x) = sigmoid(-x).
    const double alpha = 0.25, gamma = 2.0;
    Var nx = scale(logits, -1.0);
    Var pos = scale(mul(powc(sigmoid(nx), gamma), softplus(nx)), alpha);
    Var neg = scale(mul(powc(sigmoid(logits), gamma), softplus(logits)), 1.0 - alpha);
    Var per = add(mul(target, pos), mul(sub(ones, target), neg));
    return scale(sum(per), 1.0 / std::max(1, n_gt));
}

LossBreakdown total_loss(const std::vector<StageOutput>& stages, const std::vector<GtPose>& gts, double l_cls,
                         double l_rle) {
    if (stages.empty()) throw std::invalid_argument("total_loss: no stages");
    LossBreakdown out;
    Var cls_acc, rle_acc;
    for (const auto& st : stages) {
        const auto m = st.poses->dim(0);
        std::vector<std::vector<double>> cost(static_cast<std::size_t>(m),
                                              std::vector<double>(gts.size(), 0.0));
        for (std::int64_t i = 0; i < m; ++i) {
            const double score = 1.0 / (1.0 + std::exp(-st.logits->data[static_cast<std::size_t>(i)]));
            for (std::size_t g = 0; g < gts.size(); ++g) {
                cost[static_cast<std::size_t>(i)][g] =
                    match_cost(st.poses->data.data() + i * st.poses->dim(1), score, gts[g], l_cls, l_rle);
            }
        }
        MatchResult match = hungarian_match(cost);
        Var c = cls_loss(st.logits, match, static_cast<int>(gts.size()));
        Var r = rle_loss(st.poses, st.scales, gts, match);
        out.stage_cls.push_back(c->data[0]);
        out.stage_rle.push_back(r->data[0]);
        out.cls_sum += c->data[0];
        out.rle_sum += r->data[0];
        cls_acc = cls_acc ? add(cls_acc, c) : c;
        rle_acc = rle_acc ? add(rle_acc, r) : r;
        out.matches.push_back(std::move(match));
    }
    out.total = add(scale(cls_acc, l_cls), scale(rle_acc, l_rle));
    return out;
}

}  // namespace pave

#include "pave/deform.hpp"

#include <cmath>
#include <stdexcept>

namespace pave {

void DeformAttnConfig::validate() const {
    if (heads < 1 || points < 1 || levels < 1) throw std::invalid_argument("DeformAttnConfig: counts must be positive");
    if (embed_dim % heads != 0) {
        throw std::invalid_argument("DeformAttnConfig: embed_dim " + std::to_string(embed_dim) +
                                    " not divisible by heads " + std::to_string(heads));
    }
}

namespace {

struct Tap {
    std::int64_t row;  // token row (or -1 when the corner is out of bounds)
    double w, dwdx, dwdy;
};

// Bilinear corner taps at pixel-space (x, y) on an H x W grid whose cells map
// to rows base + r*W + c. Out-of-bounds corners get row = -1 (zero padding).
void bilinear_taps(double x, double y, std::int64_t h, std::int64_t w, std::int64_t base, Tap taps[4]) {
    const double fx = std::floor(x), fy = std::floor(y);
    const std::int64_t x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy);
    const double ax = x - fx, ay = y - fy;
    const double wx[2] = {1.0 - ax, ax};
    const double dwx[2] = {-1.0, 1.0};
    const double wy[2] = {1.0 - ay, ay};
    const double dwy[2] = {-1.0, 1.0};
    int t = 0;
    for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx, ++t) {
            const std::int64_t cx = x0 + dx, cy = y0 + dy;
            const bool in = cx >= 0 && cx < w && cy >= 0 && cy < h;
            taps[t].row = in ? base + cy * w + cx : -1;
            taps[t].w = wx[dx] * wy[dy];
            taps[t].dwdx = dwx[dx] * wy[dy];
            taps[t].dwdy = wx[dx] * dwy[dy];
        }
    }
}

}  // namespace

Var bilinear_sample(const Var& map, const Var& point) {
    if (map->rank() != 3 || map->numel() == 0) throw std::invalid_argument("bilinear_sample: map must be non-empty [H,W,D]");
    if (point->numel() != 2) throw std::invalid_argument("bilinear_sample: point must have 2 coordinates");
    const std::int64_t h = map->dim(0), w = map->dim(1), d = map->dim(2);
    auto out = std::make_shared<TensorNode>();
    out->shape = {d};
    out->data.assign(static_cast<std::size_t>(d), 0.0);
    out->parents = {map, point};
    out->name = "bilinear_sample";
    out->requires_grad = map->requires_grad || point->requires_grad;
    Tap taps[4];
    bilinear_taps(point->data[0], point->data[1], h, w, 0, taps);
    for (const Tap& t : taps) {
        if (t.row < 0) continue;
        for (std::int64_t c = 0; c < d; ++c) out->data[static_cast<std::size_t>(c)] += t.w * map->data[static_cast<std::size_t>(t.row * d + c)];
    }
    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pm = map, pp = point;
        out->backprop = [o, pm, pp, h, w, d]() {
            pm->ensure_grad();
            pp->ensure_grad();
            Tap taps[4];
            bilinear_taps(pp->data[0], pp->data[1], h, w, 0, taps);
            double gx = 0.0, gy = 0.0;
            for (const Tap& t : taps) {
                if (t.row < 0) continue;
                for (std::int64_t c = 0; c < d; ++c) {
                    const double g = o->grad[static_cast<std::size_t>(c)];
                    const double v = pm->data[static_cast<std::size_t>(t.row * d + c)];
                    pm->grad[static_cast<std::size_t>(t.row * d + c)] += g * t.w;
                    gx += g * v * t.dwdx;
                    gy += g * v * t.dwdy;
                }
            }
            pp->grad[0] += gx;
            pp->grad[1] += gy;
        };
    }
    return out;
}

Var deform_attend(const std::vector<Var>& values, const GridInfo& grid, const Var& anchors,
                  const std::vector<std::pair<int, int>>& anchor_map, const Var& offsets, const Var& logits,
                  int heads, int points) {
    const auto a_count = static_cast<std::int64_t>(anchor_map.size());
    if (values.empty()) throw std::invalid_argument("deform_attend: no value frames");
    const std::int64_t dv = values[0]->dim(1);
    if (dv % heads != 0) throw std::invalid_argument("deform_attend: value width not divisible by heads");
    for (const auto& v : values) {
        if (v->rank() != 2 || v->dim(0) != grid.total || v->dim(1) != dv) {
            throw std::invalid_argument("deform_attend: value shape " + shape_str(v->shape) + " does not match grid");
        }
    }
    const std::int64_t q_count = anchors->dim(0);
    const std::int64_t slots = a_count * heads * points;
    if (anchors->rank() != 2 || anchors->dim(1) != a_count * 2) {
        throw std::invalid_argument("deform_attend: anchors shape " + shape_str(anchors->shape) + ", expected [Q," +
                                    std::to_string(a_count * 2) + "]");
    }
    if (offsets->shape != std::vector<std::int64_t>{q_count, slots * 2}) {
        throw std::invalid_argument("deform_attend: offsets shape " + shape_str(offsets->shape) + ", expected [" +
                                    std::to_string(q_count) + "," + std::to_string(slots * 2) + "]");
    }
    if (logits->shape != std::vector<std::int64_t>{q_count, slots}) {
        throw std::invalid_argument("deform_attend: logits shape " + shape_str(logits->shape) + ", expected [" +
                                    std::to_string(q_count) + "," + std::to_string(slots) + "]");
    }
    for (const auto& [f, l] : anchor_map) {
        if (f < 0 || f >= static_cast<int>(values.size()) || l < 0 || l >= grid.levels()) {
            throw std::invalid_argument("deform_attend: anchor_map entry out of range");
        }
    }

    const std::int64_t dh = dv / heads;
    const std::int64_t hk = static_cast<std::int64_t>(heads) * points;  // slots per anchor
    const std::int64_t per_head = a_count * points;                     // softmax group size

    auto out = std::make_shared<TensorNode>();
    out->shape = {q_count, dv};
    out->data.assign(static_cast<std::size_t>(q_count * dv), 0.0);
    out->name = "deform_attend";
    out->parents.assign(values.begin(), values.end());
    out->parents.push_back(anchors);
    out->parents.push_back(offsets);
    out->parents.push_back(logits);
    for (const auto& p : out->parents) {
        if (p->requires_grad) out->requires_grad = true;
    }

    // weights[h][a*K+k] buffer reused per query
    std::vector<double> wbuf(static_cast<std::size_t>(per_head));
    for (std::int64_t q = 0; q < q_count; ++q) {
        const double* anc = anchors->data.data() + q * a_count * 2;
        const double* off = offsets->data.data() + q * slots * 2;
        const double* lgt = logits->data.data() + q * slots;
        double* orow = out->data.data() + q * dv;
        for (int h = 0; h < heads; ++h) {
            // softmax over this head's (anchor, point) slots
            double mx = -1e308;
            for (std::int64_t a = 0; a < a_count; ++a) {
                for (int k = 0; k < points; ++k) mx = std::max(mx, lgt[a * hk + h * points + k]);
            }
            double denom = 0.0;
            for (std::int64_t a = 0; a < a_count; ++a) {
                for (int k = 0; k < points; ++k) {
                    const double e = std::exp(lgt[a * hk + h * points + k] - mx);
                    wbuf[static_cast<std::size_t>(a * points + k)] = e;
                    denom += e;
                }
            }
            for (auto& e : wbuf) e /= denom;
            for (std::int64_t a = 0; a < a_count; ++a) {
                const auto [fi, li] = anchor_map[static_cast<std::size_t>(a)];
                const double sx = static_cast<double>(grid.level_w[li] - 1);
                const double sy = static_cast<double>(grid.level_h[li] - 1);
                const double* vdata = values[static_cast<std::size_t>(fi)]->data.data();
                for (int k = 0; k < points; ++k) {
                    const std::int64_t si = a * hk + h * points + k;
                    const double x = (anc[a * 2 + 0] + off[si * 2 + 0]) * sx;
                    const double y = (anc[a * 2 + 1] + off[si * 2 + 1]) * sy;
                    Tap taps[4];
                    bilinear_taps(x, y, grid.level_h[li], grid.level_w[li], grid.level_offset[li], taps);
                    const double wgt = wbuf[static_cast<std::size_t>(a * points + k)];
                    for (const Tap& t : taps) {
                        if (t.row < 0) continue;
                        const double* vrow = vdata + t.row * dv + h * dh;
                        const double c = wgt * t.w;
                        for (std::int64_t dd = 0; dd < dh; ++dd) orow[h * dh + dd] += c * vrow[dd];
                    }
                }
            }
        }
    }

    if (out->requires_grad) {
        TensorNode* o = out.get();
        std::vector<Var> vs = values;
        Var pa = anchors, po = offsets, pl = logits;
        GridInfo g = grid;
        std::vector<std::pair<int, int>> amap = anchor_map;
        out->backprop = [o, vs, pa, po, pl, g, amap, heads, points, q_count, a_count, dv, dh, hk, per_head]() {
            for (const auto& v : vs) v->ensure_grad();
            pa->ensure_grad();
            po->ensure_grad();
            pl->ensure_grad();
            const std::int64_t slots = a_count * hk / heads * heads;  // a_count*heads*points
            std::vector<double> wbuf(static_cast<std::size_t>(per_head));
            std::vector<double> gdotv(static_cast<std::size_t>(per_head));  // grad . sampled value per slot
            for (std::int64_t q = 0; q < q_count; ++q) {
                const double* anc = pa->data.data() + q * a_count * 2;
                const double* off = po->data.data() + q * slots * 2;
                const double* lgt = pl->data.data() + q * slots;
                const double* grow = o->grad.data() + q * dv;
                for (int h = 0; h < heads; ++h) {
                    double mx = -1e308;
                    for (std::int64_t a = 0; a < a_count; ++a) {
                        for (int k = 0; k < points; ++k) mx = std::max(mx, lgt[a * hk + h * points + k]);
                    }
                    double denom = 0.0;
                    for (std::int64_t a = 0; a < a_count; ++a) {
                        for (int k = 0; k < points; ++k) {
                            const double e = std::exp(lgt[a * hk + h * points + k] - mx);
                            wbuf[static_cast<std::size_t>(a * points + k)] = e;
                            denom += e;
                        }
                    }
                    for (auto& e : wbuf) e /= denom;

                    double expected = 0.0;  // sum_s w_s * (g . v_s), for the softmax Jacobian
                    for (std::int64_t a = 0; a < a_count; ++a) {
                        const auto [fi, li] = amap[static_cast<std::size_t>(a)];
                        const double sx = static_cast<double>(g.level_w[li] - 1);
                        const double sy = static_cast<double>(g.level_h[li] - 1);
                        TensorNode* vn = vs[static_cast<std::size_t>(fi)].get();
                        for (int k = 0; k < points; ++k) {
                            const std::int64_t si = a * hk + h * points + k;
                            const double x = (anc[a * 2 + 0] + off[si * 2 + 0]) * sx;
                            const double y = (anc[a * 2 + 1] + off[si * 2 + 1]) * sy;
                            Tap taps[4];
                            bilinear_taps(x, y, g.level_h[li], g.level_w[li], g.level_offset[li], taps);
                            const double wgt = wbuf[static_cast<std::size_t>(a * points + k)];
                            double gv = 0.0;   // g . v(sample)
                            double gpx = 0.0;  // g . dv/dx_px
                            double gpy = 0.0;
                            for (const Tap& t : taps) {
                                if (t.row < 0) continue;
                                const double* vrow = vn->data.data() + t.row * dv + h * dh;
                                double* vgrad = vn->grad.data() + t.row * dv + h * dh;
                                const double c = wgt * t.w;
                                for (std::int64_t dd = 0; dd < dh; ++dd) {
                                    const double gd = grow[h * dh + dd];
                                    gv += gd * t.w * vrow[dd];
                                    vgrad[dd] += gd * c;
                                    gpx += gd * t.dwdx * vrow[dd];
                                    gpy += gd * t.dwdy * vrow[dd];
                                }
                            }
                            gdotv[static_cast<std::size_t>(a * points + k)] = gv;
                            expected += wgt * gv;
                            // position gradients, scaled back to normalized units
                            const double gx = wgt * gpx * sx;
                            const double gy = wgt * gpy * sy;
                            po->grad[static_cast<std::size_t>(q * slots * 2 + si * 2 + 0)] += gx;
                            po->grad[static_cast<std::size_t>(q * slots * 2 + si * 2 + 1)] += gy;
                            pa->grad[static_cast<std::size_t>(q * a_count * 2 + a * 2 + 0)] += gx;
                            pa->grad[static_cast<std::size_t>(q * a_count * 2 + a * 2 + 1)] += gy;
                        }
                    }
                    for (std::int64_t a = 0; a < a_count; ++a) {
                        for (int k = 0; k < points; ++k) {
                            const std::int64_t si = a * hk + h * points + k;
                            const double w = wbuf[static_cast<std::size_t>(a * points + k)];
                            pl->grad[static_cast<std::size_t>(q * slots + si)] +=
                                w * (gdotv[static_cast<std::size_t>(a * points + k)] - expected);
                        }
                    }
                }
            }
        };
    }
    return out;
}

DeformAttn::DeformAttn(ParamRegistry& reg, const std::string& prefix, std::int64_t dim, int h, int k, int a, Rng& rng)
    : heads(h),
      points(k),
      anchors(a),
      value_proj(reg, prefix + ".value_proj", dim, dim, rng),
      offset_head(reg, prefix + ".offset_head", dim, static_cast<std::int64_t>(a) * h * k * 2, rng, /*zero_init=*/true),
      logit_head(reg, prefix + ".logit_head", dim, static_cast<std::int64_t>(a) * h * k, rng, /*zero_init=*/true),
      out_proj(reg, prefix + ".out_proj", dim, dim, rng),
      norm(reg, prefix + ".norm", dim) {
    if (dim % h != 0) throw std::invalid_argument("DeformAttn: dim not divisible by heads");
}

Var DeformAttn::forward(const Var& queries, const Var& anchor_pts, const std::vector<Var>& frame_tokens,
                        const GridInfo& grid, const std::vector<std::pair<int, int>>& anchor_map) const {
    if (static_cast<int>(anchor_map.size()) != anchors) {
        throw std::invalid_argument("DeformAttn: anchor_map size " + std::to_string(anchor_map.size()) +
                                    " does not match configured anchor count " + std::to_string(anchors));
    }
    return attend(queries, anchor_pts, project_values(frame_tokens), grid, anchor_map);
}

std::vector<Var> DeformAttn::project_values(const std::vector<Var>& frame_tokens) const {
    std::vector<Var> values;
    values.reserve(frame_tokens.size());
    for (const auto& ft : frame_tokens) values.push_back(value_proj.forward(ft));
    return values;
}

Var DeformAttn::attend(const Var& queries, const Var& anchor_pts, const std::vector<Var>& projected_values,
                       const GridInfo& grid, const std::vector<std::pair<int, int>>& anchor_map) const {
    if (static_cast<int>(anchor_map.size()) != anchors) {
        throw std::invalid_argument("DeformAttn: anchor_map size " + std::to_string(anchor_map.size()) +
                                    " does not match configured anchor count " + std::to_string(anchors));
    }
    Var off = offset_head.forward(queries);
    Var lgt = logit_head.forward(queries);
    Var core = deform_attend(projected_values, grid, anchor_pts, anchor_map, off, lgt, heads, points);
    return norm.forward(add(queries, out_proj.forward(core)));
}

}  // namespace pave

#include "pave/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace pave {

namespace {

constexpr std::int64_t kH = 64, kW = 96;

// Skeleton edges in PoseTrack-2018 keypoint order.
constexpr int kEdges[][2] = {{2, 1}, {1, 0}, {1, 3}, {1, 4},  {3, 5},   {5, 7},   {4, 6},  {6, 8},
                             {3, 9}, {4, 10}, {9, 10}, {9, 11}, {11, 13}, {10, 12}, {12, 14}};
constexpr int kNumEdges = static_cast<int>(sizeof(kEdges) / sizeof(kEdges[0]));

double limb_thickness(const FigureSpec& f) { return std::max(1.2, f.height / 18.0); }
double disk_radius(const FigureSpec& f) { return std::max(1.5, f.height / 14.0); }

double seg_dist(double px, double py, const std::array<double, 2>& a, const std::array<double, 2>& b) {
    const double dx = b[0] - a[0], dy = b[1] - a[1];
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - a[0]) * dx + (py - a[1]) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double qx = a[0] + t * dx, qy = a[1] + t * dy;
    return std::hypot(px - qx, py - qy);
}

std::uint64_t pixel_hash(std::uint64_t s, std::int64_t x, std::int64_t y, int c) {
    std::uint64_t z = s ^ (static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ull) ^
                      (static_cast<std::uint64_t>(y) * 0xbf58476d1ce4e5b9ull) ^
                      (static_cast<std::uint64_t>(c) * 0x94d049bb133111ebull);
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
}

const std::array<std::array<double, 3>, 6> kPalette = {{{0.95, 0.35, 0.25},
                                                        {0.30, 0.95, 0.30},
                                                        {0.35, 0.45, 0.95},
                                                        {0.95, 0.85, 0.30},
                                                        {0.90, 0.40, 0.90},
                                                        {0.40, 0.90, 0.90}}};

// True if point p lies inside figure k's painted body (limbs or joint disks).
bool covered_by(const std::array<double, 2>& p, const FigureSpec& fig, double dt) {
    const auto js = figure_joints(fig, dt);
    const double thick = limb_thickness(fig), rad = disk_radius(fig);
    for (const auto& e : kEdges) {
        if (seg_dist(p[0], p[1], js[static_cast<std::size_t>(e[0])], js[static_cast<std::size_t>(e[1])]) <= thick)
            return true;
    }
    for (const auto& j : js) {
        if (std::hypot(p[0] - j[0], p[1] - j[1]) <= rad) return true;
    }
    return false;
}

}  // namespace

const std::vector<std::string>& keypoint_names() {
    static const std::vector<std::string> names = {
        "nose",        "head_bottom", "head_top",   "left_shoulder", "right_shoulder",
        "left_elbow",  "right_elbow", "left_wrist", "right_wrist",   "left_hip",
        "right_hip",   "left_knee",   "right_knee", "left_ankle",    "right_ankle"};
    return names;
}

const std::array<int, kNumJoints>& flip_pairs() {
    static const std::array<int, kNumJoints> pairs = {0, 1, 2, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13};
    return pairs;
}

std::array<std::array<double, 2>, kNumJoints> figure_joints(const FigureSpec& fig, double dt) {
    const double h = fig.height;
    const double x = fig.base_x + fig.vx * dt, y = fig.base_y + fig.vy * dt;
    const double s = std::sin(fig.phase + fig.freq * dt);
    const double swing = fig.amp * h * s;
    std::array<std::array<double, 2>, kNumJoints> j{};
    j[0] = {x, y - 0.47 * h};                       // nose
    j[1] = {x, y - 0.40 * h};                       // head_bottom
    j[2] = {x, y - 0.55 * h};                       // head_top
    j[3] = {x - 0.13 * h, y - 0.35 * h};            // shoulders
    j[4] = {x + 0.13 * h, y - 0.35 * h};
    j[5] = {x - 0.16 * h + swing, y - 0.18 * h};    // elbows
    j[6] = {x + 0.16 * h - swing, y - 0.18 * h};
    j[7] = {x - 0.17 * h + 1.8 * swing, y - 0.02 * h};  // wrists
    j[8] = {x + 0.17 * h - 1.8 * swing, y - 0.02 * h};
    j[9] = {x - 0.09 * h, y};                       // hips
    j[10] = {x + 0.09 * h, y};
    j[11] = {x - 0.10 * h + swing, y + 0.22 * h};   // knees
    j[12] = {x + 0.10 * h - swing, y + 0.22 * h};
    j[13] = {x - 0.10 * h + 1.5 * swing, y + 0.45 * h};  // ankles
    j[14] = {x + 0.10 * h - 1.5 * swing, y + 0.45 * h};
    return j;
}

std::vector<double> render_frame(const std::vector<FigureSpec>& figures, double dt, std::int64_t h, std::int64_t w,
                                 std::uint64_t bg_seed) {
    std::vector<double> img(static_cast<std::size_t>(h * w * 3));
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double wave = 0.08 * std::sin(0.13 * static_cast<double>(x) + 0.07 * static_cast<double>(y) + c);
                const double noise =
                    0.06 * (static_cast<double>(pixel_hash(bg_seed, x, y, c) >> 11) * (1.0 / 9007199254740992.0));
                img[static_cast<std::size_t>((y * w + x) * 3 + c)] = 0.18 + wave + noise;
            }
        }
    }
    auto paint = [&](double cov, std::int64_t px, std::int64_t py, const std::array<double, 3>& col) {
        if (cov <= 0 || px < 0 || px >= w || py < 0 || py >= h) return;
        cov = std::min(1.0, cov);
        for (int c = 0; c < 3; ++c) {
            double& v = img[static_cast<std::size_t>((py * w + px) * 3 + c)];
            v = cov * col[static_cast<std::size_t>(c)] + (1.0 - cov) * v;
        }
    };
    for (const auto& fig : figures) {
        const auto js = figure_joints(fig, dt);
        const double thick = limb_thickness(fig), rad = disk_radius(fig);
        for (const auto& e : kEdges) {
            const auto &a = js[static_cast<std::size_t>(e[0])], &b = js[static_cast<std::size_t>(e[1])];
            const std::int64_t x0 = static_cast<std::int64_t>(std::floor(std::min(a[0], b[0]) - thick - 1));
            const std::int64_t x1 = static_cast<std::int64_t>(std::ceil(std::max(a[0], b[0]) + thick + 1));
            const std::int64_t y0 = static_cast<std::int64_t>(std::floor(std::min(a[1], b[1]) - thick - 1));
            const std::int64_t y1 = static_cast<std::int64_t>(std::ceil(std::max(a[1], b[1]) + thick + 1));
            for (std::int64_t py = std::max<std::int64_t>(0, y0); py <= std::min(h - 1, y1); ++py) {
                for (std::int64_t px = std::max<std::int64_t>(0, x0); px <= std::min(w - 1, x1); ++px) {
                    const double d = seg_dist(static_cast<double>(px), static_cast<double>(py), a, b);
                    paint(thick + 0.5 - d, px, py, fig.color);
                }
            }
        }
        for (const auto& j : js) {
            const std::int64_t x0 = static_cast<std::int64_t>(std::floor(j[0] - rad - 1));
            const std::int64_t y0 = static_cast<std::int64_t>(std::floor(j[1] - rad - 1));
            const std::int64_t x1 = static_cast<std::int64_t>(std::ceil(j[0] + rad + 1));
            const std::int64_t y1 = static_cast<std::int64_t>(std::ceil(j[1] + rad + 1));
            for (std::int64_t py = std::max<std::int64_t>(0, y0); py <= std::min(h - 1, y1); ++py) {
                for (std::int64_t px = std::max<std::int64_t>(0, x0); px <= std::min(w - 1, x1); ++px) {
                    const double d = std::hypot(static_cast<double>(px) - j[0], static_cast<double>(py) - j[1]);
                    paint(rad + 0.5 - d, px, py, fig.color);
                }
            }
        }
    }
    return img;
}

ClipSample assemble_clip(const std::vector<FigureSpec>& figures, int span, std::int64_t h, std::int64_t w,
                         std::uint64_t bg_seed) {
    ClipSample s;
    s.persons = static_cast<int>(figures.size());
    s.figures = figures;
    s.clip.height = h;
    s.clip.width = w;
    s.clip.span = span;
    const int f = 2 * span + 1;
    s.gt.resize(static_cast<std::size_t>(f));
    for (int fi = 0; fi < f; ++fi) {
        const double dt = static_cast<double>(fi - span);
        s.clip.frames.push_back(render_frame(figures, dt, h, w, bg_seed));
        for (std::size_t p = 0; p < figures.size(); ++p) {
            const auto js = figure_joints(figures[p], dt);
            GtPose g;
            g.joints.resize(kNumJoints * 2);
            g.visible.resize(kNumJoints);
            for (int j = 0; j < kNumJoints; ++j) {
                const double px = js[static_cast<std::size_t>(j)][0], py = js[static_cast<std::size_t>(j)][1];
                g.joints[static_cast<std::size_t>(j * 2)] = px / static_cast<double>(w - 1);
                g.joints[static_cast<std::size_t>(j * 2 + 1)] = py / static_cast<double>(h - 1);
                bool vis = px >= 0 && px <= static_cast<double>(w - 1) && py >= 0 && py <= static_cast<double>(h - 1);
                for (std::size_t k = p + 1; vis && k < figures.size(); ++k) {
                    if (covered_by(js[static_cast<std::size_t>(j)], figures[k], dt)) vis = false;
                }
                g.visible[static_cast<std::size_t>(j)] = vis;
            }
            s.gt[static_cast<std::size_t>(fi)].push_back(std::move(g));
        }
    }
    return s;
}

ClipSample generate_clip(std::uint64_t seed, int n_persons, Difficulty difficulty, int span) {
    if (n_persons < 1 || n_persons > 6)
        throw std::invalid_argument("generate_clip: n_persons must be in [1, 6] (layout capacity)");
    Rng rng(mix_seed(seed, mix_seed(static_cast<std::uint64_t>(n_persons),
                                    mix_seed(static_cast<std::uint64_t>(difficulty) + 11,
                                             static_cast<std::uint64_t>(span) + 7))));
    const bool hard = difficulty == Difficulty::hard;
    std::vector<FigureSpec> figs;
    for (int p = 0; p < n_persons; ++p) {
        FigureSpec fig;
        for (int attempt = 0; attempt < 64; ++attempt) {
            if (hard) {
                fig.base_x = rng.uniform(0.2 * kW, 0.8 * kW);
                fig.base_y = rng.uniform(0.45 * kH, 0.62 * kH);
                fig.height = rng.uniform(24.0, 44.0);
                const double speed = rng.uniform(1.0, 3.0), dir = rng.uniform(0.0, 6.283185307179586);
                fig.vx = speed * std::cos(dir);
                fig.vy = 0.35 * speed * std::sin(dir);
                fig.amp = 0.10;
            } else {
                const double slot_w = static_cast<double>(kW) / n_persons;
                fig.base_x = (p + 0.5) * slot_w + rng.uniform(-0.12, 0.12) * slot_w;
                fig.base_y = rng.uniform(0.48 * kH, 0.58 * kH);
                fig.height = rng.uniform(22.0, 34.0);
                fig.vx = rng.uniform(-0.8, 0.8);
                fig.vy = rng.uniform(-0.3, 0.3);
                fig.amp = 0.05;
            }
            fig.freq = 0.35 * std::hypot(fig.vx, fig.vy);
            fig.phase = rng.uniform(0.0, 6.283185307179586);
            fig.color = kPalette[static_cast<std::size_t>(p) % kPalette.size()];
            const auto js = figure_joints(fig, 0.0);
            int in_frame = 0;
            for (const auto& j : js) {
                if (j[0] >= 0 && j[0] <= kW - 1 && j[1] >= 0 && j[1] <= kH - 1) ++in_frame;
            }
            if (in_frame * 2 >= kNumJoints) break;
        }
        figs.push_back(fig);
    }
    ClipSample s = assemble_clip(figs, span, kH, kW, mix_seed(seed, 0x6267u));
    s.seed = seed;
    return s;
}

ClipSample corrupt_clip(const ClipSample& sample, CorruptMode mode, double severity, std::uint64_t seed) {
    if (severity < 0.0 || severity > 1.0) throw std::invalid_argument("corrupt_clip: severity must be in [0, 1]");
    ClipSample out = sample;
    if (severity == 0.0) return out;
    const std::int64_t h = out.clip.height, w = out.clip.width;
    Rng rng(mix_seed(seed, 0xc0ffeeu));
    if (mode == CorruptMode::blur) {
        const int half = static_cast<int>(std::ceil(severity * 3.0));
        for (int fi = 0; fi < out.clip.frame_count(); ++fi) {
            const double dt = static_cast<double>(fi - out.clip.span);
            auto& img = out.clip.frames[static_cast<std::size_t>(fi)];
            for (const auto& fig : out.figures) {
                const auto js = figure_joints(fig, dt);
                double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
                for (const auto& j : js) {
                    x0 = std::min(x0, j[0]);
                    x1 = std::max(x1, j[0]);
                    y0 = std::min(y0, j[1]);
                    y1 = std::max(y1, j[1]);
                }
                const double margin = 0.15 * fig.height;
                const std::int64_t bx0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(x0 - margin));
                const std::int64_t bx1 = std::min(w - 1, static_cast<std::int64_t>(x1 + margin));
                const std::int64_t by0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(y0 - margin));
                const std::int64_t by1 = std::min(h - 1, static_cast<std::int64_t>(y1 + margin));
                if (bx0 > bx1 || by0 > by1) continue;
                const bool horizontal = std::abs(fig.vx) >= std::abs(fig.vy);
                std::vector<double> src(img);  // blur reads the pre-blur frame
                const double norm = 1.0 / (2 * half + 1);
                for (std::int64_t py = by0; py <= by1; ++py) {
                    for (std::int64_t px = bx0; px <= bx1; ++px) {
                        for (int c = 0; c < 3; ++c) {
                            double acc = 0;
                            for (int k = -half; k <= half; ++k) {
                                const std::int64_t sx = horizontal ? std::clamp<std::int64_t>(px + k, 0, w - 1) : px;
                                const std::int64_t sy = horizontal ? py : std::clamp<std::int64_t>(py + k, 0, h - 1);
                                acc += src[static_cast<std::size_t>((sy * w + sx) * 3 + c)];
                            }
                            img[static_cast<std::size_t>((py * w + px) * 3 + c)] = acc * norm;
                        }
                    }
                }
            }
        }
        return out;
    }
    // Keyframe-only occluder over one person's upper body.
    const int p = static_cast<int>(rng.uniform_int(0, out.persons - 1));
    const FigureSpec& fig = out.figures[static_cast<std::size_t>(p)];
    const double cx = fig.base_x, cy = fig.base_y - 0.2 * fig.height;
    const double hx = severity * 0.30 * fig.height, hy = severity * 0.40 * fig.height;
    RectI r;
    r.x0 = std::max(0, static_cast<int>(std::floor(cx - hx)));
    r.x1 = std::min(static_cast<int>(w), static_cast<int>(std::ceil(cx + hx)));
    r.y0 = std::max(0, static_cast<int>(std::floor(cy - hy)));
    r.y1 = std::min(static_cast<int>(h), static_cast<int>(std::ceil(cy + hy)));
    r.valid = r.x0 < r.x1 && r.y0 < r.y1;
    out.occluder = r;
    if (!r.valid) return out;
    auto& key = out.clip.frames[static_cast<std::size_t>(out.clip.keyframe_index())];
    for (int py = r.y0; py < r.y1; ++py) {
        for (int px = r.x0; px < r.x1; ++px) {
            for (int c = 0; c < 3; ++c) key[static_cast<std::size_t>((py * w + px) * 3 + c)] = 0.5;
        }
    }
    // Annotations are untouched: hidden joints stay labelled and scored, since
    // they remain observable in the auxiliary frames.
    return out;
}

ClipSample materialize(const ClipDesc& d) {
    ClipSample s = generate_clip(d.seed, d.persons, d.difficulty, d.span);
    if (d.blur > 0) s = corrupt_clip(s, CorruptMode::blur, d.blur, mix_seed(d.seed, 1));
    if (d.occlude > 0) s = corrupt_clip(s, CorruptMode::occluder, d.occlude, mix_seed(d.seed, 2));
    return s;
}

void write_manifest(const std::string& path, const std::vector<ClipDesc>& clips) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_manifest: cannot open " + path);
    for (const auto& c : clips) {
        nlohmann::json j = {{"seed", c.seed},
                            {"persons", c.persons},
                            {"difficulty", c.difficulty == Difficulty::hard ? "hard" : "easy"},
                            {"span", c.span},
                            {"split", c.split},
                            {"blur", c.blur},
                            {"occlude", c.occlude}};
        f << j.dump() << "\n";
    }
}

std::vector<ClipDesc> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_manifest: cannot open " + path);
    std::vector<ClipDesc> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        ClipDesc c;
        c.seed = j.at("seed").get<std::uint64_t>();
        c.persons = j.at("persons").get<int>();
        c.difficulty = j.at("difficulty").get<std::string>() == "hard" ? Difficulty::hard : Difficulty::easy;
        c.span = j.at("span").get<int>();
        c.split = j.at("split").get<std::string>();
        c.blur = j.value("blur", 0.0);
        c.occlude = j.value("occlude", 0.0);
        out.push_back(c);
    }
    return out;
}

}  // namespace pave

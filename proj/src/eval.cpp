#include "pave/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace pave {

double gt_height(const GtPose& gt) {
    double lo = 1e300, hi = -1e300;
    for (int j = 0; j < gt.joint_count(); ++j) {
        const double y = gt.joints[static_cast<std::size_t>(j * 2 + 1)];
        lo = std::min(lo, y);
        hi = std::max(hi, y);
    }
    return std::max(hi - lo, 1e-9);
}

std::vector<int> match_poses_to_gt(const std::vector<ScoredPose>& preds, const std::vector<GtPose>& gts,
                                   double radius_fraction) {
    if (radius_fraction <= 0) throw std::invalid_argument("match_poses_to_gt: radius_fraction must be positive");
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return preds[a].confidence > preds[b].confidence; });
    std::vector<int> assign(preds.size(), -1);
    std::vector<char> claimed(gts.size(), 0);
    for (const std::size_t pi : order) {
        int best_gt = -1, best_hits = 0;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (claimed[gi]) continue;
            const GtPose& g = gts[gi];
            const double radius = radius_fraction * gt_height(g);
            int hits = 0;
            for (int j = 0; j < g.joint_count(); ++j) {
                if (!g.visible[static_cast<std::size_t>(j)]) continue;
                const double dx = preds[pi].joints[static_cast<std::size_t>(j * 2)] -
                                  g.joints[static_cast<std::size_t>(j * 2)];
                const double dy = preds[pi].joints[static_cast<std::size_t>(j * 2 + 1)] -
                                  g.joints[static_cast<std::size_t>(j * 2 + 1)];
                if (std::hypot(dx, dy) <= radius) ++hits;
            }
            if (hits > best_hits) {
                best_hits = hits;
                best_gt = static_cast<int>(gi);
            }
        }
        if (best_gt >= 0) {
            assign[pi] = best_gt;
            claimed[static_cast<std::size_t>(best_gt)] = 1;
        }
    }
    return assign;
}

double compute_ap(std::vector<Detection> detections, std::int64_t total_gt,
                  std::vector<std::pair<double, double>>* pr_curve) {
    if (total_gt < 0) throw std::invalid_argument("compute_ap: negative total_gt");
    if (total_gt == 0) return detections.empty() ? 1.0 : 0.0;
    std::stable_sort(detections.begin(), detections.end(),
                     [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    std::vector<double> prec(detections.size()), rec(detections.size());
    std::int64_t tp = 0;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        if (detections[i].correct) ++tp;
        prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        rec[i] = static_cast<double>(tp) / static_cast<double>(total_gt);
        if (pr_curve) pr_curve->emplace_back(rec[i], prec[i]);
    }
    // All-point interpolation: precision at each recall level is the max
    // precision to its right.
    double ap = 0.0, run_max = 0.0, prev_rec = detections.empty() ? 0.0 : rec.back();
    for (std::size_t k = detections.size(); k-- > 0;) {
        run_max = std::max(run_max, prec[k]);
        const double r_lo = k == 0 ? 0.0 : rec[k - 1];
        ap += (rec[k] - r_lo) * run_max;
    }
    (void)prev_rec;
    return ap;
}

double compute_map(const std::vector<double>& keypoint_aps) {
    if (keypoint_aps.empty()) throw std::invalid_argument("compute_map: no keypoint APs");
    double s = 0;
    for (double a : keypoint_aps) s += a;
    return s / static_cast<double>(keypoint_aps.size());
}

EvalReport evaluate(const std::vector<std::vector<ScoredPose>>& preds, const std::vector<std::vector<GtPose>>& gts,
                    double radius_fraction) {
    if (preds.size() != gts.size()) throw std::invalid_argument("evaluate: scene count mismatch");
    int J = kNumJoints;
    for (const auto& scene : gts) {
        if (!scene.empty()) {
            J = scene[0].joint_count();
            break;
        }
    }
    std::vector<std::vector<Detection>> dets(static_cast<std::size_t>(J));
    std::vector<std::int64_t> totals(static_cast<std::size_t>(J), 0);
    EvalReport rep;
    for (std::size_t s = 0; s < preds.size(); ++s) {
        for (const auto& g : gts[s]) {
            for (int j = 0; j < J; ++j) {
                if (g.visible[static_cast<std::size_t>(j)]) ++totals[static_cast<std::size_t>(j)];
            }
        }
        const auto assign = match_poses_to_gt(preds[s], gts[s], radius_fraction);
        std::vector<char> gt_hit(gts[s].size(), 0);
        for (std::size_t pi = 0; pi < preds[s].size(); ++pi) {
            const int gi = assign[pi];
            if (gi >= 0) gt_hit[static_cast<std::size_t>(gi)] = 1;
            for (int j = 0; j < J; ++j) {
                Detection d;
                d.confidence = preds[s][pi].confidence;
                if (gi >= 0) {
                    const GtPose& g = gts[s][static_cast<std::size_t>(gi)];
                    // invisible joints of a matched person are not scored at
                    // all (neither hit nor false alarm)
                    if (!g.visible[static_cast<std::size_t>(j)]) continue;
                    const double radius = radius_fraction * gt_height(g);
                    const double dx = preds[s][pi].joints[static_cast<std::size_t>(j * 2)] -
                                      g.joints[static_cast<std::size_t>(j * 2)];
                    const double dy = preds[s][pi].joints[static_cast<std::size_t>(j * 2 + 1)] -
                                      g.joints[static_cast<std::size_t>(j * 2 + 1)];
                    d.correct = std::hypot(dx, dy) <= radius;
                }
                dets[static_cast<std::size_t>(j)].push_back(d);
            }
        }
        for (std::size_t gi = 0; gi < gts[s].size(); ++gi) {
            if (gt_hit[gi])
                ++rep.matched;
            else
                ++rep.missed;
        }
    }
    rep.pr_curves.resize(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j) {
        rep.keypoint_ap.push_back(compute_ap(dets[static_cast<std::size_t>(j)], totals[static_cast<std::size_t>(j)],
                                             &rep.pr_curves[static_cast<std::size_t>(j)]));
    }
    rep.map = compute_map(rep.keypoint_ap);
    return rep;
}

AnnotationSet parse_posetrack_json(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("parse_posetrack_json: cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("parse_posetrack_json: malformed JSON at byte " + std::to_string(e.byte) + ": " +
                                 e.what());
    }
    for (const char* key : {"images", "annotations", "categories"}) {
        if (!j.contains(key)) throw std::runtime_error(std::string("parse_posetrack_json: missing key \"") + key + "\"");
    }
    AnnotationSet set;
    if (j["categories"].empty() || !j["categories"][0].contains("keypoints"))
        throw std::runtime_error("parse_posetrack_json: missing key \"categories[0].keypoints\"");
    set.keypoint_order = j["categories"][0]["keypoints"].get<std::vector<std::string>>();
    const int J = static_cast<int>(set.keypoint_order.size());
    std::map<std::int64_t, std::size_t> by_id;
    for (const auto& im : j["images"]) {
        if (!im.contains("id")) throw std::runtime_error("parse_posetrack_json: missing key \"images[].id\"");
        AnnotationImage a;
        a.id = im.at("id").get<std::int64_t>();
        a.file_name = im.value("file_name", "");
        by_id[a.id] = set.images.size();
        set.images.push_back(std::move(a));
    }
    for (const auto& an : j["annotations"]) {
        if (!an.contains("image_id") || !an.contains("keypoints"))
            throw std::runtime_error("parse_posetrack_json: missing key \"annotations[].image_id/keypoints\"");
        const auto kp = an["keypoints"].get<std::vector<double>>();
        if (static_cast<int>(kp.size()) != 3 * J)
            throw std::runtime_error("parse_posetrack_json: keypoint array length " + std::to_string(kp.size()) +
                                     " is not 3*J = " + std::to_string(3 * J));
        const auto it = by_id.find(an["image_id"].get<std::int64_t>());
        if (it == by_id.end()) throw std::runtime_error("parse_posetrack_json: annotation references unknown image_id");
        GtPose g;
        for (int k = 0; k < J; ++k) {
            g.joints.push_back(kp[static_cast<std::size_t>(3 * k)]);
            g.joints.push_back(kp[static_cast<std::size_t>(3 * k + 1)]);
            g.visible.push_back(kp[static_cast<std::size_t>(3 * k + 2)] != 0.0);
        }
        set.images[it->second].poses.push_back(std::move(g));
    }
    return set;
}

void write_predictions(const std::vector<AnnotationImage>& images, const std::string& path) {
    nlohmann::json j;
    j["images"] = nlohmann::json::array();
    j["annotations"] = nlohmann::json::array();
    j["categories"] = {{{"name", "person"}, {"keypoints", keypoint_names()}}};
    for (const auto& im : images) {
        j["images"].push_back({{"id", im.id}, {"file_name", im.file_name}});
        for (const auto& p : im.poses) {
            std::vector<double> kp;
            for (int k = 0; k < p.joint_count(); ++k) {
                kp.push_back(p.joints[static_cast<std::size_t>(2 * k)]);
                kp.push_back(p.joints[static_cast<std::size_t>(2 * k + 1)]);
                kp.push_back(p.visible[static_cast<std::size_t>(k)] ? 1.0 : 0.0);
            }
            j["annotations"].push_back({{"image_id", im.id}, {"keypoints", kp}});
        }
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_predictions: cannot open " + path);
    f << j.dump(2) << "\n";
    if (!f) throw std::runtime_error("write_predictions: write failed for " + path);
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_report_csv: cannot open " + path);
    f << "keypoint,ap\n";
    const auto& names = keypoint_names();
    f.precision(17);
    for (std::size_t j = 0; j < report.keypoint_ap.size(); ++j) {
        f << (j < names.size() ? names[j] : "kp" + std::to_string(j)) << "," << report.keypoint_ap[j] << "\n";
    }
    f << "mAP," << report.map << "\n";
    if (!f) throw std::runtime_error("write_report_csv: write failed for " + path);
}

void write_overlay_ppm(const std::vector<double>& frame, std::int64_t h, std::int64_t w,
                       const std::vector<ScoredPose>& poses, const std::string& path) {
    std::vector<double> img = frame;
    auto put = [&](double xn, double yn) {
        const auto x = static_cast<std::int64_t>(std::lround(xn * static_cast<double>(w - 1)));
        const auto y = static_cast<std::int64_t>(std::lround(yn * static_cast<double>(h - 1)));
        if (x < 0 || x >= w || y < 0 || y >= h) return;
        img[static_cast<std::size_t>((y * w + x) * 3)] = 1.0;
        img[static_cast<std::size_t>((y * w + x) * 3 + 1)] = 1.0;
        img[static_cast<std::size_t>((y * w + x) * 3 + 2)] = 0.0;
    };
    for (const auto& p : poses) {
        const int J = static_cast<int>(p.joints.size() / 2);
        for (int j = 0; j < J; ++j) put(p.joints[static_cast<std::size_t>(2 * j)], p.joints[static_cast<std::size_t>(2 * j + 1)]);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_overlay_ppm: cannot open " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    for (double v : img) {
        const int b = std::clamp(static_cast<int>(std::lround(v * 255.0)), 0, 255);
        f.put(static_cast<char>(b));
    }
    if (!f) throw std::runtime_error("write_overlay_ppm: write failed for " + path);
}

}  // namespace pave

// Python bindings: model construction / prediction, the synthetic clip
// generator, the evaluator, and the matching / cost-accounting primitives.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pave/model.hpp"
#include "pave/train.hpp"

namespace py = pybind11;
using namespace pave;

namespace {

VideoClip clip_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& frames) {
    if (frames.ndim() != 4 || frames.shape(3) != 3) {
        throw std::invalid_argument("clip must be [frames, height, width, 3]");
    }
    const auto f = frames.shape(0);
    if (f % 2 == 0) throw std::invalid_argument("clip needs an odd frame count (keyframe in the middle)");
    VideoClip clip;
    clip.span = static_cast<int>(f / 2);
    clip.height = frames.shape(1);
    clip.width = frames.shape(2);
    const auto per_frame = static_cast<std::size_t>(clip.height * clip.width * 3);
    const double* base = frames.data();
    for (py::ssize_t i = 0; i < f; ++i) {
        clip.frames.emplace_back(base + static_cast<std::size_t>(i) * per_frame,
                                 base + static_cast<std::size_t>(i + 1) * per_frame);
    }
    return clip;
}

py::array_t<double> clip_to_array(const VideoClip& clip) {
    py::array_t<double> out({static_cast<py::ssize_t>(clip.frames.size()), static_cast<py::ssize_t>(clip.height),
                             static_cast<py::ssize_t>(clip.width), static_cast<py::ssize_t>(3)});
    double* dst = out.mutable_data();
    for (const auto& frame : clip.frames) {
        std::copy(frame.begin(), frame.end(), dst);
        dst += frame.size();
    }
    return out;
}

py::array_t<double> joints_to_array(const std::vector<double>& joints) {
    const auto j = static_cast<py::ssize_t>(joints.size() / 2);
    py::array_t<double> out({j, static_cast<py::ssize_t>(2)});
    std::copy(joints.begin(), joints.end(), out.mutable_data());
    return out;
}

GtPose gt_from_py(const py::array_t<double, py::array::c_style | py::array::forcecast>& joints,
                  const std::vector<bool>& visible) {
    if (joints.ndim() != 2 || joints.shape(1) != 2) throw std::invalid_argument("joints must be [J, 2]");
    if (static_cast<std::size_t>(joints.shape(0)) != visible.size()) {
        throw std::invalid_argument("visible must have one entry per joint");
    }
    GtPose g;
    g.joints.assign(joints.data(), joints.data() + joints.size());
    g.visible = visible;
    return g;
}

Difficulty parse_difficulty(const std::string& name) {
    if (name == "easy") return Difficulty::easy;
    if (name == "hard") return Difficulty::hard;
    throw std::invalid_argument("difficulty must be \"easy\" or \"hard\", got \"" + name + "\"");
}

}  // namespace

PYBIND11_MODULE(pavenet, m) {
    m.doc() = "End-to-end multi-person video pose estimation (C++ core bindings)";

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("embed_dim", &ModelConfig::embed_dim)
        .def_readwrite("queries", &ModelConfig::queries)
        .def_readwrite("joints", &ModelConfig::joints)
        .def_readwrite("span", &ModelConfig::span)
        .def_readwrite("enc_layers", &ModelConfig::enc_layers)
        .def_readwrite("dec_layers", &ModelConfig::dec_layers)
        .def_readwrite("joint_layers", &ModelConfig::joint_layers)
        .def_readwrite("heads", &ModelConfig::heads)
        .def_readwrite("points", &ModelConfig::points)
        .def_readwrite("levels", &ModelConfig::levels)
        .def_readwrite("height", &ModelConfig::height)
        .def_readwrite("width", &ModelConfig::width)
        .def_property(
            "variant", [](const ModelConfig& c) { return variant_name(c.variant); },
            [](ModelConfig& c, const std::string& v) { c.variant = parse_variant(v); });

    py::class_<PaveNet>(m, "PaveNet")
        .def(py::init<const ModelConfig&, std::uint64_t>(), py::arg("config"), py::arg("seed"))
        .def_readonly("config", &PaveNet::cfg)
        .def(
            "predict",
            [](const PaveNet& model, const py::array_t<double, py::array::c_style | py::array::forcecast>& frames,
               double threshold) {
                VideoClip clip = clip_from_array(frames);
                std::vector<ScoredPose> poses;
                {
                    py::gil_scoped_release release;
                    poses = model.predict(clip, threshold);
                }
                py::list out;
                for (const auto& p : poses) out.append(py::make_tuple(joints_to_array(p.joints), p.confidence));
                return out;
            },
            py::arg("clip"), py::arg("threshold") = 0.3,
            "Run the detector on a [frames, H, W, 3] clip; returns [(joints [J,2], confidence), ...]")
        .def("save", [](const PaveNet& model, const std::string& path) { model.save(path); }, py::arg("path"))
        .def("load", [](PaveNet& model, const std::string& path) { model.load(path); }, py::arg("path"))
        .def("parameter_count", [](const PaveNet& model) {
            std::int64_t n = 0;
            for (const auto& [name, p] : model.params.all()) n += static_cast<std::int64_t>(p->data.size());
            return n;
        });

    m.def(
        "generate_clip",
        [](std::uint64_t seed, int persons, const std::string& difficulty, int span) {
            ClipSample s = generate_clip(seed, persons, parse_difficulty(difficulty), span);
            py::list gts;
            for (const auto& g : s.keyframe_gt()) {
                gts.append(py::make_tuple(joints_to_array(g.joints), g.visible));
            }
            return py::make_tuple(clip_to_array(s.clip), gts);
        },
        py::arg("seed"), py::arg("persons"), py::arg("difficulty") = "easy", py::arg("span") = 1,
        "Synthesize a clip; returns (frames [2*span+1, H, W, 3], keyframe ground truth)");

    m.def(
        "evaluate",
        [](const py::list& preds, const py::list& gts, double radius_fraction) {
            if (py::len(preds) != py::len(gts)) throw std::invalid_argument("preds and gts must align per scene");
            std::vector<std::vector<ScoredPose>> ps;
            std::vector<std::vector<GtPose>> gs;
            for (const auto& scene : preds) {
                std::vector<ScoredPose> sp;
                for (const auto& item : scene.cast<py::list>()) {
                    auto t = item.cast<py::tuple>();
                    ScoredPose p;
                    auto arr = t[0].cast<py::array_t<double, py::array::c_style | py::array::forcecast>>();
                    p.joints.assign(arr.data(), arr.data() + arr.size());
                    p.confidence = t[1].cast<double>();
                    sp.push_back(std::move(p));
                }
                ps.push_back(std::move(sp));
            }
            for (const auto& scene : gts) {
                std::vector<GtPose> sg;
                for (const auto& item : scene.cast<py::list>()) {
                    auto t = item.cast<py::tuple>();
                    sg.push_back(gt_from_py(t[0].cast<py::array_t<double, py::array::c_style | py::array::forcecast>>(),
                                            t[1].cast<std::vector<bool>>()));
                }
                gs.push_back(std::move(sg));
            }
            EvalReport r = evaluate(ps, gs, radius_fraction);
            py::dict out;
            out["map"] = r.map;
            out["keypoint_ap"] = r.keypoint_ap;
            out["matched"] = r.matched;
            out["missed"] = r.missed;
            return out;
        },
        py::arg("preds"), py::arg("gts"), py::arg("radius_fraction") = 0.1,
        "Score predictions [(joints [J,2], confidence), ...] per scene against ground truth "
        "[(joints [J,2], visible), ...] per scene");

    m.def(
        "hungarian_match",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cost) {
            if (cost.ndim() != 2) throw std::invalid_argument("cost must be 2-D [preds, gts]");
            std::vector<std::vector<double>> rows(static_cast<std::size_t>(cost.shape(0)));
            for (py::ssize_t i = 0; i < cost.shape(0); ++i) {
                rows[static_cast<std::size_t>(i)].assign(cost.data() + i * cost.shape(1),
                                                         cost.data() + (i + 1) * cost.shape(1));
            }
            MatchResult res = hungarian_match(rows);
            return py::make_tuple(res.pairs, res.background);
        },
        py::arg("cost"),
        "Minimum-cost assignment of every column to a distinct row; returns (pairs, unmatched rows)");

    m.def("rle_nll", &rle_nll, py::arg("mu"), py::arg("b"), py::arg("gt"),
          "Laplace negative log-likelihood of one coordinate");

    m.def(
        "attention_cost",
        [](const std::string& kind, const std::string& mode, int layers, std::int64_t embed_dim, int heads,
           int points, int levels, int f, std::int64_t n_tokens) {
            EncoderConfig cfg;
            cfg.layers = layers;
            cfg.embed_dim = embed_dim;
            cfg.heads = heads;
            cfg.points = points;
            cfg.levels = levels;
            if (kind == "dense") {
                cfg.kind = AttentionKind::dense;
            } else if (kind == "deformable") {
                cfg.kind = AttentionKind::deformable;
            } else {
                throw std::invalid_argument("kind must be \"dense\" or \"deformable\"");
            }
            if (mode == "spatial") {
                cfg.mode = EncoderMode::spatial;
            } else if (mode == "spatiotemporal") {
                cfg.mode = EncoderMode::spatiotemporal;
            } else {
                throw std::invalid_argument("mode must be \"spatial\" or \"spatiotemporal\"");
            }
            return count_attention_cost(cfg, f, n_tokens);
        },
        py::arg("kind"), py::arg("mode"), py::arg("layers"), py::arg("embed_dim"), py::arg("heads"),
        py::arg("points"), py::arg("levels"), py::arg("f"), py::arg("n_tokens"),
        "Exact multiply-add count of the encoder attention");

    m.def("keypoint_names", &keypoint_names, "Keypoint order used by the synthetic ground truth and the JSON I/O");
}

#include "pave/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace pave {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

int to_int(const std::string& v) { return std::stoi(v); }
double to_double(const std::string& v) { return std::stod(v); }

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
    if (key == "variant") model.variant = parse_variant(value);
    else if (key == "embed_dim") model.embed_dim = to_int(value);
    else if (key == "queries") model.queries = to_int(value);
    else if (key == "joints") model.joints = to_int(value);
    else if (key == "span") model.span = to_int(value);
    else if (key == "enc_layers") model.enc_layers = to_int(value);
    else if (key == "dec_layers") model.dec_layers = to_int(value);
    else if (key == "joint_layers") model.joint_layers = to_int(value);
    else if (key == "heads") model.heads = to_int(value);
    else if (key == "points") model.points = to_int(value);
    else if (key == "height") model.height = to_int(value);
    else if (key == "width") model.width = to_int(value);
    else if (key == "steps") train.steps = to_int(value);
    else if (key == "batch") train.batch = to_int(value);
    else if (key == "threads") train.threads = to_int(value);
    else if (key == "lr") train.lr = to_double(value);
    else if (key == "weight_decay") train.weight_decay = to_double(value);
    else if (key == "l_cls") train.l_cls = to_double(value);
    else if (key == "l_rle") train.l_rle = to_double(value);
    else if (key == "seed") train.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "difficulty") {
        if (value == "easy") train.difficulty = Difficulty::easy;
        else if (value == "hard") train.difficulty = Difficulty::hard;
        else throw std::invalid_argument("config: difficulty must be easy or hard, got \"" + value + "\"");
    }
    else if (key == "min_persons") train.min_persons = to_int(value);
    else if (key == "max_persons") train.max_persons = to_int(value);
    else if (key == "blur") train.blur = to_double(value);
    else if (key == "occlude") train.occlude = to_double(value);
    else if (key == "flip_prob") train.flip_prob = to_double(value);
    else if (key == "scale_aug") train.scale_aug = to_double(value);
    else if (key == "eval_every") train.eval_every = to_int(value);
    else if (key == "eval_clips") train.eval_clips = to_int(value);
    else if (key == "score_threshold") train.score_threshold = to_double(value);
    else if (key == "target_map") train.target_map = to_double(value);
    else if (key == "out_dir") train.out_dir = value;
    else throw std::invalid_argument("config: unknown key \"" + key + "\"");
}

RunConfig RunConfig::parse_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> bad;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not key = value: \"" + line + "\"");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        try {
            cfg.apply(key, value);
        } catch (const std::invalid_argument& e) {
            bad.emplace_back(e.what());
        }
    }
    if (!bad.empty()) {
        std::string msg = "config: invalid entries:";
        for (const auto& b : bad) msg += "\n  " + b;
        throw std::invalid_argument(msg);
    }
    cfg.model.validate();
    if (cfg.train.steps < 0 || cfg.train.batch <= 0 || cfg.train.lr <= 0)
        throw std::invalid_argument("config: steps/batch/lr must be positive");
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_text(ss.str());
}

std::string RunConfig::echo() const {
    std::ostringstream o;
    o.precision(17);
    o << "variant = " << variant_name(model.variant) << "\n";
    o << "embed_dim = " << model.embed_dim << "\n";
    o << "queries = " << model.queries << "\n";
    o << "joints = " << model.joints << "\n";
    o << "span = " << model.span << "\n";
    o << "enc_layers = " << model.enc_layers << "\n";
    o << "dec_layers = " << model.dec_layers << "\n";
    o << "joint_layers = " << model.joint_layers << "\n";
    o << "heads = " << model.heads << "\n";
    o << "points = " << model.points << "\n";
    o << "height = " << model.height << "\n";
    o << "width = " << model.width << "\n";
    o << "steps = " << train.steps << "\n";
    o << "batch = " << train.batch << "\n";
    o << "threads = " << train.threads << "\n";
    o << "lr = " << train.lr << "\n";
    o << "weight_decay = " << train.weight_decay << "\n";
    o << "l_cls = " << train.l_cls << "\n";
    o << "l_rle = " << train.l_rle << "\n";
    o << "seed = " << train.seed << "\n";
    o << "difficulty = " << (train.difficulty == Difficulty::hard ? "hard" : "easy") << "\n";
    o << "min_persons = " << train.min_persons << "\n";
    o << "max_persons = " << train.max_persons << "\n";
    o << "blur = " << train.blur << "\n";
    o << "occlude = " << train.occlude << "\n";
    o << "flip_prob = " << train.flip_prob << "\n";
    o << "scale_aug = " << train.scale_aug << "\n";
    o << "eval_every = " << train.eval_every << "\n";
    o << "eval_clips = " << train.eval_clips << "\n";
    o << "score_threshold = " << train.score_threshold << "\n";
    o << "target_map = " << train.target_map << "\n";
    if (!train.out_dir.empty()) o << "out_dir = " << train.out_dir << "\n";
    return o.str();
}

}  // namespace pave

#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "diffseg/common.hpp"
#include "diffseg/data.hpp"
#include "diffseg/densecrf.hpp"
#include "diffseg/diffusion.hpp"
#include "diffseg/refine.hpp"
#include "diffseg/segment.hpp"

namespace diffseg {

// Whole-pipeline configuration; every field has a default and lives in a
// section named after its module. Unknown keys are rejected by name.
struct PipelineConfig {
    TrainConfig train;
    SyntheticSpec synth;
    ThresholdPolicy threshold;
    double diff_smooth_sigma = 0.0;
    std::vector<int> timesteps = default_timesteps();
    CrfParams crf;
    RefineConfig refine;
    AugmentConfig augment;
    uint64_t seed = 0;

    void apply_seed() {
        train.seed = seed;
        synth.seed = seed;
        refine.seed = seed;
    }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

template <typename T>
T parse_num(const std::string& key, const std::string& v);

template <>
inline double parse_num<double>(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        require_config(pos == v.size(), "config: bad number for " + key);
        return d;
    } catch (const std::exception&) {
        throw config_error("config: bad number for " + key + ": " + v);
    }
}

template <>
inline int parse_num<int>(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int i = std::stoi(v, &pos);
        require_config(pos == v.size(), "config: bad integer for " + key);
        return i;
    } catch (const std::exception&) {
        throw config_error("config: bad integer for " + key + ": " + v);
    }
}

template <>
inline uint64_t parse_num<uint64_t>(const std::string& key,
                                    const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t u = std::stoull(v, &pos);
        require_config(pos == v.size(), "config: bad integer for " + key);
        return u;
    } catch (const std::exception&) {
        throw config_error("config: bad integer for " + key + ": " + v);
    }
}

}  // namespace config_detail

// "start:stop:step" -> inclusive range.
inline std::vector<int> parse_timesteps(const std::string& text) {
    int vals[3];
    size_t a = text.find(':'), b = text.find(':', a + 1);
    require_config(a != std::string::npos && b != std::string::npos,
                   "timesteps: expected start:stop:step");
    vals[0] = config_detail::parse_num<int>("timesteps", text.substr(0, a));
    vals[1] =
        config_detail::parse_num<int>("timesteps", text.substr(a + 1, b - a - 1));
    vals[2] = config_detail::parse_num<int>("timesteps", text.substr(b + 1));
    require_config(vals[2] > 0 && vals[1] >= vals[0],
                   "timesteps: need stop >= start and step > 0");
    std::vector<int> out;
    for (int t = vals[0]; t <= vals[1]; t += vals[2]) out.push_back(t);
    return out;
}

inline void set_config_key(PipelineConfig& cfg, const std::string& section,
                           const std::string& key, const std::string& value) {
    using config_detail::parse_num;
    std::string full = section + "." + key;
    auto d = [&] { return parse_num<double>(full, value); };
    auto i = [&] { return parse_num<int>(full, value); };
    auto u = [&] { return parse_num<uint64_t>(full, value); };

    if (section == "train") {
        if (key == "image_size") cfg.train.image_size = i();
        else if (key == "batch_size") cfg.train.batch_size = i();
        else if (key == "epochs") cfg.train.epochs = i();
        else if (key == "learning_rate") cfg.train.learning_rate = d();
        else if (key == "T") cfg.train.T = i();
        else if (key == "beta_start") cfg.train.beta_start = d();
        else if (key == "beta_end") cfg.train.beta_end = d();
        else if (key == "mode") {
            if (value == "embedding") cfg.train.mode = ConditioningMode::embedding;
            else if (value == "dual-model")
                cfg.train.mode = ConditioningMode::dual_model;
            else throw config_error("config: train.mode must be embedding or dual-model");
        } else if (key == "loss") {
            if (value == "l2") cfg.train.loss = LossNorm::l2;
            else if (value == "l1") cfg.train.loss = LossNorm::l1;
            else throw config_error("config: train.loss must be l1 or l2");
        } else if (key == "channels") {
            cfg.train.net.channels.clear();
            std::stringstream ss(value);
            std::string tok;
            while (std::getline(ss, tok, ','))
                cfg.train.net.channels.push_back(
                    parse_num<int>(full, config_detail::trim(tok)));
            require_config(!cfg.train.net.channels.empty(),
                           "config: train.channels must not be empty");
        } else if (key == "emb_width") cfg.train.net.emb_width = i();
        else throw config_error("config: unknown key " + full);
    } else if (section == "synth") {
        if (key == "image_size") cfg.synth.image_size = i();
        else if (key == "lesion_count_min") cfg.synth.lesion_count_min = i();
        else if (key == "lesion_count_max") cfg.synth.lesion_count_max = i();
        else if (key == "lesion_radius_min") cfg.synth.lesion_radius_min = d();
        else if (key == "lesion_radius_max") cfg.synth.lesion_radius_max = d();
        else if (key == "boundary_perturb") cfg.synth.boundary_perturb = d();
        else if (key == "color_jitter") cfg.synth.color_jitter = d();
        else if (key == "hair_rate") cfg.synth.hair_rate = d();
        else if (key == "bubble_rate") cfg.synth.bubble_rate = d();
        else throw config_error("config: unknown key " + full);
    } else if (section == "segment") {
        if (key == "delta") {
            if (value == "otsu") cfg.threshold.kind = ThresholdKind::otsu;
            else {
                cfg.threshold.kind = ThresholdKind::fixed;
                cfg.threshold.delta = d();
            }
        } else if (key == "normalize") cfg.threshold.normalize = i() != 0;
        else if (key == "smooth_sigma") cfg.diff_smooth_sigma = d();
        else if (key == "timesteps") cfg.timesteps = parse_timesteps(value);
        else throw config_error("config: unknown key " + full);
    } else if (section == "crf") {
        if (key == "w1") cfg.crf.w1 = d();
        else if (key == "w2") cfg.crf.w2 = d();
        else if (key == "theta_alpha") cfg.crf.theta_alpha = d();
        else if (key == "theta_beta") cfg.crf.theta_beta = d();
        else if (key == "theta_gamma") cfg.crf.theta_gamma = d();
        else if (key == "iterations") cfg.crf.iterations = i();
        else if (key == "tol") cfg.crf.tol = d();
        else if (key == "grid_sigma_cells") cfg.crf.grid_sigma_cells = d();
        else throw config_error("config: unknown key " + full);
    } else if (section == "refine") {
        if (key == "iterations") cfg.refine.iterations = i();
        else if (key == "subset_size") cfg.refine.subset_size = i();
        else if (key == "binarize_threshold") cfg.refine.binarize_threshold = d();
        else if (key == "unary_clamp") cfg.refine.unary_clamp = d();
        else if (key == "fast_crf") cfg.refine.use_fast_crf = i() != 0;
        else throw config_error("config: unknown key " + full);
    } else if (section == "augment") {
        if (key == "blur_prob") cfg.augment.blur_prob = d();
        else if (key == "rotate_prob") cfg.augment.rotate_prob = d();
        else if (key == "sharpen_prob") cfg.augment.sharpen_prob = d();
        else if (key == "blur_sigma") cfg.augment.blur_sigma = d();
        else if (key == "sharpen_amount") cfg.augment.sharpen_amount = d();
        else if (key == "arbitrary_rotation")
            cfg.augment.arbitrary_rotation = i() != 0;
        else throw config_error("config: unknown key " + full);
    } else if (section == "run") {
        if (key == "seed") cfg.seed = u();
        else throw config_error("config: unknown key " + full);
    } else {
        throw config_error("config: unknown section [" + section + "]");
    }
}

inline PipelineConfig parse_config(std::istream& is) {
    PipelineConfig cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = config_detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            require_config(line.back() == ']',
                           "config: malformed section at line " +
                               std::to_string(lineno));
            section = line.substr(1, line.size() - 2);
            continue;
        }
        auto eq = line.find('=');
        require_config(eq != std::string::npos,
                       "config: expected key = value at line " +
                           std::to_string(lineno));
        std::string key = config_detail::trim(line.substr(0, eq));
        std::string value = config_detail::trim(line.substr(eq + 1));
        require_config(!section.empty(),
                       "config: key " + key + " outside any section");
        set_config_key(cfg, section, key, value);
    }
    cfg.apply_seed();
    return cfg;
}

// Canonical dump used for manifest hashing.
inline std::string dump_config(const PipelineConfig& cfg) {
    std::ostringstream os;
    os << "[run]\nseed = " << cfg.seed << "\n";
    os << "[train]\n";
    os << "image_size = " << cfg.train.image_size << "\n";
    os << "batch_size = " << cfg.train.batch_size << "\n";
    os << "epochs = " << cfg.train.epochs << "\n";
    os << "learning_rate = " << cfg.train.learning_rate << "\n";
    os << "T = " << cfg.train.T << "\n";
    os << "beta_start = " << cfg.train.beta_start << "\n";
    os << "beta_end = " << cfg.train.beta_end << "\n";
    os << "mode = "
       << (cfg.train.mode == ConditioningMode::embedding ? "embedding"
                                                         : "dual-model")
       << "\n";
    os << "loss = " << (cfg.train.loss == LossNorm::l2 ? "l2" : "l1") << "\n";
    os << "channels = ";
    for (size_t i = 0; i < cfg.train.net.channels.size(); ++i)
        os << (i ? "," : "") << cfg.train.net.channels[i];
    os << "\nemb_width = " << cfg.train.net.emb_width << "\n";
    os << "[synth]\n";
    os << "image_size = " << cfg.synth.image_size << "\n";
    os << "lesion_count_min = " << cfg.synth.lesion_count_min << "\n";
    os << "lesion_count_max = " << cfg.synth.lesion_count_max << "\n";
    os << "lesion_radius_min = " << cfg.synth.lesion_radius_min << "\n";
    os << "lesion_radius_max = " << cfg.synth.lesion_radius_max << "\n";
    os << "boundary_perturb = " << cfg.synth.boundary_perturb << "\n";
    os << "color_jitter = " << cfg.synth.color_jitter << "\n";
    os << "hair_rate = " << cfg.synth.hair_rate << "\n";
    os << "bubble_rate = " << cfg.synth.bubble_rate << "\n";
    os << "[segment]\n";
    if (cfg.threshold.kind == ThresholdKind::otsu)
        os << "delta = otsu\n";
    else
        os << "delta = " << cfg.threshold.delta << "\n";
    os << "normalize = " << (cfg.threshold.normalize ? 1 : 0) << "\n";
    os << "smooth_sigma = " << cfg.diff_smooth_sigma << "\n";
    os << "timesteps =";
    for (int t : cfg.timesteps) os << " " << t;
    os << "\n[crf]\n";
    os << "w1 = " << cfg.crf.w1 << "\nw2 = " << cfg.crf.w2 << "\n";
    os << "theta_alpha = " << cfg.crf.theta_alpha << "\n";
    os << "theta_beta = " << cfg.crf.theta_beta << "\n";
    os << "theta_gamma = " << cfg.crf.theta_gamma << "\n";
    os << "iterations = " << cfg.crf.iterations << "\n";
    os << "tol = " << cfg.crf.tol << "\n";
    os << "grid_sigma_cells = " << cfg.crf.grid_sigma_cells << "\n";
    os << "[refine]\n";
    os << "iterations = " << cfg.refine.iterations << "\n";
    os << "subset_size = " << cfg.refine.subset_size << "\n";
    os << "binarize_threshold = " << cfg.refine.binarize_threshold << "\n";
    os << "unary_clamp = " << cfg.refine.unary_clamp << "\n";
    os << "fast_crf = " << (cfg.refine.use_fast_crf ? 1 : 0) << "\n";
    os << "[augment]\n";
    os << "blur_prob = " << cfg.augment.blur_prob << "\n";
    os << "rotate_prob = " << cfg.augment.rotate_prob << "\n";
    os << "sharpen_prob = " << cfg.augment.sharpen_prob << "\n";
    os << "blur_sigma = " << cfg.augment.blur_sigma << "\n";
    os << "sharpen_amount = " << cfg.augment.sharpen_amount << "\n";
    os << "arbitrary_rotation = " << (cfg.augment.arbitrary_rotation ? 1 : 0)
       << "\n";
    return os.str();
}

inline PipelineConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("config file not found: " + path);
    return parse_config(is);
}

// Validation that crosses module boundaries.
inline void validate_pipeline(const PipelineConfig& cfg) {
    cfg.train.validate();
    cfg.synth.validate();
    cfg.crf.validate();
    for (int t : cfg.timesteps)
        require_config(t >= 1 && t <= cfg.train.T,
                       "config: segment.timesteps entry " + std::to_string(t) +
                           " exceeds train.T");
}

}  // namespace diffseg

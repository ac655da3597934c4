#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "diffseg/common.hpp"
#include "diffseg/image_io.hpp"
#include "diffseg/nn.hpp"
#include "diffseg/rng.hpp"
#include "diffseg/segment.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

struct SyntheticSpec {
    int image_size = 64;
    int lesion_count_min = 1;
    int lesion_count_max = 1;
    double lesion_radius_min = 0.12;  // fraction of image size
    double lesion_radius_max = 0.28;
    double boundary_perturb = 0.18;   // radial wobble amplitude
    float skin_color[3] = {0.87f, 0.72f, 0.60f};
    float lesion_color[3] = {0.38f, 0.22f, 0.16f};
    double color_jitter = 0.06;
    double hair_rate = 0.3;    // probability of hair strokes per image
    double bubble_rate = 0.2;  // probability of bubbles per image
    uint64_t seed = 0;

    void validate() const {
        require_config(image_size > 0, "synth: image size must be positive");
        require_config(lesion_count_min >= 0 &&
                           lesion_count_max >= lesion_count_min,
                       "synth: bad lesion count range");
        require_config(lesion_radius_max * 2.0 < 1.0,
                       "synth: lesion larger than image");
        require_config(hair_rate >= 0 && hair_rate <= 1 && bubble_rate >= 0 &&
                           bubble_rate <= 1,
                       "synth: distractor rates must be in [0,1]");
    }
};

struct Sample {
    std::string id;
    Image image;
    BinaryMask mask;  // ground truth; all-zero for healthy samples
    ClassLabel label = ClassLabel::c0_healthy;
};

namespace data_detail {

inline void smooth_background(Image& img, const SyntheticSpec& spec,
                              RngStream& rng) {
    float base[3];
    for (int c = 0; c < 3; ++c)
        base[c] = spec.skin_color[c] +
                  static_cast<float>(rng.uniform(-spec.color_jitter,
                                                 spec.color_jitter));
    // low-frequency shading: a random linear gradient plus mild noise
    double gx = rng.uniform(-0.08, 0.08), gy = rng.uniform(-0.08, 0.08);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            float shade = static_cast<float>(
                gx * (x - img.width / 2.0) / img.width +
                gy * (y - img.height / 2.0) / img.height);
            for (int c = 0; c < 3; ++c) {
                float n = static_cast<float>(rng.uniform(-0.015, 0.015));
                img.at(y, x, c) = std::clamp(base[c] + shade + n, 0.0f, 1.0f);
            }
        }
}

struct LesionShape {
    double cx, cy, rx, ry, angle;
    double wobble_amp;
    double wobble_phase[3];
    int wobble_freq[3];

    bool contains(double x, double y) const {
        double dx = x - cx, dy = y - cy;
        double ca = std::cos(angle), sa = std::sin(angle);
        double u = (ca * dx + sa * dy) / rx;
        double v = (-sa * dx + ca * dy) / ry;
        double r = std::sqrt(u * u + v * v);
        if (r == 0.0) return true;
        double theta = std::atan2(v, u);
        double boundary = 1.0;
        for (int k = 0; k < 3; ++k)
            boundary += wobble_amp / (k + 1) *
                        std::sin(wobble_freq[k] * theta + wobble_phase[k]);
        return r <= boundary;
    }
};

inline LesionShape random_lesion(const SyntheticSpec& spec, RngStream& rng) {
    LesionShape s;
    double size = spec.image_size;
    double r = rng.uniform(spec.lesion_radius_min, spec.lesion_radius_max) * size;
    s.rx = r * rng.uniform(0.75, 1.25);
    s.ry = r * rng.uniform(0.75, 1.25);
    double margin = std::max(s.rx, s.ry) * (1.0 + spec.boundary_perturb) + 2.0;
    margin = std::min(margin, size / 2.0 - 1.0);
    s.cx = rng.uniform(margin, size - margin);
    s.cy = rng.uniform(margin, size - margin);
    s.angle = rng.uniform(0.0, 3.14159265358979323846);
    s.wobble_amp = spec.boundary_perturb;
    for (int k = 0; k < 3; ++k) {
        s.wobble_freq[k] = static_cast<int>(rng.uniform_int(2, 6));
        s.wobble_phase[k] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    }
    return s;
}

inline void draw_hair(Image& img, RngStream& rng) {
    int strokes = static_cast<int>(rng.uniform_int(2, 5));
    for (int s = 0; s < strokes; ++s) {
        double x = rng.uniform(0.0, img.width - 1.0);
        double y = rng.uniform(0.0, img.height - 1.0);
        double dir = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        double curve = rng.uniform(-0.04, 0.04);
        float dark = static_cast<float>(rng.uniform(0.05, 0.25));
        int len = static_cast<int>(rng.uniform_int(img.width / 2, img.width * 2));
        for (int i = 0; i < len; ++i) {
            int px = static_cast<int>(std::lround(x));
            int py = static_cast<int>(std::lround(y));
            if (px >= 0 && px < img.width && py >= 0 && py < img.height)
                for (int c = 0; c < 3; ++c)
                    img.at(py, px, c) = dark * (c == 0 ? 1.2f : 1.0f);
            x += std::cos(dir);
            y += std::sin(dir);
            dir += curve;
        }
    }
}

inline void draw_bubbles(Image& img, RngStream& rng) {
    int count = static_cast<int>(rng.uniform_int(1, 4));
    for (int b = 0; b < count; ++b) {
        double cx = rng.uniform(2.0, img.width - 3.0);
        double cy = rng.uniform(2.0, img.height - 3.0);
        double r = rng.uniform(1.5, 4.0);
        for (int y = std::max(0, static_cast<int>(cy - r - 1));
             y <= std::min(img.height - 1, static_cast<int>(cy + r + 1)); ++y)
            for (int x = std::max(0, static_cast<int>(cx - r - 1));
                 x <= std::min(img.width - 1, static_cast<int>(cx + r + 1));
                 ++x) {
                double d = std::hypot(x - cx, y - cy);
                if (d > r) continue;
                float glint = d > r * 0.7 ? 0.95f : 0.80f;
                for (int c = 0; c < 3; ++c)
                    img.at(y, x, c) =
                        0.5f * img.at(y, x, c) + 0.5f * glint;
            }
    }
}

inline Image blur_image(const Image& img, double sigma) {
    Image out = img;
    for (int c = 0; c < img.channels; ++c) {
        Map2 ch(img.height, img.width);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) ch.at(y, x) = img.at(y, x, c);
        Map2 b = gaussian_smooth(ch, sigma);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) out.at(y, x, c) = b.at(y, x);
    }
    return out;
}

}  // namespace data_detail

// Reproducible synthetic dermoscopy-style samples. Hair and bubble
// distractors are rendered into the image but never into the mask.
inline std::vector<Sample> synthesize(const SyntheticSpec& spec, int count,
                                      const std::string& id_prefix = "") {
    spec.validate();
    require(count >= 1, "synthesize: count must be >= 1");
    std::vector<Sample> out;
    RngStream root(spec.seed);
    for (int i = 0; i < count; ++i) {
        RngStream rng = root.substream(static_cast<uint64_t>(i));
        Sample s;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d", i);
        s.id = id_prefix + buf;
        s.image = Image(spec.image_size, spec.image_size, 3);
        s.mask = BinaryMask(spec.image_size, spec.image_size);
        data_detail::smooth_background(s.image, spec, rng);

        int lesions = static_cast<int>(
            rng.uniform_int(spec.lesion_count_min, spec.lesion_count_max));
        for (int l = 0; l < lesions; ++l) {
            auto shape = data_detail::random_lesion(spec, rng);
            float col[3];
            for (int c = 0; c < 3; ++c)
                col[c] = spec.lesion_color[c] +
                         static_cast<float>(rng.uniform(-spec.color_jitter,
                                                        spec.color_jitter));
            for (int y = 0; y < spec.image_size; ++y)
                for (int x = 0; x < spec.image_size; ++x)
                    if (shape.contains(x, y)) {
                        s.mask.at(y, x) = 1;
                        for (int c = 0; c < 3; ++c) {
                            float n = static_cast<float>(
                                rng.uniform(-0.03, 0.03));
                            s.image.at(y, x, c) =
                                std::clamp(col[c] + n, 0.0f, 1.0f);
                        }
                    }
        }
        s.label = lesions > 0 ? ClassLabel::c1_unhealthy
                              : ClassLabel::c0_healthy;
        if (rng.bernoulli(spec.hair_rate)) data_detail::draw_hair(s.image, rng);
        if (rng.bernoulli(spec.bubble_rate))
            data_detail::draw_bubbles(s.image, rng);
        out.push_back(std::move(s));
    }
    return out;
}

// Lesion pixels replaced by the nearest non-lesion neighbor's color, then a
// 3 px Gaussian blend over the filled region; result is labeled healthy with
// an all-zero mask.
inline Sample healthy_counterfactual(const Sample& s) {
    if (s.mask.count_ones() == 0) {
        Sample out = s;
        out.label = ClassLabel::c0_healthy;
        return out;
    }
    if (s.mask.count_ones() == s.mask.size())
        throw data_error("healthy_counterfactual: mask covers entire image");

    Sample out = s;
    out.label = ClassLabel::c0_healthy;
    int h = s.image.height, w = s.image.width;
    // multi-source BFS from all non-lesion pixels, carrying the source color
    std::vector<int> source(static_cast<size_t>(h) * w, -1);
    std::deque<int> queue;
    for (int i = 0; i < h * w; ++i)
        if (!s.mask.data[i]) {
            source[i] = i;
            queue.push_back(i);
        }
    const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
    while (!queue.empty()) {
        int i = queue.front();
        queue.pop_front();
        int y = i / w, x = i % w;
        for (int k = 0; k < 4; ++k) {
            int ny = y + dy[k], nx = x + dx[k];
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            int j = ny * w + nx;
            if (source[j] >= 0) continue;
            source[j] = source[i];
            queue.push_back(j);
        }
    }
    Image filled = s.image;
    for (int i = 0; i < h * w; ++i)
        if (s.mask.data[i])
            for (int c = 0; c < 3; ++c)
                filled.data[i * 3 + c] = s.image.data[source[i] * 3 + c];
    Image blended = data_detail::blur_image(filled, 1.5);
    for (int i = 0; i < h * w; ++i)
        if (s.mask.data[i])
            for (int c = 0; c < 3; ++c)
                out.image.data[i * 3 + c] = blended.data[i * 3 + c];
        else
            for (int c = 0; c < 3; ++c)
                out.image.data[i * 3 + c] = s.image.data[i * 3 + c];
    out.mask = BinaryMask(h, w);
    return out;
}

struct AugmentConfig {
    double blur_prob = 0.3;
    double rotate_prob = 0.3;
    double sharpen_prob = 0.3;
    double blur_sigma = 1.0;
    double sharpen_amount = 0.8;
    bool arbitrary_rotation = false;  // default: multiples of 90 degrees
};

namespace data_detail {

inline void rotate90(Image& img, BinaryMask& mask, int quarter_turns) {
    int k = ((quarter_turns % 4) + 4) % 4;
    for (int t = 0; t < k; ++t) {
        Image ri(img.width, img.height, img.channels);
        BinaryMask rm(mask.width, mask.height);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                int ny = x, nx = img.height - 1 - y;
                for (int c = 0; c < img.channels; ++c)
                    ri.at(ny, nx, c) = img.at(y, x, c);
                rm.at(ny, nx) = mask.at(y, x);
            }
        img = std::move(ri);
        mask = std::move(rm);
    }
}

// Nearest-neighbor rotation about the image center; out-of-frame pixels keep
// the nearest border sample.
inline void rotate_nn(Image& img, BinaryMask& mask, double radians) {
    Image ri = img;
    BinaryMask rm = mask;
    double ca = std::cos(-radians), sa = std::sin(-radians);
    double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double sx = ca * (x - cx) - sa * (y - cy) + cx;
            double sy = sa * (x - cx) + ca * (y - cy) + cy;
            int ix = std::clamp(static_cast<int>(std::lround(sx)), 0,
                                img.width - 1);
            int iy = std::clamp(static_cast<int>(std::lround(sy)), 0,
                                img.height - 1);
            for (int c = 0; c < img.channels; ++c)
                ri.at(y, x, c) = img.at(iy, ix, c);
            rm.at(y, x) = mask.at(iy, ix);
        }
    img = std::move(ri);
    mask = std::move(rm);
}

}  // namespace data_detail

// Blur and sharpen touch the image only; rotation moves image and mask
// together.
inline Sample augment(const Sample& s, RngStream& rng,
                      const AugmentConfig& cfg = {}) {
    Sample out = s;
    if (rng.bernoulli(cfg.blur_prob))
        out.image = data_detail::blur_image(out.image, cfg.blur_sigma);
    if (rng.bernoulli(cfg.rotate_prob)) {
        if (cfg.arbitrary_rotation) {
            double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            data_detail::rotate_nn(out.image, out.mask, angle);
        } else {
            int k = static_cast<int>(rng.uniform_int(1, 3));
            data_detail::rotate90(out.image, out.mask, k);
        }
    }
    if (rng.bernoulli(cfg.sharpen_prob)) {
        Image blurred = data_detail::blur_image(out.image, cfg.blur_sigma);
        for (size_t i = 0; i < out.image.data.size(); ++i) {
            float v = out.image.data[i] +
                      static_cast<float>(cfg.sharpen_amount) *
                          (out.image.data[i] - blurred.data[i]);
            out.image.data[i] = std::clamp(v, 0.0f, 1.0f);
        }
    }
    return out;
}

// ---- dataset layout: root/{split}/{images,masks}/NNNN.png + labels.csv ----

inline void save_dataset(const std::string& root, const std::string& split,
                         const std::vector<Sample>& samples) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(root) / split / "images");
    fs::create_directories(fs::path(root) / split / "masks");
    for (const auto& s : samples) {
        write_png((fs::path(root) / split / "images" / (s.id + ".png")).string(),
                  image_to_png(s.image));
        write_mask_png(
            (fs::path(root) / split / "masks" / (s.id + ".png")).string(),
            s.mask);
    }
    // labels.csv is shared across splits; append or create with header
    fs::path csv = fs::path(root) / "labels.csv";
    bool fresh = !fs::exists(csv);
    std::ofstream os(csv, std::ios::app);
    if (!os) throw io_error("cannot write labels.csv under " + root);
    if (fresh) os << "id,label,split\n";
    for (const auto& s : samples)
        os << s.id << ","
           << (s.label == ClassLabel::c1_unhealthy ? "c1_unhealthy"
                                                   : "c0_healthy")
           << "," << split << "\n";
}

inline std::vector<Sample> load_dataset(const std::string& root,
                                        const std::string& split) {
    namespace fs = std::filesystem;
    fs::path csv = fs::path(root) / "labels.csv";
    std::ifstream is(csv);
    if (!is) throw io_error("labels.csv not found under " + root);
    std::string line;
    std::getline(is, line);  // header
    std::vector<Sample> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        size_t a = line.find(','), b = line.find(',', a + 1);
        require(a != std::string::npos && b != std::string::npos,
                "labels.csv: malformed line: " + line);
        std::string id = line.substr(0, a);
        std::string label = line.substr(a + 1, b - a - 1);
        std::string sp = line.substr(b + 1);
        if (sp != split) continue;
        Sample s;
        s.id = id;
        s.label = label == "c1_unhealthy" ? ClassLabel::c1_unhealthy
                                          : ClassLabel::c0_healthy;
        s.image = png_to_image(read_png(
            (fs::path(root) / split / "images" / (id + ".png")).string()));
        s.mask = read_mask_png(
            (fs::path(root) / split / "masks" / (id + ".png")).string());
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace diffseg

#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "diffseg/common.hpp"
#include "diffseg/image_io.hpp"
#include "diffseg/segment.hpp"
#include "diffseg/tensor.hpp"
#include "diffseg/uncertainty.hpp"

namespace diffseg {

// Linear 8-bit heatmap with the scaling recorded in a JSON sidecar, so the
// quantized map round-trips exactly.
inline void render_heatmap(const Map2& map, const std::string& png_path) {
    for (float v : map.data)
        require(is_finite(v), "render_heatmap: non-finite map value");
    float lo = map.data.empty() ? 0.0f : map.data[0];
    float hi = lo;
    for (float v : map.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    PngImage png;
    png.height = map.height;
    png.width = map.width;
    png.channels = 1;
    png.data.resize(map.size());
    float span = hi - lo;
    for (size_t i = 0; i < map.data.size(); ++i) {
        float v = span > 0.0f ? (map.data[i] - lo) / span : 0.0f;
        png.data[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }
    write_png(png_path, png);
    nlohmann::json side{{"min", lo}, {"max", hi}};
    std::ofstream os(png_path + ".json");
    os << side.dump(2) << "\n";
}

// Inverse of render_heatmap via the sidecar.
inline Map2 read_heatmap(const std::string& png_path) {
    PngImage png = read_png(png_path);
    std::ifstream is(png_path + ".json");
    if (!is) throw io_error("heatmap sidecar missing: " + png_path + ".json");
    nlohmann::json side = nlohmann::json::parse(is);
    float lo = side.at("min").get<float>();
    float hi = side.at("max").get<float>();
    Map2 out(png.height, png.width);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = lo + (hi - lo) * static_cast<float>(png.data[i]) / 255.0f;
    return out;
}

// UncertaintyReport on disk: two heatmaps plus a JSON summary. The ambiguity
// map is scaled by 4 (its binary-mask maximum 0.25 maps to 255).
inline void save_uncertainty(const UncertaintyReport& r,
                             const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::string coh = (fs::path(dir) / "coherence.png").string();
    std::string amb = (fs::path(dir) / "ambiguity.png").string();
    PngImage c;
    c.height = r.coherence.height;
    c.width = r.coherence.width;
    c.channels = 1;
    c.data.resize(r.coherence.size());
    for (size_t i = 0; i < c.data.size(); ++i)
        c.data[i] = static_cast<uint8_t>(
            std::lround(std::clamp(r.coherence.data[i], 0.0f, 1.0f) * 255.0f));
    write_png(coh, c);
    PngImage a = c;
    for (size_t i = 0; i < a.data.size(); ++i)
        a.data[i] = static_cast<uint8_t>(std::lround(
            std::clamp(r.ambiguity.data[i] * 4.0f, 0.0f, 1.0f) * 255.0f));
    write_png(amb, a);
    nlohmann::json j{{"n", r.n},
                     {"coherence_png", "coherence.png"},
                     {"ambiguity_png", "ambiguity.png"},
                     {"ambiguity_scale", 4.0}};
    if (r.ged)
        j["ged"] = *r.ged;
    else
        j["ged"] = nullptr;
    std::ofstream os(fs::path(dir) / "uncertainty.json");
    os << j.dump(2) << "\n";
}

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline void write_manifest(const std::string& dir, const std::string& command,
                           const nlohmann::json& inputs, uint64_t seed,
                           uint64_t config_hash,
                           const std::vector<std::string>& outputs) {
    nlohmann::json j{{"command", command},
                     {"inputs", inputs},
                     {"seed", seed},
                     {"config_hash", config_hash},
                     {"outputs", outputs}};
    std::ofstream os(std::filesystem::path(dir) / "manifest.json");
    os << j.dump(2) << "\n";
}

}  // namespace diffseg

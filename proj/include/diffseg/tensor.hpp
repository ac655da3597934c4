#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "diffseg/common.hpp"

namespace diffseg {

// Dense NCHW tensor, the substrate of the denoiser.
template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

    size_t size() const { return data.size(); }

    T& at(int in, int ic, int iy, int ix) {
        return data[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    T at(int in, int ic, int iy, int ix) const {
        return data[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }

    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data)
            if (!is_finite(v)) return false;
        return true;
    }

    template <typename U>
    Tensor4<U> cast() const {
        Tensor4<U> out(n, c, h, w);
        for (size_t i = 0; i < data.size(); ++i)
            out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

// H x W x C raster with values in [0,1]; channel-interleaved.
struct Image {
    int height = 0, width = 0, channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, 0.0f) {}

    float& at(int y, int x, int ch) {
        return data[(static_cast<size_t>(y) * width + x) * channels + ch];
    }
    float at(int y, int x, int ch) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + ch];
    }
    size_t pixels() const { return static_cast<size_t>(height) * width; }
};

// H x W scalar field (diff maps, coherence/ambiguity maps, soft masks).
struct Map2 {
    int height = 0, width = 0;
    std::vector<float> data;

    Map2() = default;
    Map2(int h, int w)
        : height(h), width(w), data(static_cast<size_t>(h) * w, 0.0f) {}

    float& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    float at(int y, int x) const {
        return data[static_cast<size_t>(y) * width + x];
    }
    size_t size() const { return data.size(); }
};

// Strictly binary H x W mask plus the threshold that produced it.
struct BinaryMask {
    int height = 0, width = 0;
    std::vector<uint8_t> data;
    float threshold = 0.0f;

    BinaryMask() = default;
    BinaryMask(int h, int w)
        : height(h), width(w), data(static_cast<size_t>(h) * w, 0) {}

    uint8_t& at(int y, int x) {
        return data[static_cast<size_t>(y) * width + x];
    }
    uint8_t at(int y, int x) const {
        return data[static_cast<size_t>(y) * width + x];
    }
    size_t size() const { return data.size(); }

    bool same_shape(const BinaryMask& o) const {
        return height == o.height && width == o.width;
    }
    size_t count_ones() const {
        return static_cast<size_t>(
            std::count(data.begin(), data.end(), uint8_t(1)));
    }
};

inline Tensor4<float> image_to_tensor(const Image& img) {
    Tensor4<float> t(1, img.channels, img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                t.at(0, c, y, x) = img.at(y, x, c);
    return t;
}

inline Image tensor_to_image(const Tensor4<float>& t, int batch_index = 0) {
    Image img(t.h, t.w, t.c);
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x)
            for (int c = 0; c < t.c; ++c)
                img.at(y, x, c) = t.at(batch_index, c, y, x);
    return img;
}

}  // namespace diffseg

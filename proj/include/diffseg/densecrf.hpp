#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "diffseg/common.hpp"
#include "diffseg/segment.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

// Two-label fully connected CRF.
constexpr int kCrfLabels = 2;  // 0 = background, 1 = lesion

struct CrfParams {
    double w1 = 3.0;           // appearance kernel weight
    double w2 = 1.0;           // smoothness kernel weight
    double theta_alpha = 30.0; // appearance spatial bandwidth, pixels
    double theta_beta = 10.0;  // appearance color bandwidth, 0-255 units
    double theta_gamma = 3.0;  // smoothness spatial bandwidth, pixels
    int iterations = 10;
    double tol = 1e-4;
    // Bilateral grid resolution: bandwidth measured in grid cells.
    double grid_sigma_cells = 1.0;

    void validate() const {
        require_config(w1 >= 0.0 && w2 >= 0.0, "crf: kernel weights must be >= 0");
        require_config(theta_alpha > 0.0 && theta_beta > 0.0 && theta_gamma > 0.0,
                       "crf: bandwidths must be > 0");
        require_config(iterations >= 1, "crf: iterations must be >= 1");
    }
};

// H x W x 2 negative log-probabilities.
struct UnaryField {
    int height = 0, width = 0;
    std::vector<double> psi;  // [y*w + x][label]

    UnaryField() = default;
    UnaryField(int h, int w)
        : height(h), width(w), psi(static_cast<size_t>(h) * w * kCrfLabels, 0.0) {}
    double& at(int y, int x, int l) {
        return psi[(static_cast<size_t>(y) * width + x) * kCrfLabels + l];
    }
    double at(int y, int x, int l) const {
        return psi[(static_cast<size_t>(y) * width + x) * kCrfLabels + l];
    }
    size_t pixels() const { return static_cast<size_t>(height) * width; }
};

// H x W x 2 label marginals; rows sum to 1.
struct MarginalField {
    int height = 0, width = 0;
    std::vector<double> q;

    MarginalField() = default;
    MarginalField(int h, int w)
        : height(h), width(w), q(static_cast<size_t>(h) * w * kCrfLabels, 0.0) {}
    double& at(int y, int x, int l) {
        return q[(static_cast<size_t>(y) * width + x) * kCrfLabels + l];
    }
    double at(int y, int x, int l) const {
        return q[(static_cast<size_t>(y) * width + x) * kCrfLabels + l];
    }
    size_t pixels() const { return static_cast<size_t>(height) * width; }
};

// P(lesion) = clamped min-max normalization of the diff map; psi = -log P.
inline UnaryField unary_from_diffmap(const DiffMap& d, double eps_clamp) {
    require(eps_clamp > 0.0 && eps_clamp < 0.5,
            "unary_from_diffmap: eps_clamp must be in (0, 0.5)");
    bool constant = false;
    Map2 p = minmax_normalize(d.values, &constant);
    UnaryField u(p.height, p.width);
    if (constant) {
        warn("unary_from_diffmap: constant diff map, uniform unary");
        double v = -std::log(0.5);
        for (auto& e : u.psi) e = v;
        return u;
    }
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
            double pl = std::min(1.0 - eps_clamp,
                                 std::max(eps_clamp,
                                          static_cast<double>(p.at(y, x))));
            u.at(y, x, 1) = -std::log(pl);
            u.at(y, x, 0) = -std::log(1.0 - pl);
        }
    return u;
}

// Label-compatibility: 1 when labels differ, 0 otherwise.
inline int potts(int xi, int xj) { return xi != xj ? 1 : 0; }

// k(i,j) = w1 * appearance + w2 * smoothness.
inline double pairwise_kernel(int yi, int xi, int yj, int xj,
                              const double* color_i, const double* color_j,
                              const CrfParams& p) {
    double dy = yi - yj, dx = xi - xj;
    double sp = dy * dy + dx * dx;
    double col = 0.0;
    for (int c = 0; c < 3; ++c) {
        double d = color_i[c] - color_j[c];
        col += d * d;
    }
    double appearance =
        std::exp(-sp / (2.0 * p.theta_alpha * p.theta_alpha) -
                 col / (2.0 * p.theta_beta * p.theta_beta));
    double smoothness = std::exp(-sp / (2.0 * p.theta_gamma * p.theta_gamma));
    return p.w1 * appearance + p.w2 * smoothness;
}

namespace crf_detail {

// Image colors on the 0-255 scale, replicated to 3 channels if grayscale.
inline std::vector<double> colors255(const Image& img) {
    std::vector<double> out(img.pixels() * 3);
    for (size_t i = 0; i < img.pixels(); ++i)
        for (int c = 0; c < 3; ++c) {
            int src = img.channels >= 3 ? c : 0;
            out[i * 3 + c] = 255.0 * img.data[i * img.channels + src];
        }
    return out;
}

inline MarginalField init_from_unary(const UnaryField& u) {
    MarginalField q(u.height, u.width);
    for (size_t i = 0; i < u.pixels(); ++i) {
        double a = -u.psi[i * 2 + 0];
        double b = -u.psi[i * 2 + 1];
        double m = std::max(a, b);
        double ea = std::exp(a - m), eb = std::exp(b - m);
        q.q[i * 2 + 0] = ea / (ea + eb);
        q.q[i * 2 + 1] = eb / (ea + eb);
    }
    return q;
}

inline double max_abs_diff(const MarginalField& a, const MarginalField& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.q.size(); ++i)
        m = std::max(m, std::abs(a.q[i] - b.q[i]));
    return m;
}

// Exact separable Gaussian transform over the pixel grid:
// out_i = sum_j exp(-|p_i - p_j|^2 / (2 sigma^2)) * in_j  (self included).
inline void spatial_gauss_transform(const std::vector<double>& in, int h,
                                    int w, int channels, double sigma,
                                    std::vector<double>& out) {
    int radius = static_cast<int>(std::ceil(5.5 * sigma));
    std::vector<double> kernel(radius + 1);
    for (int i = 0; i <= radius; ++i)
        kernel[i] = std::exp(-0.5 * i * i / (sigma * sigma));
    std::vector<double> tmp(in.size());
    // along x
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                double acc = 0.0;
                int lo = std::max(0, x - radius), hi = std::min(w - 1, x + radius);
                for (int sx = lo; sx <= hi; ++sx)
                    acc += kernel[std::abs(sx - x)] *
                           in[(static_cast<size_t>(y) * w + sx) * channels + c];
                tmp[(static_cast<size_t>(y) * w + x) * channels + c] = acc;
            }
    out.assign(in.size(), 0.0);
    // along y
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                double acc = 0.0;
                int lo = std::max(0, y - radius), hi = std::min(h - 1, y + radius);
                for (int sy = lo; sy <= hi; ++sy)
                    acc += kernel[std::abs(sy - y)] *
                           tmp[(static_cast<size_t>(sy) * w + x) * channels + c];
                out[(static_cast<size_t>(y) * w + x) * channels + c] = acc;
            }
}

// 5-D bilateral grid approximating
// out_i = sum_j exp(-|p|^2/2ta^2 - |I|^2/2tb^2) in_j  (self included).
class BilateralGrid {
   public:
    BilateralGrid(const std::vector<double>& colors, int h, int w,
                  double theta_alpha, double theta_beta, double sigma_cells) {
        require_config(sigma_cells >= 1.0,
                       "crf fast path: appearance bandwidth below one grid "
                       "cell; use the naive path");
        h_ = h;
        w_ = w;
        cell_sp_ = theta_alpha / sigma_cells;
        cell_col_ = theta_beta / sigma_cells;
        sigma_cells_ = sigma_cells;
        dims_[0] = static_cast<int>((w - 1) / cell_sp_) + 2;
        dims_[1] = static_cast<int>((h - 1) / cell_sp_) + 2;
        for (int c = 0; c < 3; ++c) dims_[2 + c] = static_cast<int>(255.0 / cell_col_) + 2;
        stride_[4] = 1;
        for (int d = 3; d >= 0; --d) stride_[d] = stride_[d + 1] * dims_[d + 1];
        cells_ = static_cast<size_t>(stride_[0]) * dims_[0];
        // fractional grid coordinates per pixel
        coords_.resize(static_cast<size_t>(h) * w * 5);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                size_t i = static_cast<size_t>(y) * w + x;
                coords_[i * 5 + 0] = x / cell_sp_;
                coords_[i * 5 + 1] = y / cell_sp_;
                for (int c = 0; c < 3; ++c)
                    coords_[i * 5 + 2 + c] = colors[i * 3 + c] / cell_col_;
            }
        // Per-pixel self-response of splat+blur+slice. Only blur offsets 0
        // and 1 reach a pixel's own corner pair, so it is separable:
        // prod_d [(1-f)^2 + f^2 + 2 f (1-f) k1].
        double k1 = std::exp(-0.5 / (blur_sigma() * blur_sigma()));
        size_t npix = static_cast<size_t>(h) * w;
        inv_root_self_.resize(npix);
        for (size_t i = 0; i < npix; ++i) {
            double self = 1.0;
            for (int d = 0; d < 5; ++d) {
                double c = coords_[i * 5 + d];
                double f = c - static_cast<int>(c);
                self *= (1.0 - f) * (1.0 - f) + f * f + 2.0 * f * (1.0 - f) * k1;
            }
            inv_root_self_[i] = 1.0 / std::sqrt(self);
        }
    }

    // Filters `channels` interleaved value channels at once. Inputs and
    // outputs are scaled by each pixel's inverse root self-response so the
    // effective kernel is exactly 1 at zero distance; without this the
    // multilinear splat/slice leaves a position-dependent amplitude error.
    void filter(const std::vector<double>& in, int channels,
                std::vector<double>& out) const {
        std::vector<double> grid(cells_ * channels, 0.0);
        size_t npix = static_cast<size_t>(h_) * w_;
        std::vector<double> scaled(static_cast<size_t>(channels));
        for (size_t i = 0; i < npix; ++i) {
            for (int c = 0; c < channels; ++c)
                scaled[c] = in[i * channels + c] * inv_root_self_[i];
            scatter(i, scaled.data(), channels, grid);
        }
        // blur along each of the 5 dimensions
        blur(grid, channels);
        // slice
        out.assign(npix * channels, 0.0);
        for (size_t i = 0; i < npix; ++i) {
            gather(i, grid, channels, out.data() + i * channels);
            for (int c = 0; c < channels; ++c)
                out[i * channels + c] *= inv_root_self_[i];
        }
    }

   private:
    void corner_setup(size_t pix, int* base, double* frac) const {
        for (int d = 0; d < 5; ++d) {
            double c = coords_[pix * 5 + d];
            base[d] = static_cast<int>(c);
            frac[d] = c - base[d];
        }
    }

    void scatter(size_t pix, const double* val, int channels,
                 std::vector<double>& grid) const {
        int base[5];
        double frac[5];
        corner_setup(pix, base, frac);
        for (int corner = 0; corner < 32; ++corner) {
            double wgt = 1.0;
            size_t off = 0;
            for (int d = 0; d < 5; ++d) {
                int bit = (corner >> d) & 1;
                wgt *= bit ? frac[d] : 1.0 - frac[d];
                off += static_cast<size_t>(base[d] + bit) * stride_[d];
            }
            if (wgt == 0.0) continue;
            for (int c = 0; c < channels; ++c)
                grid[off * channels + c] += wgt * val[c];
        }
    }

    void gather(size_t pix, const std::vector<double>& grid, int channels,
                double* val) const {
        int base[5];
        double frac[5];
        corner_setup(pix, base, frac);
        for (int corner = 0; corner < 32; ++corner) {
            double wgt = 1.0;
            size_t off = 0;
            for (int d = 0; d < 5; ++d) {
                int bit = (corner >> d) & 1;
                wgt *= bit ? frac[d] : 1.0 - frac[d];
                off += static_cast<size_t>(base[d] + bit) * stride_[d];
            }
            if (wgt == 0.0) continue;
            for (int c = 0; c < channels; ++c)
                val[c] += wgt * grid[off * channels + c];
        }
    }

    // Multilinear splat and slice each add cell^2/6 of variance; shave it
    // off the grid blur so the composite bandwidth stays near theta.
    double blur_sigma() const {
        double var = sigma_cells_ * sigma_cells_ - 1.0 / 3.0;
        return std::sqrt(std::max(var, 0.25));
    }

    void blur(std::vector<double>& grid, int channels) const {
        double sigma = blur_sigma();
        int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
        std::vector<double> kernel(radius + 1);
        for (int i = 0; i <= radius; ++i)
            kernel[i] = std::exp(-0.5 * i * i / (sigma * sigma));
        std::vector<double> tmp(grid.size());
        for (int d = 0; d < 5; ++d) {
            size_t nd = dims_[d];
            size_t stride = stride_[d];
            std::fill(tmp.begin(), tmp.end(), 0.0);
            // iterate over all cells; for each, accumulate along dimension d
            size_t outer = cells_ / (nd * stride);
            for (size_t o = 0; o < outer; ++o)
                for (size_t inner = 0; inner < stride; ++inner) {
                    size_t base = o * nd * stride + inner;
                    for (size_t i = 0; i < nd; ++i) {
                        size_t dst = base + i * stride;
                        int lo = static_cast<int>(i) - radius;
                        int hi = static_cast<int>(i) + radius;
                        lo = std::max(lo, 0);
                        hi = std::min(hi, static_cast<int>(nd) - 1);
                        for (int s = lo; s <= hi; ++s) {
                            double k = kernel[std::abs(s - static_cast<int>(i))];
                            size_t src = base + static_cast<size_t>(s) * stride;
                            for (int c = 0; c < channels; ++c)
                                tmp[dst * channels + c] +=
                                    k * grid[src * channels + c];
                        }
                    }
                }
            grid.swap(tmp);
        }
    }

    int h_ = 0, w_ = 0;
    double cell_sp_ = 0.0, cell_col_ = 0.0, sigma_cells_ = 1.0;
    int dims_[5] = {0, 0, 0, 0, 0};
    size_t stride_[5] = {0, 0, 0, 0, 0};
    size_t cells_ = 0;
    std::vector<double> coords_;
    std::vector<double> inv_root_self_;
};

// Shared update step: given the pairwise message m_i(l) = sum_{j != i}
// k(i,j) Q_j(l), apply the Potts-compatibility mean-field update.
inline void apply_update(const UnaryField& u, const std::vector<double>& msg,
                         MarginalField& q) {
    for (size_t i = 0; i < u.pixels(); ++i) {
        double logits[2];
        for (int l = 0; l < 2; ++l)
            logits[l] = -u.psi[i * 2 + l] - msg[i * 2 + (1 - l)];
        double m = std::max(logits[0], logits[1]);
        double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
        q.q[i * 2 + 0] = e0 / (e0 + e1);
        q.q[i * 2 + 1] = e1 / (e0 + e1);
    }
}

}  // namespace crf_detail

// Reference mean-field inference with explicit O(N^2) message passing.
// Oracle path: limited to images up to 64x64.
inline MarginalField mean_field_naive(const UnaryField& unary,
                                      const Image& image,
                                      const CrfParams& params) {
    params.validate();
    require(image.height == unary.height && image.width == unary.width,
            "mean_field_naive: image/unary shape mismatch");
    require(image.height <= 64 && image.width <= 64,
            "mean_field_naive: oracle path limited to 64x64 images");
    std::vector<double> colors = crf_detail::colors255(image);
    int h = unary.height, w = unary.width;
    size_t n = unary.pixels();
    MarginalField q = crf_detail::init_from_unary(unary);
    std::vector<double> msg(n * 2);
    for (int it = 0; it < params.iterations; ++it) {
        std::fill(msg.begin(), msg.end(), 0.0);
        for (size_t i = 0; i < n; ++i) {
            int yi = static_cast<int>(i) / w, xi = static_cast<int>(i) % w;
            for (size_t j = i + 1; j < n; ++j) {
                int yj = static_cast<int>(j) / w, xj = static_cast<int>(j) % w;
                double k = pairwise_kernel(yi, xi, yj, xj, &colors[i * 3],
                                           &colors[j * 3], params);
                for (int l = 0; l < 2; ++l) {
                    msg[i * 2 + l] += k * q.q[j * 2 + l];
                    msg[j * 2 + l] += k * q.q[i * 2 + l];
                }
            }
        }
        MarginalField q_new(h, w);
        crf_detail::apply_update(unary, msg, q_new);
        double delta = crf_detail::max_abs_diff(q, q_new);
        q = std::move(q_new);
        if (delta < params.tol) break;
    }
    return q;
}

// Accelerated mean field: smoothness messages by exact separable Gaussian
// convolution, appearance messages by a downsampled 5-D bilateral grid.
inline MarginalField mean_field_fast(const UnaryField& unary,
                                     const Image& image,
                                     const CrfParams& params) {
    params.validate();
    require(image.height == unary.height && image.width == unary.width,
            "mean_field_fast: image/unary shape mismatch");
    std::vector<double> colors = crf_detail::colors255(image);
    int h = unary.height, w = unary.width;
    size_t n = unary.pixels();
    crf_detail::BilateralGrid* grid = nullptr;
    std::unique_ptr<crf_detail::BilateralGrid> grid_holder;
    if (params.w1 > 0.0) {
        grid_holder = std::make_unique<crf_detail::BilateralGrid>(
            colors, h, w, params.theta_alpha, params.theta_beta,
            params.grid_sigma_cells);
        grid = grid_holder.get();
    }
    MarginalField q = crf_detail::init_from_unary(unary);
    std::vector<double> msg(n * 2), app(n * 2), smooth(n * 2);
    for (int it = 0; it < params.iterations; ++it) {
        crf_detail::spatial_gauss_transform(q.q, h, w, 2, params.theta_gamma,
                                            smooth);
        if (grid) grid->filter(q.q, 2, app);
        for (size_t i = 0; i < n * 2; ++i) {
            double a = grid ? params.w1 * (app[i] - q.q[i]) : 0.0;
            double s = params.w2 * (smooth[i] - q.q[i]);
            msg[i] = a + s;  // self term (k = 1 per kernel) removed
        }
        MarginalField q_new(h, w);
        crf_detail::apply_update(unary, msg, q_new);
        double delta = crf_detail::max_abs_diff(q, q_new);
        q = std::move(q_new);
        if (delta < params.tol) break;
    }
    return q;
}

// Exact energy of a hard labeling: sum psi_u + sum_{i<j} psi_p.
inline double energy(const BinaryMask& labeling, const UnaryField& unary,
                     const Image& image, const CrfParams& params) {
    require(labeling.height == unary.height && labeling.width == unary.width,
            "energy: labeling/unary shape mismatch");
    require(labeling.height <= 64 && labeling.width <= 64,
            "energy: exact evaluation limited to 64x64 images");
    std::vector<double> colors = crf_detail::colors255(image);
    int w = labeling.width;
    size_t n = labeling.size();
    double e = 0.0;
    for (size_t i = 0; i < n; ++i) e += unary.psi[i * 2 + labeling.data[i]];
    for (size_t i = 0; i < n; ++i) {
        int yi = static_cast<int>(i) / w, xi = static_cast<int>(i) % w;
        for (size_t j = i + 1; j < n; ++j) {
            if (labeling.data[i] == labeling.data[j]) continue;  // mu = 0
            int yj = static_cast<int>(j) / w, xj = static_cast<int>(j) % w;
            e += pairwise_kernel(yi, xi, yj, xj, &colors[i * 3], &colors[j * 3],
                                 params);
        }
    }
    return e;
}

inline BinaryMask argmax_labeling(const MarginalField& q) {
    BinaryMask m(q.height, q.width);
    for (size_t i = 0; i < q.pixels(); ++i)
        m.data[i] = q.q[i * 2 + 1] >= q.q[i * 2 + 0] ? 1 : 0;
    return m;
}

inline Map2 lesion_marginal(const MarginalField& q) {
    Map2 m(q.height, q.width);
    for (size_t i = 0; i < q.pixels(); ++i)
        m.data[i] = static_cast<float>(q.q[i * 2 + 1]);
    return m;
}

}  // namespace diffseg

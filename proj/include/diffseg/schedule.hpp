#pragma once

#include <cmath>
#include <vector>

#include "diffseg/common.hpp"
#include "diffseg/rng.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

// Forward-noising schedule: beta_t in (0,1) with cumulative products
// alphabar_t = prod_{i<=t} (1 - beta_i). Index t is 1-based.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;      // betas[t-1] = beta_t
    std::vector<double> alphabars;  // alphabars[t-1] = alphabar_t

    double beta(int t) const { return betas[t - 1]; }
    double alphabar(int t) const { return alphabars[t - 1]; }
};

inline NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
    require_config(T >= 1, "schedule: T must be >= 1");
    require_config(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
                   "schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(T);
    s.alphabars.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        double frac = T == 1 ? 0.0 : static_cast<double>(t) / (T - 1);
        s.betas[t] = beta_start + (beta_end - beta_start) * frac;
        prod *= 1.0 - s.betas[t];
        s.alphabars[t] = prod;
    }
    return s;
}

// x_t = sqrt(alphabar_t) * x0 + sqrt(1 - alphabar_t) * eps, elementwise.
template <typename T>
Tensor4<T> forward_noise(const Tensor4<T>& x0, int t, const NoiseSchedule& s,
                         const Tensor4<T>& eps) {
    require(t >= 1 && t <= s.T, "forward_noise: t out of schedule range");
    require(x0.same_shape(eps), "forward_noise: eps shape must match x0");
    double ab = s.alphabar(t);
    T a = static_cast<T>(std::sqrt(ab));
    T b = static_cast<T>(std::sqrt(1.0 - ab));
    Tensor4<T> out(x0.n, x0.c, x0.h, x0.w);
    for (size_t i = 0; i < x0.data.size(); ++i)
        out.data[i] = a * x0.data[i] + b * eps.data[i];
    return out;
}

template <typename T>
Tensor4<T> sample_gaussian_like(const Tensor4<T>& x, RngStream& rng) {
    Tensor4<T> eps(x.n, x.c, x.h, x.w);
    for (auto& v : eps.data) v = static_cast<T>(rng.normal());
    return eps;
}

}  // namespace diffseg

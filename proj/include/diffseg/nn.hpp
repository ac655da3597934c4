#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "diffseg/common.hpp"
#include "diffseg/rng.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

enum class ClassLabel : int { c0_healthy = 0, c1_unhealthy = 1 };

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One named parameter array with its gradient; "kind" groups blocks by layer
// type for the gradient-check report.
template <typename T>
struct ParamBlock {
    std::string name;
    std::string kind;  // "conv" | "linear" | "embedding"
    std::vector<T>* value;
    std::vector<T>* grad;
};

namespace nn {

template <typename T>
void fan_in_uniform(std::vector<T>& w, int fan_in, RngStream& rng) {
    double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
    for (auto& v : w) v = static_cast<T>(rng.uniform(-limit, limit));
}

// 3x3 (pad 1) or 1x1 convolution, stride 1. GEMM over an im2col buffer;
// the buffer is rebuilt in backward from the cached input.
template <typename T>
struct Conv2d {
    int in_ch = 0, out_ch = 0, k = 3, pad = 1;
    std::vector<T> w, b, gw, gb;  // w: [out_ch][in_ch*k*k]
    Tensor4<T> x_cache;

    void configure(int in_c, int out_c, int kernel) {
        in_ch = in_c;
        out_ch = out_c;
        k = kernel;
        pad = kernel / 2;
        w.assign(static_cast<size_t>(out_ch) * in_ch * k * k, T(0));
        b.assign(out_ch, T(0));
        gw.assign(w.size(), T(0));
        gb.assign(b.size(), T(0));
    }

    void init(RngStream& rng, bool zero = false) {
        if (zero) {
            std::fill(w.begin(), w.end(), T(0));
        } else {
            fan_in_uniform(w, in_ch * k * k, rng);
        }
        std::fill(b.begin(), b.end(), T(0));
    }

    void im2col(const Tensor4<T>& x, int sample, std::vector<T>& col) const {
        int h = x.h, wd = x.w;
        int patch = in_ch * k * k;
        col.assign(static_cast<size_t>(patch) * h * wd, T(0));
        for (int ic = 0; ic < in_ch; ++ic)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    size_t row =
                        (static_cast<size_t>(ic) * k + ky) * k + kx;
                    T* dst = col.data() + row * h * wd;
                    for (int y = 0; y < h; ++y) {
                        int sy = y + ky - pad;
                        if (sy < 0 || sy >= h) continue;
                        for (int x2 = 0; x2 < wd; ++x2) {
                            int sx = x2 + kx - pad;
                            if (sx < 0 || sx >= wd) continue;
                            dst[y * wd + x2] = x.at(sample, ic, sy, sx);
                        }
                    }
                }
    }

    Tensor4<T> forward(const Tensor4<T>& x, bool cache = true) {
        require(x.c == in_ch, "conv: channel mismatch");
        if (cache) x_cache = x;
        Tensor4<T> y(x.n, out_ch, x.h, x.w);
        int hw = x.h * x.w;
        int patch = in_ch * k * k;
        std::vector<T> col;
        Eigen::Map<const RowMat<T>> W(w.data(), out_ch, patch);
        for (int s = 0; s < x.n; ++s) {
            im2col(x, s, col);
            Eigen::Map<const RowMat<T>> C(col.data(), patch, hw);
            Eigen::Map<RowMat<T>> Y(
                y.data.data() + static_cast<size_t>(s) * out_ch * hw, out_ch,
                hw);
            Y.noalias() = W * C;
            for (int oc = 0; oc < out_ch; ++oc)
                Y.row(oc).array() += b[oc];
        }
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& dy) {
        const Tensor4<T>& x = x_cache;
        Tensor4<T> dx(x.n, in_ch, x.h, x.w);
        int hw = x.h * x.w;
        int patch = in_ch * k * k;
        std::vector<T> col, dcol(static_cast<size_t>(patch) * hw);
        Eigen::Map<const RowMat<T>> W(w.data(), out_ch, patch);
        Eigen::Map<RowMat<T>> GW(gw.data(), out_ch, patch);
        for (int s = 0; s < x.n; ++s) {
            im2col(x, s, col);
            Eigen::Map<const RowMat<T>> C(col.data(), patch, hw);
            Eigen::Map<const RowMat<T>> DY(
                dy.data.data() + static_cast<size_t>(s) * out_ch * hw, out_ch,
                hw);
            GW.noalias() += DY * C.transpose();
            for (int oc = 0; oc < out_ch; ++oc) gb[oc] += DY.row(oc).sum();
            Eigen::Map<RowMat<T>> DC(dcol.data(), patch, hw);
            DC.noalias() = W.transpose() * DY;
            // col2im accumulate
            for (int ic = 0; ic < in_ch; ++ic)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        size_t row =
                            (static_cast<size_t>(ic) * k + ky) * k + kx;
                        const T* src = dcol.data() + row * hw;
                        for (int y = 0; y < x.h; ++y) {
                            int sy = y + ky - pad;
                            if (sy < 0 || sy >= x.h) continue;
                            for (int x2 = 0; x2 < x.w; ++x2) {
                                int sx = x2 + kx - pad;
                                if (sx < 0 || sx >= x.w) continue;
                                dx.at(s, ic, sy, sx) += src[y * x.w + x2];
                            }
                        }
                    }
        }
        return dx;
    }
};

// Fully-connected layer on row-major [rows x in] matrices.
template <typename T>
struct Linear {
    int in = 0, out = 0;
    std::vector<T> w, b, gw, gb;  // w: [out][in]
    std::vector<T> x_cache;
    int rows_cache = 0;

    void configure(int in_c, int out_c) {
        in = in_c;
        out = out_c;
        w.assign(static_cast<size_t>(out) * in, T(0));
        b.assign(out, T(0));
        gw.assign(w.size(), T(0));
        gb.assign(b.size(), T(0));
    }

    void init(RngStream& rng) {
        fan_in_uniform(w, in, rng);
        std::fill(b.begin(), b.end(), T(0));
    }

    std::vector<T> forward(const std::vector<T>& x, int rows,
                           bool cache = true) {
        if (cache) {
            x_cache = x;
            rows_cache = rows;
        }
        std::vector<T> y(static_cast<size_t>(rows) * out);
        Eigen::Map<const RowMat<T>> X(x.data(), rows, in);
        Eigen::Map<const RowMat<T>> W(w.data(), out, in);
        Eigen::Map<RowMat<T>> Y(y.data(), rows, out);
        Y.noalias() = X * W.transpose();
        for (int r = 0; r < rows; ++r)
            for (int o = 0; o < out; ++o) y[static_cast<size_t>(r) * out + o] += b[o];
        return y;
    }

    std::vector<T> backward(const std::vector<T>& dy) {
        int rows = rows_cache;
        std::vector<T> dx(static_cast<size_t>(rows) * in);
        Eigen::Map<const RowMat<T>> X(x_cache.data(), rows, in);
        Eigen::Map<const RowMat<T>> DY(dy.data(), rows, out);
        Eigen::Map<const RowMat<T>> W(w.data(), out, in);
        Eigen::Map<RowMat<T>> GW(gw.data(), out, in);
        Eigen::Map<RowMat<T>> DX(dx.data(), rows, in);
        GW.noalias() += DY.transpose() * X;
        for (int o = 0; o < out; ++o) gb[o] += DY.col(o).sum();
        DX.noalias() = DY * W;
        return dx;
    }
};

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

// x * sigmoid(x)
template <typename T>
struct SiLU {
    Tensor4<T> x_cache;

    Tensor4<T> forward(const Tensor4<T>& x, bool cache = true) {
        if (cache) x_cache = x;
        Tensor4<T> y = x;
        for (auto& v : y.data) v = v * sigmoid(v);
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& dy) {
        Tensor4<T> dx = dy;
        for (size_t i = 0; i < dx.data.size(); ++i) {
            T x = x_cache.data[i];
            T s = sigmoid(x);
            dx.data[i] *= s * (T(1) + x * (T(1) - s));
        }
        return dx;
    }
};

template <typename T>
Tensor4<T> avgpool2_forward(const Tensor4<T>& x) {
    Tensor4<T> y(x.n, x.c, x.h / 2, x.w / 2);
    for (int s = 0; s < x.n; ++s)
        for (int c = 0; c < x.c; ++c)
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx)
                    y.at(s, c, yy, xx) =
                        (x.at(s, c, 2 * yy, 2 * xx) +
                         x.at(s, c, 2 * yy, 2 * xx + 1) +
                         x.at(s, c, 2 * yy + 1, 2 * xx) +
                         x.at(s, c, 2 * yy + 1, 2 * xx + 1)) *
                        T(0.25);
    return y;
}

template <typename T>
Tensor4<T> avgpool2_backward(const Tensor4<T>& dy) {
    Tensor4<T> dx(dy.n, dy.c, dy.h * 2, dy.w * 2);
    for (int s = 0; s < dy.n; ++s)
        for (int c = 0; c < dy.c; ++c)
            for (int yy = 0; yy < dy.h; ++yy)
                for (int xx = 0; xx < dy.w; ++xx) {
                    T g = dy.at(s, c, yy, xx) * T(0.25);
                    dx.at(s, c, 2 * yy, 2 * xx) = g;
                    dx.at(s, c, 2 * yy, 2 * xx + 1) = g;
                    dx.at(s, c, 2 * yy + 1, 2 * xx) = g;
                    dx.at(s, c, 2 * yy + 1, 2 * xx + 1) = g;
                }
    return dx;
}

template <typename T>
Tensor4<T> upnearest2_forward(const Tensor4<T>& x) {
    Tensor4<T> y(x.n, x.c, x.h * 2, x.w * 2);
    for (int s = 0; s < x.n; ++s)
        for (int c = 0; c < x.c; ++c)
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx)
                    y.at(s, c, yy, xx) = x.at(s, c, yy / 2, xx / 2);
    return y;
}

template <typename T>
Tensor4<T> upnearest2_backward(const Tensor4<T>& dy) {
    Tensor4<T> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
    for (int s = 0; s < dy.n; ++s)
        for (int c = 0; c < dy.c; ++c)
            for (int yy = 0; yy < dy.h; ++yy)
                for (int xx = 0; xx < dy.w; ++xx)
                    dx.at(s, c, yy / 2, xx / 2) += dy.at(s, c, yy, xx);
    return dx;
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
    Tensor4<T> y(a.n, a.c + b.c, a.h, a.w);
    for (int s = 0; s < a.n; ++s) {
        for (int c = 0; c < a.c; ++c)
            for (int yy = 0; yy < a.h; ++yy)
                for (int xx = 0; xx < a.w; ++xx)
                    y.at(s, c, yy, xx) = a.at(s, c, yy, xx);
        for (int c = 0; c < b.c; ++c)
            for (int yy = 0; yy < a.h; ++yy)
                for (int xx = 0; xx < a.w; ++xx)
                    y.at(s, a.c + c, yy, xx) = b.at(s, c, yy, xx);
    }
    return y;
}

template <typename T>
void split_channels(const Tensor4<T>& dy, int ca, Tensor4<T>& da,
                    Tensor4<T>& db) {
    da = Tensor4<T>(dy.n, ca, dy.h, dy.w);
    db = Tensor4<T>(dy.n, dy.c - ca, dy.h, dy.w);
    for (int s = 0; s < dy.n; ++s) {
        for (int c = 0; c < ca; ++c)
            for (int yy = 0; yy < dy.h; ++yy)
                for (int xx = 0; xx < dy.w; ++xx)
                    da.at(s, c, yy, xx) = dy.at(s, c, yy, xx);
        for (int c = ca; c < dy.c; ++c)
            for (int yy = 0; yy < dy.h; ++yy)
                for (int xx = 0; xx < dy.w; ++xx)
                    db.at(s, c - ca, yy, xx) = dy.at(s, c, yy, xx);
    }
}

}  // namespace nn

// Architecture descriptor; the parameter count is a pure function of it.
struct NetDescriptor {
    int in_channels = 3;
    std::vector<int> channels = {32, 64, 128};  // per level, coarse last
    int emb_width = 64;

    int levels() const { return static_cast<int>(channels.size()); }
    bool operator==(const NetDescriptor& o) const {
        return in_channels == o.in_channels && channels == o.channels &&
               emb_width == o.emb_width;
    }
};

// Conditional U-Net noise predictor eps_hat = net(x_t, c, alphabar).
//
// Conditioning: sinusoidal features of alphabar plus a learned two-row class
// embedding, pushed through a small MLP and injected as a per-channel bias
// after the second conv of every encoder and decoder level.
template <typename T>
class DenoiserNet {
   public:
    DenoiserNet() { build(NetDescriptor{}); }
    explicit DenoiserNet(const NetDescriptor& d) { build(d); }

    const NetDescriptor& descriptor() const { return desc_; }

    void init(uint64_t seed) {
        RngStream rng(seed);
        for (auto& v : class_embed_) v = static_cast<T>(rng.uniform(-0.1, 0.1));
        mlp1_.init(rng);
        mlp2_.init(rng);
        for (int i = 0; i < desc_.levels(); ++i) {
            enc_a_[i].init(rng);
            enc_b_[i].init(rng);
            emb_enc_[i].init(rng);
        }
        for (int i = 0; i < desc_.levels() - 1; ++i) {
            up_[i].init(rng);
            dec_c_[i].init(rng);
            emb_dec_[i].init(rng);
            dec_d_[i].init(rng);
        }
        // Zero-initialized output conv: the untrained net predicts zero.
        out_.init(rng, /*zero=*/true);
    }

    std::vector<ParamBlock<T>> blocks() {
        std::vector<ParamBlock<T>> out;
        auto add = [&](const std::string& name, const std::string& kind,
                       std::vector<T>& v, std::vector<T>& g) {
            out.push_back({name, kind, &v, &g});
        };
        add("class_embed", "embedding", class_embed_, class_embed_g_);
        add("mlp1.w", "linear", mlp1_.w, mlp1_.gw);
        add("mlp1.b", "linear", mlp1_.b, mlp1_.gb);
        add("mlp2.w", "linear", mlp2_.w, mlp2_.gw);
        add("mlp2.b", "linear", mlp2_.b, mlp2_.gb);
        for (int i = 0; i < desc_.levels(); ++i) {
            std::string p = "enc" + std::to_string(i);
            add(p + ".a.w", "conv", enc_a_[i].w, enc_a_[i].gw);
            add(p + ".a.b", "conv", enc_a_[i].b, enc_a_[i].gb);
            add(p + ".b.w", "conv", enc_b_[i].w, enc_b_[i].gw);
            add(p + ".b.b", "conv", enc_b_[i].b, enc_b_[i].gb);
            add(p + ".emb.w", "linear", emb_enc_[i].w, emb_enc_[i].gw);
            add(p + ".emb.b", "linear", emb_enc_[i].b, emb_enc_[i].gb);
        }
        for (int i = 0; i < desc_.levels() - 1; ++i) {
            std::string p = "dec" + std::to_string(i);
            add(p + ".up.w", "conv", up_[i].w, up_[i].gw);
            add(p + ".up.b", "conv", up_[i].b, up_[i].gb);
            add(p + ".c.w", "conv", dec_c_[i].w, dec_c_[i].gw);
            add(p + ".c.b", "conv", dec_c_[i].b, dec_c_[i].gb);
            add(p + ".emb.w", "linear", emb_dec_[i].w, emb_dec_[i].gw);
            add(p + ".emb.b", "linear", emb_dec_[i].b, emb_dec_[i].gb);
            add(p + ".d.w", "conv", dec_d_[i].w, dec_d_[i].gw);
            add(p + ".d.b", "conv", dec_d_[i].b, dec_d_[i].gb);
        }
        add("out.w", "conv", out_.w, out_.gw);
        add("out.b", "conv", out_.b, out_.gb);
        return out;
    }

    size_t param_count() {
        size_t n = 0;
        for (auto& b : blocks()) n += b.value->size();
        return n;
    }

    void zero_grad() {
        for (auto& b : blocks())
            std::fill(b.grad->begin(), b.grad->end(), T(0));
    }

    // alphabar and cls are per-sample. Shapes: x is [n, in_channels, h, w]
    // with h, w divisible by 2^(levels-1).
    Tensor4<T> forward(const Tensor4<T>& x, const std::vector<double>& alphabar,
                       const std::vector<int>& cls, bool cache = true) {
        require(x.c == desc_.in_channels, "net: input channel mismatch");
        require(static_cast<int>(alphabar.size()) == x.n &&
                    static_cast<int>(cls.size()) == x.n,
                "net: conditioning length mismatch");
        int div = 1 << (desc_.levels() - 1);
        require(x.h % div == 0 && x.w % div == 0,
                "net: spatial size not divisible by 2^(levels-1)");
        require(x.all_finite(), "net: non-finite input");
        for (double a : alphabar)
            require(a > 0.0 && a <= 1.0, "net: alphabar must be in (0,1]");

        int n = x.n;
        int E = desc_.emb_width;
        // Embedding path.
        std::vector<T> e0(static_cast<size_t>(n) * E);
        for (int s = 0; s < n; ++s) {
            sinusoidal(alphabar[s], e0.data() + static_cast<size_t>(s) * E);
            const T* row = class_embed_.data() + static_cast<size_t>(cls[s]) * E;
            for (int j = 0; j < E; ++j)
                e0[static_cast<size_t>(s) * E + j] += row[j];
        }
        if (cache) {
            cls_cache_ = cls;
            e0_rows_ = n;
        }
        std::vector<T> e1 = mlp1_.forward(e0, n, cache);
        silu_vec(e1, cache ? &e1_pre_ : nullptr);
        emb_ = mlp2_.forward(e1, n, cache);

        // Encoder.
        Tensor4<T> cur = x;
        skips_.clear();
        for (int i = 0; i < desc_.levels(); ++i) {
            cur = act_enc_a_[i].forward(enc_a_[i].forward(cur, cache), cache);
            cur = enc_b_[i].forward(cur, cache);
            add_channel_bias(cur, emb_enc_[i], cache);
            cur = act_enc_b_[i].forward(cur, cache);
            if (i < desc_.levels() - 1) {
                skips_.push_back(cur);
                cur = nn::avgpool2_forward(cur);
            }
        }
        // Decoder.
        for (int i = desc_.levels() - 2; i >= 0; --i) {
            cur = nn::upnearest2_forward(cur);
            cur = act_up_[i].forward(up_[i].forward(cur, cache), cache);
            cur = nn::concat_channels(cur, skips_[i]);
            cur = dec_c_[i].forward(cur, cache);
            add_channel_bias(cur, emb_dec_[i], cache);
            cur = act_dec_c_[i].forward(cur, cache);
            cur = act_dec_d_[i].forward(dec_d_[i].forward(cur, cache), cache);
        }
        Tensor4<T> y = out_.forward(cur, cache);
        require(y.all_finite(), "net: non-finite output");
        return y;
    }

    // Accumulates parameter gradients for the most recent cached forward.
    void backward(const Tensor4<T>& dy) {
        int L = desc_.levels();
        int n = dy.n;
        int E = desc_.emb_width;
        std::vector<T> demb(static_cast<size_t>(n) * E, T(0));

        Tensor4<T> d = out_.backward(dy);
        for (int i = 0; i < L - 1; ++i) {
            d = dec_d_[i].backward(act_dec_d_[i].backward(d));
            d = act_dec_c_[i].backward(d);
            channel_bias_backward(d, emb_dec_[i], demb);
            d = dec_c_[i].backward(d);
            Tensor4<T> d_up, d_skip;
            nn::split_channels(d, desc_.channels[i], d_up, d_skip);
            dskip_pending_[i] = d_skip;
            d = nn::upnearest2_backward(
                up_[i].backward(act_up_[i].backward(d_up)));
        }
        for (int i = L - 1; i >= 0; --i) {
            if (i < L - 1) {
                Tensor4<T> d2 = nn::avgpool2_backward(d);
                for (size_t j = 0; j < d2.data.size(); ++j)
                    d2.data[j] += dskip_pending_[i].data[j];
                d = d2;
            }
            d = act_enc_b_[i].backward(d);
            channel_bias_backward(d, emb_enc_[i], demb);
            d = enc_b_[i].backward(d);
            d = enc_a_[i].backward(act_enc_a_[i].backward(d));
        }
        // Embedding path backward.
        std::vector<T> de1 = mlp2_.backward(demb);
        silu_vec_backward(de1, e1_pre_);
        std::vector<T> de0 = mlp1_.backward(de1);
        for (int s = 0; s < n; ++s) {
            T* row = class_embed_g_.data() +
                     static_cast<size_t>(cls_cache_[s]) * E;
            for (int j = 0; j < E; ++j)
                row[j] += de0[static_cast<size_t>(s) * E + j];
        }
    }

    void save(std::ostream& os) const {
        write_u32(os, static_cast<uint32_t>(desc_.in_channels));
        write_u32(os, static_cast<uint32_t>(desc_.levels()));
        for (int c : desc_.channels) write_u32(os, static_cast<uint32_t>(c));
        write_u32(os, static_cast<uint32_t>(desc_.emb_width));
        for (auto& b : const_cast<DenoiserNet*>(this)->blocks())
            for (T v : *b.value) write_f32(os, static_cast<float>(v));
    }

    static DenoiserNet load(std::istream& is) {
        NetDescriptor d;
        d.in_channels = static_cast<int>(read_u32(is));
        uint32_t levels = read_u32(is);
        d.channels.clear();
        for (uint32_t i = 0; i < levels; ++i)
            d.channels.push_back(static_cast<int>(read_u32(is)));
        d.emb_width = static_cast<int>(read_u32(is));
        DenoiserNet net(d);
        for (auto& b : net.blocks())
            for (auto& v : *b.value) v = static_cast<T>(read_f32(is));
        if (!is) throw model_error("model file truncated");
        return net;
    }

    static void write_u32(std::ostream& os, uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        os.write(reinterpret_cast<char*>(b), 4);
    }
    static uint32_t read_u32(std::istream& is) {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) |
               (static_cast<uint32_t>(b[3]) << 24);
    }
    static void write_f32(std::ostream& os, float v) {
        uint32_t u;
        std::memcpy(&u, &v, 4);
        write_u32(os, u);
    }
    static float read_f32(std::istream& is) {
        uint32_t u = read_u32(is);
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }

   private:
    void build(const NetDescriptor& d) {
        require_config(d.levels() >= 1, "net: need at least one level");
        require_config(d.emb_width >= 2 && d.emb_width % 2 == 0,
                       "net: emb_width must be even and >= 2");
        desc_ = d;
        int L = d.levels();
        int E = d.emb_width;
        class_embed_.assign(2 * static_cast<size_t>(E), T(0));
        class_embed_g_.assign(class_embed_.size(), T(0));
        mlp1_.configure(E, E);
        mlp2_.configure(E, E);
        enc_a_.resize(L);
        enc_b_.resize(L);
        emb_enc_.resize(L);
        act_enc_a_.resize(L);
        act_enc_b_.resize(L);
        up_.resize(L - 1);
        dec_c_.resize(L - 1);
        dec_d_.resize(L - 1);
        emb_dec_.resize(L - 1);
        act_up_.resize(L - 1);
        act_dec_c_.resize(L - 1);
        act_dec_d_.resize(L - 1);
        dskip_pending_.resize(L - 1);
        int prev = d.in_channels;
        for (int i = 0; i < L; ++i) {
            enc_a_[i].configure(prev, d.channels[i], 3);
            enc_b_[i].configure(d.channels[i], d.channels[i], 3);
            emb_enc_[i].configure(E, d.channels[i]);
            prev = d.channels[i];
        }
        for (int i = 0; i < L - 1; ++i) {
            up_[i].configure(d.channels[i + 1], d.channels[i], 3);
            dec_c_[i].configure(2 * d.channels[i], d.channels[i], 3);
            dec_d_[i].configure(d.channels[i], d.channels[i], 3);
            emb_dec_[i].configure(E, d.channels[i]);
        }
        out_.configure(d.channels[0], d.in_channels, 1);
    }

    void sinusoidal(double alphabar, T* dst) const {
        int half = desc_.emb_width / 2;
        for (int k = 0; k < half; ++k) {
            double f = std::exp(static_cast<double>(k) /
                                std::max(1, half - 1) * std::log(1000.0));
            dst[k] = static_cast<T>(std::sin(alphabar * f));
            dst[half + k] = static_cast<T>(std::cos(alphabar * f));
        }
    }

    void silu_vec(std::vector<T>& v, std::vector<T>* pre) {
        if (pre) *pre = v;
        for (auto& x : v) x = x * nn::sigmoid(x);
    }
    static void silu_vec_backward(std::vector<T>& dv,
                                  const std::vector<T>& pre) {
        for (size_t i = 0; i < dv.size(); ++i) {
            T x = pre[i];
            T s = nn::sigmoid(x);
            dv[i] *= s * (T(1) + x * (T(1) - s));
        }
    }

    // y[s,c,:,:] += proj(emb_row_s)[c]
    void add_channel_bias(Tensor4<T>& y, nn::Linear<T>& proj, bool cache) {
        std::vector<T> bias = proj.forward(emb_, y.n, cache);
        int hw = y.h * y.w;
        for (int s = 0; s < y.n; ++s)
            for (int c = 0; c < y.c; ++c) {
                T bv = bias[static_cast<size_t>(s) * y.c + c];
                T* p = y.data.data() +
                       (static_cast<size_t>(s) * y.c + c) * hw;
                for (int i = 0; i < hw; ++i) p[i] += bv;
            }
    }

    void channel_bias_backward(const Tensor4<T>& dy, nn::Linear<T>& proj,
                               std::vector<T>& demb) {
        std::vector<T> dbias(static_cast<size_t>(dy.n) * dy.c, T(0));
        int hw = dy.h * dy.w;
        for (int s = 0; s < dy.n; ++s)
            for (int c = 0; c < dy.c; ++c) {
                const T* p = dy.data.data() +
                             (static_cast<size_t>(s) * dy.c + c) * hw;
                T acc = T(0);
                for (int i = 0; i < hw; ++i) acc += p[i];
                dbias[static_cast<size_t>(s) * dy.c + c] = acc;
            }
        std::vector<T> de = proj.backward(dbias);
        for (size_t i = 0; i < demb.size(); ++i) demb[i] += de[i];
    }

    NetDescriptor desc_;
    std::vector<T> class_embed_, class_embed_g_;
    nn::Linear<T> mlp1_, mlp2_;
    std::vector<nn::Conv2d<T>> enc_a_, enc_b_, up_, dec_c_, dec_d_;
    std::vector<nn::Linear<T>> emb_enc_, emb_dec_;
    nn::Conv2d<T> out_;
    std::vector<nn::SiLU<T>> act_enc_a_, act_enc_b_, act_up_, act_dec_c_,
        act_dec_d_;

    // forward caches
    std::vector<Tensor4<T>> skips_, dskip_pending_;
    std::vector<T> emb_, e1_pre_;
    std::vector<int> cls_cache_;
    int e0_rows_ = 0;
};

// Adam with bias correction; moments are shape-congruent with parameters.
template <typename T>
struct OptimizerState {
    double lr = 5e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t step = 0;
    std::vector<std::vector<T>> m, v;

    template <typename Net>
    void attach(Net& net) {
        auto bs = net.blocks();
        m.clear();
        v.clear();
        for (auto& b : bs) {
            m.emplace_back(b.value->size(), T(0));
            v.emplace_back(b.value->size(), T(0));
        }
    }
};

template <typename T, typename Net>
void adam_step(Net& net, OptimizerState<T>& state) {
    auto bs = net.blocks();
    require(bs.size() == state.m.size(), "adam: optimizer not attached");
    for (auto& b : bs)
        for (T g : *b.grad)
            if (!is_finite(g))
                throw train_error("adam: non-finite gradient in block " +
                                  b.name);
    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < bs.size(); ++i) {
        auto& p = *bs[i].value;
        auto& g = *bs[i].grad;
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (size_t j = 0; j < p.size(); ++j) {
            double gj = static_cast<double>(g[j]);
            double mj = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
            double vj = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            double mhat = mj / bc1;
            double vhat = vj / bc2;
            p[j] = static_cast<T>(p[j] -
                                  state.lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

}  // namespace diffseg

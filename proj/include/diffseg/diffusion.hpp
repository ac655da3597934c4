#pragma once

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "diffseg/common.hpp"
#include "diffseg/nn.hpp"
#include "diffseg/rng.hpp"
#include "diffseg/schedule.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

enum class ConditioningMode : int { embedding = 0, dual_model = 1 };
enum class LossNorm : int { l2 = 0, l1 = 1 };

struct TrainConfig {
    int image_size = 64;
    int batch_size = 8;
    int epochs = 30;
    double learning_rate = 5e-4;
    int T = 150;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    ConditioningMode mode = ConditioningMode::embedding;
    LossNorm loss = LossNorm::l2;
    uint64_t seed = 0;
    NetDescriptor net;

    void validate() const {
        require_config(image_size > 0 && batch_size > 0 && epochs >= 0 &&
                           learning_rate > 0 && T >= 1,
                       "train config: sizes and rates must be positive");
    }
};

// Either a single class-conditioned net or one net per class.
struct ConditionalModel {
    ConditioningMode mode = ConditioningMode::embedding;
    std::vector<DenoiserNet<float>> nets;  // 1 (embedding) or 2 (dual)

    static constexpr char kMagic[4] = {'D', 'S', 'E', 'G'};
    static constexpr uint32_t kVersion = 1;

    DenoiserNet<float>& net_for(ClassLabel c) {
        if (mode == ConditioningMode::embedding) return nets[0];
        return nets[static_cast<int>(c)];
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw io_error("cannot write model file: " + path);
        os.write(kMagic, 4);
        DenoiserNet<float>::write_u32(os, kVersion);
        DenoiserNet<float>::write_u32(os, static_cast<uint32_t>(mode));
        DenoiserNet<float>::write_u32(os, static_cast<uint32_t>(nets.size()));
        for (const auto& n : nets) n.save(os);
    }

    static ConditionalModel load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw model_error("model not found: " + path);
        char magic[4];
        is.read(magic, 4);
        if (!is || std::memcmp(magic, kMagic, 4) != 0)
            throw model_error("bad model magic in " + path);
        uint32_t version = DenoiserNet<float>::read_u32(is);
        if (version != kVersion)
            throw model_error("unsupported model version in " + path);
        ConditionalModel m;
        m.mode = static_cast<ConditioningMode>(
            DenoiserNet<float>::read_u32(is));
        uint32_t count = DenoiserNet<float>::read_u32(is);
        for (uint32_t i = 0; i < count; ++i)
            m.nets.push_back(DenoiserNet<float>::load(is));
        return m;
    }
};

// eps_hat for image x_t under class condition c at step t.
inline Tensor4<float> predict_noise(ConditionalModel& model,
                                    const Tensor4<float>& x_t, ClassLabel c,
                                    int t, const NoiseSchedule& schedule) {
    require(t >= 1 && t <= schedule.T, "predict_noise: t out of range");
    if (model.mode == ConditioningMode::dual_model)
        require_config(model.nets.size() == 2,
                       "predict_noise: dual mode needs two nets");
    std::vector<double> ab(x_t.n, schedule.alphabar(t));
    std::vector<int> cls(x_t.n, static_cast<int>(c));
    return model.net_for(c).forward(x_t, ab, cls, /*cache=*/false);
}

// One training step's objective: draw (t, eps) per sample, form x_t, predict,
// and reduce |eps_hat - eps| by the configured norm with mean reduction.
// Gradients are accumulated into the net's blocks.
template <typename T>
double loss_and_grads(DenoiserNet<T>& net, const Tensor4<T>& batch,
                      const std::vector<int>& labels,
                      const NoiseSchedule& schedule, RngStream& rng,
                      LossNorm norm = LossNorm::l2) {
    require(batch.n >= 1, "loss_and_grads: empty batch");
    require(static_cast<int>(labels.size()) == batch.n,
            "loss_and_grads: labels length mismatch");
    std::vector<double> ab(batch.n);
    std::vector<int> ts(batch.n);
    for (int s = 0; s < batch.n; ++s) {
        ts[s] = static_cast<int>(rng.uniform_int(1, schedule.T));
        ab[s] = schedule.alphabar(ts[s]);
    }
    Tensor4<T> eps = sample_gaussian_like(batch, rng);
    Tensor4<T> x_t(batch.n, batch.c, batch.h, batch.w);
    size_t chw = static_cast<size_t>(batch.c) * batch.h * batch.w;
    for (int s = 0; s < batch.n; ++s) {
        T a = static_cast<T>(std::sqrt(ab[s]));
        T b = static_cast<T>(std::sqrt(1.0 - ab[s]));
        for (size_t i = 0; i < chw; ++i) {
            size_t off = s * chw + i;
            x_t.data[off] = a * batch.data[off] + b * eps.data[off];
        }
    }
    Tensor4<T> pred = net.forward(x_t, ab, labels, /*cache=*/true);
    double n_elem = static_cast<double>(pred.data.size());
    double loss = 0.0;
    Tensor4<T> grad(pred.n, pred.c, pred.h, pred.w);
    for (size_t i = 0; i < pred.data.size(); ++i) {
        double r = static_cast<double>(pred.data[i]) -
                   static_cast<double>(eps.data[i]);
        if (norm == LossNorm::l2) {
            loss += r * r;
            grad.data[i] = static_cast<T>(2.0 * r / n_elem);
        } else {
            loss += std::abs(r);
            grad.data[i] = static_cast<T>((r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0)) /
                                          n_elem);
        }
    }
    net.backward(grad);
    return loss / n_elem;
}

struct LabeledImage {
    Tensor4<float> image;  // [1, C, H, W], values in [0,1]
    ClassLabel label = ClassLabel::c0_healthy;
};

struct TrainResult {
    ConditionalModel model;
    std::vector<double> epoch_losses;
    NoiseSchedule schedule;
};

namespace detail {

template <typename AugmentFn>
inline std::vector<double> train_one_net(
    DenoiserNet<float>& net, const std::vector<const LabeledImage*>& data,
    const TrainConfig& cfg, const NoiseSchedule& schedule, uint64_t net_index,
    AugmentFn&& augment) {
    OptimizerState<float> opt;
    opt.lr = cfg.learning_rate;
    opt.attach(net);
    RngStream root(cfg.seed);
    RngStream net_rng = root.substream(100 + net_index);
    std::vector<double> losses;
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), size_t(0));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        RngStream erng = net_rng.substream(static_cast<uint64_t>(epoch));
        // Fisher-Yates
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(erng.uniform_int(0, i - 1));
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        int steps = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg.batch_size)) {
            size_t end = std::min(order.size(),
                                  start + static_cast<size_t>(cfg.batch_size));
            int bs = static_cast<int>(end - start);
            const Tensor4<float>& proto = data[order[start]]->image;
            Tensor4<float> batch(bs, proto.c, proto.h, proto.w);
            std::vector<int> labels(bs);
            size_t chw = static_cast<size_t>(proto.c) * proto.h * proto.w;
            for (int s = 0; s < bs; ++s) {
                const LabeledImage* li = data[order[start + s]];
                Tensor4<float> img =
                    augment(li->image, erng);
                std::copy(img.data.begin(), img.data.end(),
                          batch.data.begin() + s * chw);
                labels[s] = static_cast<int>(li->label);
            }
            net.zero_grad();
            epoch_loss +=
                loss_and_grads(net, batch, labels, schedule, erng, cfg.loss);
            adam_step(net, opt);
            ++steps;
        }
        losses.push_back(steps ? epoch_loss / steps : 0.0);
    }
    return losses;
}

}  // namespace detail

// Full training run. `augment` maps ([1,C,H,W] tensor, rng) -> tensor; pass
// an identity lambda to disable augmentation. In dual-model mode each class
// trains its own net on its own samples; epoch losses are averaged.
template <typename AugmentFn>
TrainResult train(const std::vector<LabeledImage>& dataset,
                  const TrainConfig& cfg, AugmentFn&& augment) {
    cfg.validate();
    require(!dataset.empty(), "train: empty dataset");
    bool has_c0 = false, has_c1 = false;
    for (const auto& s : dataset) {
        if (s.label == ClassLabel::c0_healthy) has_c0 = true;
        if (s.label == ClassLabel::c1_unhealthy) has_c1 = true;
    }
    require_config(has_c0 && has_c1,
                   "train: dataset must contain both class labels");

    TrainResult result;
    result.schedule = build_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    result.model.mode = cfg.mode;
    if (cfg.mode == ConditioningMode::embedding) {
        DenoiserNet<float> net(cfg.net);
        net.init(cfg.seed);
        std::vector<const LabeledImage*> all;
        for (const auto& s : dataset) all.push_back(&s);
        result.epoch_losses = detail::train_one_net(
            net, all, cfg, result.schedule, 0, augment);
        result.model.nets.push_back(std::move(net));
    } else {
        std::vector<std::vector<const LabeledImage*>> split(2);
        for (const auto& s : dataset)
            split[static_cast<int>(s.label)].push_back(&s);
        std::vector<std::vector<double>> losses(2);
        for (int c = 0; c < 2; ++c) {
            DenoiserNet<float> net(cfg.net);
            net.init(cfg.seed + static_cast<uint64_t>(c));
            losses[c] = detail::train_one_net(net, split[c], cfg,
                                              result.schedule, c, augment);
            result.model.nets.push_back(std::move(net));
        }
        for (int e = 0; e < cfg.epochs; ++e)
            result.epoch_losses.push_back(0.5 * (losses[0][e] + losses[1][e]));
    }
    return result;
}

inline TrainResult train(const std::vector<LabeledImage>& dataset,
                         const TrainConfig& cfg) {
    return train(dataset, cfg,
                 [](const Tensor4<float>& x, RngStream&) { return x; });
}

inline void write_loss_curve(const std::string& path,
                             const std::vector<double>& losses) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot write loss curve: " + path);
    os << "epoch,mean_loss\n";
    for (size_t i = 0; i < losses.size(); ++i)
        os << i << "," << losses[i] << "\n";
}

}  // namespace diffseg

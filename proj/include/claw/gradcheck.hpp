#pragma once

// Finite-difference verification of the analytic gradients, run in double
// precision on a small model.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "claw/model.hpp"

namespace claw {

struct GradientReport {
    struct Entry {
        std::string name;
        double max_rel_error = 0.0;
    };
    std::vector<Entry> per_param;
    double global_max_rel_error = 0.0;
    double step = 0.0;
    index_t coordinates_checked = 0;

    bool passed(double tolerance = 1e-3) const { return global_max_rel_error < tolerance; }
};

struct GradcheckConfig {
    ModelConfig model;
    double step = 1e-3;
    index_t target_coordinates = 200;  // lower bound, spread over every tensor
    std::uint64_t seed = 1;
    Mode norm_mode = Mode::train;
    // Test hook: corrupts one analytic gradient so the check must fail.
    bool break_gradients = false;

    static ModelConfig toy_model() {
        ModelConfig m;
        m.input_size = 32;
        m.input_channels = 3;
        m.depth = 2;
        m.channels = {8, 8, 16};
        m.seed = 7;
        return m;
    }
};

/// Relative error with the dead-path convention: exactly 0 when both values
/// are below 1e-12 in magnitude.
inline double gradcheck_rel_error(double analytic, double numeric) {
    const double aa = std::abs(analytic);
    const double an = std::abs(numeric);
    if (aa < 1e-12 && an < 1e-12) return 0.0;
    return std::abs(analytic - numeric) / std::max(aa, an);
}

/// Compares backpropagated gradients of the BCE training loss against central
/// finite differences (loss(p+h) - loss(p-h)) / (2h) on a sampled subset of
/// coordinates covering every trainable tensor.
inline GradientReport gradcheck(const GradcheckConfig& cfg) {
    using T = double;
    ClawNet<T> net(cfg.model);

    std::mt19937_64 rng(cfg.seed);
    const index_t s = cfg.model.input_size;
    Tensor4<T> image(1, cfg.model.input_channels, s, s);
    for (T& v : image.data) v = model_detail::unit_uniform(rng);
    Tensor4<T> target(1, 1, s, s);
    for (T& v : target.data) v = (rng() & 1) ? T(1) : T(0);

    auto run_loss = [&](Mode mode) {
        NodePtr<T> input = make_leaf(image);
        return bce_loss(net.forward(input, mode), target);
    };

    // Freeze the normalization statistics used by every evaluation: train-mode
    // losses always renormalize from the batch, eval-mode losses read the
    // stats captured here.
    auto params = net.params();
    std::vector<Tensor4<T>> state_snapshot;
    for (auto& p : params) {
        if (!p.trainable()) state_snapshot.push_back(*p.value);
    }
    auto restore_state = [&]() {
        std::size_t k = 0;
        for (auto& p : params) {
            if (!p.trainable()) *p.value = state_snapshot[k++];
        }
    };

    NodePtr<T> loss = run_loss(cfg.norm_mode);
    backward(loss);
    restore_state();

    std::vector<ParamRef<T>*> trainable;
    for (auto& p : params) {
        if (p.trainable()) trainable.push_back(&p);
    }
    const index_t per_tensor = std::max<index_t>(
        1, (cfg.target_coordinates + static_cast<index_t>(trainable.size()) - 1) /
               static_cast<index_t>(trainable.size()));

    auto eval_loss = [&]() {
        NoGradGuard guard;
        NodePtr<T> l = run_loss(cfg.norm_mode);
        restore_state();
        return static_cast<double>(l->value.data[0]);
    };

    GradientReport report;
    report.step = cfg.step;
    bool broke = false;
    for (auto* p : trainable) {
        Tensor4<T>& tensor = *p->value;
        const Tensor4<T>& grad = p->node->grad;
        GradientReport::Entry entry;
        entry.name = p->name;

        const index_t n = tensor.size();
        std::vector<index_t> coords;
        if (n <= per_tensor) {
            for (index_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (index_t i = 0; i < per_tensor; ++i) {
                coords.push_back(static_cast<index_t>(rng() % static_cast<std::uint64_t>(n)));
            }
            std::sort(coords.begin(), coords.end());
            coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        }

        for (index_t c : coords) {
            const std::size_t idx = static_cast<std::size_t>(c);
            const T saved = tensor.data[idx];
            tensor.data[idx] = saved + static_cast<T>(cfg.step);
            const double plus = eval_loss();
            tensor.data[idx] = saved - static_cast<T>(cfg.step);
            const double minus = eval_loss();
            tensor.data[idx] = saved;

            const double numeric = (plus - minus) / (2.0 * cfg.step);
            double analytic = grad.empty() ? 0.0 : static_cast<double>(grad.data[idx]);
            if (cfg.break_gradients && !broke) {
                analytic += 0.01 * (std::abs(analytic) + 1.0);
                broke = true;
            }
            entry.max_rel_error =
                std::max(entry.max_rel_error, gradcheck_rel_error(analytic, numeric));
            ++report.coordinates_checked;
        }
        report.per_param.push_back(entry);
        report.global_max_rel_error =
            std::max(report.global_max_rel_error, entry.max_rel_error);
    }
    return report;
}

}  // namespace claw

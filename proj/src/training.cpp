#include "claw/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "claw/checkpoint.hpp"

namespace claw {

SgdAdam::SgdAdam(ClawNet<float>& net, const TrainConfig& config) : config_(config) {
    for (auto& p : net.params()) {
        if (p.trainable()) params_.push_back(p.node);
    }
    if (config_.optimizer == Optimizer::adam) {
        for (const auto& p : params_) {
            m_.push_back(zeros_like(p->value));
            v_.push_back(zeros_like(p->value));
        }
    }
}

void SgdAdam::zero_grad() {
    for (auto& p : params_) p->grad = Tensor4<float>();
}

void SgdAdam::step() {
    ++t_;
    const float lr = static_cast<float>(config_.learning_rate);
    if (config_.optimizer == Optimizer::sgd) {
        for (auto& p : params_) {
            if (p->grad.empty()) continue;
            for (std::size_t i = 0; i < p->value.data.size(); ++i) {
                p->value.data[i] -= lr * p->grad.data[i];
            }
        }
        return;
    }
    const float b1 = static_cast<float>(config_.beta1);
    const float b2 = static_cast<float>(config_.beta2);
    const float eps = static_cast<float>(config_.adam_eps);
    const float corr1 = 1.0f - std::pow(b1, static_cast<float>(t_));
    const float corr2 = 1.0f - std::pow(b2, static_cast<float>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k];
        if (p->grad.empty()) continue;
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            const float g = p->grad.data[i];
            float& m = m_[k].data[i];
            float& v = v_[k].data[i];
            m = b1 * m + (1.0f - b1) * g;
            v = b2 * v + (1.0f - b2) * g * g;
            const float mhat = m / corr1;
            const float vhat = v / corr2;
            p->value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

namespace {

double run_step(ClawNet<float>& net, SgdAdam& opt, const Tensor4<float>& inputs,
                const Tensor4<float>& targets) {
    opt.zero_grad();
    NodePtr<float> loss = bce_loss(net.forward(inputs, Mode::train), targets);
    const double value = static_cast<double>(loss->value.data[0]);
    if (!std::isfinite(value)) {
        throw std::runtime_error("train: loss diverged (non-finite value)");
    }
    backward(loss);
    opt.step();
    return value;
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const std::vector<Sample>& train_set,
                  const std::vector<Sample>* eval_set) {
    model_config.validate();
    train_config.validate();
    if (train_set.empty()) {
        throw std::invalid_argument("train: empty training set");
    }

    ClawNet<float> net(model_config);
    SgdAdam opt(net, train_config);
    TrainHistory history;

    std::mt19937_64 rng(train_config.seed);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (index_t epoch = 0; epoch < train_config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng() % i);
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(train_config.batch_size)) {
            const std::size_t stop = std::min(
                order.size(), start + static_cast<std::size_t>(train_config.batch_size));
            std::vector<const Sample*> batch;
            for (std::size_t i = start; i < stop; ++i) batch.push_back(&train_set[order[i]]);
            auto [inputs, targets] = make_batch(batch, model_config.input_channels);
            history.losses.push_back(run_step(net, opt, inputs, targets));
        }
        if (train_config.eval_every > 0 && eval_set && !eval_set->empty() &&
            (epoch + 1) % train_config.eval_every == 0) {
            TrainHistory::EvalSnapshot snap;
            snap.epoch = epoch + 1;
            snap.report = evaluate_model(net, *eval_set, model_config.threshold);
            history.evals.push_back(std::move(snap));
        }
    }

    if (!train_config.checkpoint_path.empty()) {
        save_checkpoint(train_config.checkpoint_path, net);
    }
    return TrainResult{std::move(net), std::move(history)};
}

double overfit_sanity(const Sample& sample, index_t steps, const ModelConfig& model_config,
                      double learning_rate) {
    ClawNet<float> net(model_config);
    TrainConfig tc;
    tc.learning_rate = learning_rate;
    SgdAdam opt(net, tc);

    auto [inputs, targets] = make_batch({&sample}, model_config.input_channels);
    for (index_t i = 0; i < steps; ++i) {
        run_step(net, opt, inputs, targets);
    }

    NoGradGuard guard;
    NodePtr<float> prob = net.forward(inputs, Mode::eval);
    const BinaryMask pred = predict_mask(prob->value, model_config.threshold);
    return dice(confusion(pred, sample.mask));
}

MetricsReport evaluate_model(ClawNet<float>& net, const std::vector<Sample>& test_set,
                             double threshold) {
    if (test_set.empty()) {
        throw std::invalid_argument("evaluate: empty test set");
    }
    NoGradGuard guard;
    std::vector<BinaryMask> preds;
    std::vector<BinaryMask> truths;
    std::vector<std::string> ids;
    for (const Sample& s : test_set) {
        auto [inputs, targets] = make_batch({&s}, net.config().input_channels);
        NodePtr<float> prob = net.forward(inputs, Mode::eval);
        preds.push_back(predict_mask(prob->value, threshold));
        truths.push_back(s.mask);
        ids.push_back(s.id);
    }
    return evaluate_set(preds, truths, ids);
}

MetricsReport evaluate_checkpoint(const std::string& checkpoint_path,
                                  const std::vector<Sample>& test_set, double threshold) {
    ClawNet<float> net = load_checkpoint(checkpoint_path);
    return evaluate_model(net, test_set, threshold);
}

const char* variant_name(VariantId v) {
    switch (v) {
        case VariantId::unet:
            return "unet";
        case VariantId::claw:
            return "claw";
        case VariantId::claw_res:
            return "claw_res";
        case VariantId::claw_res_att:
            return "claw_res_att";
    }
    return "unknown";
}

VariantId variant_from_name(const std::string& name) {
    if (name == "unet") return VariantId::unet;
    if (name == "claw") return VariantId::claw;
    if (name == "claw_res") return VariantId::claw_res;
    if (name == "claw_res_att") return VariantId::claw_res_att;
    throw std::invalid_argument("unknown variant name: " + name);
}

ModelConfig apply_variant(ModelConfig base, VariantId v) {
    base.enable_attention = v == VariantId::claw_res_att;
    base.enable_residual = v == VariantId::claw_res || v == VariantId::claw_res_att;
    base.enable_bottom_branch = v != VariantId::unet;
    return base;
}

std::vector<AblationRow> ablate(const std::vector<VariantId>& variants,
                                const ModelConfig& base_config,
                                const TrainConfig& train_config,
                                const std::vector<Sample>& train_set,
                                const std::vector<Sample>& test_set) {
    if (variants.size() < 2) {
        throw std::invalid_argument("ablate: need at least two variants");
    }
    std::vector<AblationRow> rows;
    for (VariantId v : variants) {
        const ModelConfig config = apply_variant(base_config, v);
        TrainConfig tc = train_config;
        tc.checkpoint_path.clear();  // rows compare in memory
        TrainResult result = train(config, tc, train_set);
        const MetricsReport report = evaluate_model(result.net, test_set, config.threshold);

        AblationRow row;
        row.variant = variant_name(v);
        row.miou = report.mean_miou;
        row.dice = report.mean_dice;
        row.aver_hd = report.mean_aver_hd;
        row.param_count = result.net.trainable_scalar_count();
        rows.push_back(std::move(row));
    }

    // Winner flags per metric; higher is better except for the distance.
    double best_miou = rows[0].miou;
    double best_dice = rows[0].dice;
    std::optional<double> best_hd;
    for (const auto& r : rows) {
        best_miou = std::max(best_miou, r.miou);
        best_dice = std::max(best_dice, r.dice);
        if (r.aver_hd && (!best_hd || *r.aver_hd < *best_hd)) best_hd = r.aver_hd;
    }
    for (auto& r : rows) {
        std::vector<std::string> flags;
        if (r.miou == best_miou) flags.push_back("miou");
        if (r.dice == best_dice) flags.push_back("dice");
        if (r.aver_hd && best_hd && *r.aver_hd == *best_hd) flags.push_back("aver_hd");
        std::string joined;
        for (std::size_t i = 0; i < flags.size(); ++i) {
            if (i) joined += ';';
            joined += flags[i];
        }
        r.best_flags = joined;
    }
    return rows;
}

namespace {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

void write_history_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_history_csv: cannot open " + path);
    out << "step,loss\n";
    for (std::size_t i = 0; i < history.losses.size(); ++i) {
        out << (i + 1) << ',' << format_double(history.losses[i]) << '\n';
    }
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_ablation_csv: cannot open " + path);
    out << "variant,miou,dice,aver_hd,best_flags\n";
    for (const auto& r : rows) {
        out << r.variant << ',' << format_double(r.miou) << ',' << format_double(r.dice) << ','
            << (r.aver_hd ? format_double(*r.aver_hd) : "nan") << ',' << r.best_flags << '\n';
    }
}

void write_ablation_meta_json(const std::vector<AblationRow>& rows, const std::string& path) {
    nlohmann::json doc;
    doc["variants"] = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json row;
        row["variant"] = r.variant;
        row["param_count"] = r.param_count;
        row["miou"] = r.miou;
        row["dice"] = r.dice;
        if (r.aver_hd) {
            row["aver_hd"] = *r.aver_hd;
        } else {
            row["aver_hd"] = nullptr;
        }
        row["best_flags"] = r.best_flags;
        doc["variants"].push_back(row);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_ablation_meta_json: cannot open " + path);
    out << doc.dump(2) << '\n';
}

}  // namespace claw

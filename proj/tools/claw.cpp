// claw: synthetic-data segmentation workbench.
//
// Subcommands: synth, train, eval, predict, gradcheck, ablate.
// Exit codes: 0 success, 1 usage error, 2 runtime error, 3 gradcheck failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "claw/checkpoint.hpp"
#include "claw/data.hpp"
#include "claw/gradcheck.hpp"
#include "claw/metrics.hpp"
#include "claw/model.hpp"
#include "claw/png_io.hpp"
#include "claw/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitGradcheck = 3;

struct SeedFlags {
    std::uint64_t master = 0;
    std::optional<std::uint64_t> split;
    std::optional<std::uint64_t> model;
    std::optional<std::uint64_t> shuffle;

    std::uint64_t split_seed() const { return split.value_or(master); }
    std::uint64_t model_seed() const { return model.value_or(master); }
    std::uint64_t shuffle_seed() const { return shuffle.value_or(master); }
};

void add_seed_flags(CLI::App* cmd, SeedFlags& seeds) {
    cmd->add_option("--seed", seeds.master, "Master seed; defaults every unset seed below");
    cmd->add_option("--split-seed", seeds.split, "Train/test split shuffle seed");
    cmd->add_option("--model-seed", seeds.model, "Parameter initialization seed");
    cmd->add_option("--train-seed", seeds.shuffle, "Epoch shuffle seed");
}

struct ModelFlags {
    claw::ModelConfig config;
    std::string channels_text;
    std::string shortcut = "zero_pad";
};

void add_model_flags(CLI::App* cmd, ModelFlags& m, claw::index_t default_size) {
    m.config.input_size = default_size;
    cmd->add_option("--input-size", m.config.input_size, "Square input extent");
    cmd->add_option("--input-channels", m.config.input_channels, "Input channel count");
    cmd->add_option("--depth", m.config.depth, "Encoder stage count");
    cmd->add_option("--channels", m.channels_text,
                    "Channel schedule, stem plus one entry per stage (comma-separated)");
    cmd->add_flag("--attention,!--no-attention", m.config.enable_attention,
                  "Attention gates at every fusion level");
    cmd->add_flag("--residual,!--no-residual", m.config.enable_residual,
                  "Residual encoder stages");
    cmd->add_flag("--bottom-branch,!--no-bottom-branch", m.config.enable_bottom_branch,
                  "Repeated upsampling of the bottom feature map");
    cmd->add_option("--shortcut-mode", m.shortcut, "zero_pad or projection")
        ->check(CLI::IsMember({"zero_pad", "projection"}));
    cmd->add_flag("--pool-everywhere", m.config.pool_everywhere,
                  "Downsample every stage by max-pooling instead of stride-2 blocks");
    cmd->add_option("--threshold", m.config.threshold, "Binarization threshold")
        ->check(CLI::Range(0.0, 1.0));
}

claw::ModelConfig resolve_model(const ModelFlags& m, const SeedFlags& seeds) {
    claw::ModelConfig config = m.config;
    config.shortcut_mode = m.shortcut == "projection" ? claw::ShortcutMode::projection
                                                      : claw::ShortcutMode::zero_pad;
    if (!m.channels_text.empty()) {
        config.channels.clear();
        std::istringstream in(m.channels_text);
        std::string tok;
        while (std::getline(in, tok, ',')) config.channels.push_back(std::stoll(tok));
    } else if (config.depth != 4) {
        // Default schedule for other depths: stem 64, first stage 64, then
        // doubling per stage capped at 512.
        config.channels.assign(2, 64);
        claw::index_t c = 64;
        for (claw::index_t s = 1; s < config.depth; ++s) {
            c = std::min<claw::index_t>(512, c * 2);
            config.channels.push_back(c);
        }
    }
    config.seed = seeds.model_seed();
    config.validate();
    return config;
}

struct TrainFlags {
    claw::TrainConfig config;
    std::string optimizer = "adam";
};

void add_train_flags(CLI::App* cmd, TrainFlags& t) {
    cmd->add_option("--epochs", t.config.epochs, "Training epochs");
    cmd->add_option("--batch-size", t.config.batch_size, "Samples per optimizer step");
    cmd->add_option("--lr", t.config.learning_rate, "Learning rate");
    cmd->add_option("--optimizer", t.optimizer, "adam or sgd")
        ->check(CLI::IsMember({"adam", "sgd"}));
    cmd->add_option("--eval-every", t.config.eval_every,
                    "Epoch interval between test-set evaluations (0 disables)");
}

claw::TrainConfig resolve_train(const TrainFlags& t, const SeedFlags& seeds) {
    claw::TrainConfig config = t.config;
    config.optimizer = t.optimizer == "sgd" ? claw::Optimizer::sgd : claw::Optimizer::adam;
    config.seed = seeds.shuffle_seed();
    config.validate();
    return config;
}

std::vector<claw::Sample> load_resized(const std::string& dir, claw::index_t size) {
    std::vector<claw::Sample> samples = claw::load_dataset(dir);
    for (auto& s : samples) s = claw::resize_to(s, size);
    return samples;
}

int cmd_synth(const std::string& out_dir, claw::index_t count, const claw::SynthSpec& spec) {
    claw::write_synth_dataset(out_dir, spec, count);
    std::printf("wrote %lld image/mask pairs under %s\n", static_cast<long long>(count),
                out_dir.c_str());
    return kExitOk;
}

int cmd_train(const std::string& data_dir, const std::string& out_dir,
              const claw::ModelConfig& model_config, const claw::TrainConfig& train_config,
              std::uint64_t split_seed) {
    fs::create_directories(out_dir);
    std::vector<claw::Sample> samples = load_resized(data_dir, model_config.input_size);
    auto [train_set, test_set] = claw::split(std::move(samples), 4, 1, split_seed);
    std::printf("dataset: %zu train / %zu test\n", train_set.size(), test_set.size());

    claw::TrainConfig tc = train_config;
    tc.checkpoint_path = (fs::path(out_dir) / "checkpoint.claw").string();
    claw::TrainResult result = claw::train(model_config, tc, train_set,
                                           test_set.empty() ? nullptr : &test_set);
    claw::write_history_csv(result.history, (fs::path(out_dir) / "history.csv").string());
    std::printf("final loss %.6f after %zu steps\n", result.history.losses.back(),
                result.history.losses.size());

    if (!test_set.empty()) {
        const claw::MetricsReport report =
            claw::evaluate_model(result.net, test_set, model_config.threshold);
        claw::write_metrics_csv(report, (fs::path(out_dir) / "metrics.csv").string());
        claw::write_metrics_json(report, (fs::path(out_dir) / "metrics.json").string());
        std::printf("test %s\n", claw::format_metrics_summary(report).c_str());
    } else {
        std::printf("test split is empty; skipping final evaluation\n");
    }
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& out_dir, const std::string& subset, std::uint64_t split_seed,
             std::optional<double> threshold) {
    claw::ClawNet<float> net = claw::load_checkpoint(checkpoint);
    const double thr = threshold.value_or(net.config().threshold);

    std::vector<claw::Sample> samples = load_resized(data_dir, net.config().input_size);
    if (subset != "all") {
        auto [train_set, test_set] = claw::split(std::move(samples), 4, 1, split_seed);
        samples = subset == "train" ? std::move(train_set) : std::move(test_set);
    }
    if (samples.empty()) {
        throw std::runtime_error("eval: selected subset is empty");
    }
    const claw::MetricsReport report = claw::evaluate_model(net, samples, thr);

    fs::create_directories(out_dir);
    claw::write_metrics_csv(report, (fs::path(out_dir) / "metrics.csv").string());
    claw::write_metrics_json(report, (fs::path(out_dir) / "metrics.json").string());
    std::printf("%s %s\n", subset.c_str(), claw::format_metrics_summary(report).c_str());
    return kExitOk;
}

int cmd_predict(const std::string& checkpoint, const std::string& image_path,
                const std::string& out_path, const std::string& prob_path,
                std::optional<double> threshold) {
    claw::ClawNet<float> net = claw::load_checkpoint(checkpoint);
    const double thr = threshold.value_or(net.config().threshold);

    const claw::ImageU8 raw = claw::read_png(image_path);
    if (raw.height != net.config().input_size || raw.width != net.config().input_size) {
        throw std::runtime_error("predict: image extent " + std::to_string(raw.width) + "x" +
                                 std::to_string(raw.height) +
                                 " does not match checkpoint input size " +
                                 std::to_string(net.config().input_size));
    }
    claw::Tensor4<float> image(1, raw.channels, raw.height, raw.width);
    for (claw::index_t c = 0; c < raw.channels; ++c) {
        for (claw::index_t y = 0; y < raw.height; ++y) {
            for (claw::index_t x = 0; x < raw.width; ++x) {
                image(0, c, y, x) = static_cast<float>(raw.at(y, x, c)) / 255.0f;
            }
        }
    }

    claw::NoGradGuard guard;
    claw::NodePtr<float> prob =
        net.forward(claw::adapt_channels(image, net.config().input_channels), claw::Mode::eval);
    const claw::BinaryMask mask = claw::predict_mask(prob->value, thr);

    std::vector<std::uint8_t> bytes(mask.values.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.values[i] ? 255 : 0;
    claw::write_png_gray8(out_path, mask.height, mask.width, bytes.data());

    if (!prob_path.empty()) {
        std::vector<std::uint16_t> p16(static_cast<std::size_t>(prob->value.plane_size()));
        for (std::size_t i = 0; i < p16.size(); ++i) {
            const float v = std::clamp(prob->value.data[i], 0.0f, 1.0f);
            p16[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0f));
        }
        claw::write_png_gray16(prob_path, prob->value.height, prob->value.width, p16.data());
    }
    std::printf("wrote %s (%lld foreground pixels)\n", out_path.c_str(),
                static_cast<long long>(mask.count()));
    return kExitOk;
}

int cmd_gradcheck(const claw::GradcheckConfig& cfg) {
    const claw::GradientReport report = claw::gradcheck(cfg);
    std::printf("gradcheck: step %.3g, %lld coordinates over %zu tensors\n", report.step,
                static_cast<long long>(report.coordinates_checked), report.per_param.size());
    double worst = 0.0;
    std::string worst_name;
    for (const auto& e : report.per_param) {
        if (e.max_rel_error >= worst) {
            worst = e.max_rel_error;
            worst_name = e.name;
        }
    }
    std::printf("gradcheck: global max relative error %.3e (worst: %s)\n",
                report.global_max_rel_error, worst_name.c_str());
    if (!report.passed()) {
        std::printf("gradcheck: FAIL (tolerance 1e-3)\n");
        return kExitGradcheck;
    }
    std::printf("gradcheck: PASS (tolerance 1e-3)\n");
    return kExitOk;
}

int cmd_ablate(const std::string& data_dir, const std::string& out_path,
               const std::string& variants_text, const claw::ModelConfig& model_config,
               const claw::TrainConfig& train_config, std::uint64_t split_seed) {
    std::vector<claw::VariantId> variants;
    std::istringstream in(variants_text);
    std::string tok;
    while (std::getline(in, tok, ',')) variants.push_back(claw::variant_from_name(tok));

    std::vector<claw::Sample> samples = load_resized(data_dir, model_config.input_size);
    auto [train_set, test_set] = claw::split(std::move(samples), 4, 1, split_seed);
    if (test_set.empty()) {
        throw std::runtime_error("ablate: test split is empty");
    }
    const auto rows =
        claw::ablate(variants, model_config, train_config, train_set, test_set);
    claw::write_ablation_csv(rows, out_path);
    claw::write_ablation_meta_json(rows, out_path + ".meta.json");
    for (const auto& r : rows) {
        std::printf("%-14s MIoU %.2f%%  Dice %.2f%%  Aver_hd %s  params %lld %s\n",
                    r.variant.c_str(), 100.0 * r.miou, 100.0 * r.dice,
                    r.aver_hd ? std::to_string(*r.aver_hd).c_str() : "undefined",
                    static_cast<long long>(r.param_count),
                    r.best_flags.empty() ? "" : ("[best: " + r.best_flags + "]").c_str());
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Claw UNet segmentation workbench"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic vessel dataset");
    synth->set_config("--config");
    synth->allow_config_extras(false);
    std::string synth_out;
    claw::index_t synth_count = 51;
    claw::SynthSpec spec;
    synth->add_option("--out", synth_out, "Output dataset directory")->required();
    synth->add_option("--count", synth_count, "Number of samples");
    synth->add_option("--size", spec.size, "Square image extent");
    synth->add_option("--seed", spec.seed, "Generator seed");
    synth->add_option("--vessel-min", spec.vessel_count_min, "Minimum vessels per image");
    synth->add_option("--vessel-max", spec.vessel_count_max, "Maximum vessels per image");
    synth->add_option("--width-min", spec.width_min, "Minimum stroke width (pixels)");
    synth->add_option("--width-max", spec.width_max, "Maximum stroke width (pixels)");
    synth->add_option("--curvature", spec.curvature_scale, "Curvature scale in [0, 1]");
    synth->add_option("--noise", spec.noise_sigma, "Gaussian noise sigma");
    synth->add_option("--vessel-intensity-min", spec.vessel_intensity_min, "");
    synth->add_option("--vessel-intensity-max", spec.vessel_intensity_max, "");
    synth->add_option("--background-min", spec.background_min, "");
    synth->add_option("--background-max", spec.background_max, "");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train on an image/mask dataset");
    train_cmd->set_config("--config");
    train_cmd->allow_config_extras(false);
    std::string train_data;
    std::string train_out;
    SeedFlags train_seeds;
    ModelFlags train_model;
    TrainFlags train_flags;
    train_cmd->add_option("--data", train_data, "Dataset directory")->required();
    train_cmd->add_option("--out", train_out, "Output directory")->required();
    add_seed_flags(train_cmd, train_seeds);
    add_model_flags(train_cmd, train_model, 512);
    add_train_flags(train_cmd, train_flags);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval_cmd->set_config("--config");
    eval_cmd->allow_config_extras(false);
    std::string eval_ckpt;
    std::string eval_data;
    std::string eval_out;
    std::string eval_subset = "all";
    std::uint64_t eval_split_seed = 0;
    std::optional<double> eval_threshold;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
    eval_cmd->add_option("--data", eval_data, "Dataset directory")->required();
    eval_cmd->add_option("--out", eval_out, "Report output directory")->required();
    eval_cmd->add_option("--subset", eval_subset, "all, train, or test")
        ->check(CLI::IsMember({"all", "train", "test"}));
    eval_cmd->add_option("--split-seed", eval_split_seed,
                         "Split seed (for --subset train/test)");
    eval_cmd->add_option("--threshold", eval_threshold,
                         "Binarization threshold (default: checkpoint setting)")
        ->check(CLI::Range(0.0, 1.0));

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "Segment a single image");
    predict_cmd->set_config("--config");
    predict_cmd->allow_config_extras(false);
    std::string pred_ckpt;
    std::string pred_image;
    std::string pred_out;
    std::string pred_prob;
    std::optional<double> pred_threshold;
    predict_cmd->add_option("--checkpoint", pred_ckpt, "Checkpoint path")->required();
    predict_cmd->add_option("--image", pred_image, "Input PNG")->required();
    predict_cmd->add_option("--out", pred_out, "Output mask PNG")->required();
    predict_cmd->add_option("--prob", pred_prob, "Optional 16-bit probability PNG");
    predict_cmd->add_option("--threshold", pred_threshold,
                            "Binarization threshold (default: checkpoint setting)")
        ->check(CLI::Range(0.0, 1.0));

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck",
                                        "Finite-difference check of the analytic gradients");
    grad_cmd->set_config("--config");
    grad_cmd->allow_config_extras(false);
    claw::GradcheckConfig grad_cfg;
    grad_cfg.model = claw::GradcheckConfig::toy_model();
    std::string grad_channels;
    grad_cmd->add_option("--step", grad_cfg.step, "Central difference step");
    grad_cmd->add_option("--seed", grad_cfg.seed, "Input/target seed");
    grad_cmd->add_option("--input-size", grad_cfg.model.input_size, "Toy model input extent");
    grad_cmd->add_option("--depth", grad_cfg.model.depth, "Toy model depth");
    grad_cmd->add_option("--channels", grad_channels, "Toy channel schedule (comma-separated)");
    grad_cmd->add_option("--coordinates", grad_cfg.target_coordinates,
                         "Minimum sampled coordinates");
    grad_cmd->add_flag("--break-gradients", grad_cfg.break_gradients,
                       "Corrupt one analytic gradient (negative control; must fail)");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare model variants");
    ablate_cmd->set_config("--config");
    ablate_cmd->allow_config_extras(false);
    std::string abl_data;
    std::string abl_out;
    std::string abl_variants = "unet,claw,claw_res,claw_res_att";
    SeedFlags abl_seeds;
    ModelFlags abl_model;
    TrainFlags abl_flags;
    ablate_cmd->add_option("--data", abl_data, "Dataset directory")->required();
    ablate_cmd->add_option("--out", abl_out, "Comparison CSV path")->required();
    ablate_cmd->add_option("--variants", abl_variants, "Comma-separated variant list");
    add_seed_flags(ablate_cmd, abl_seeds);
    add_model_flags(ablate_cmd, abl_model, 128);
    add_train_flags(ablate_cmd, abl_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (synth->parsed()) {
            return cmd_synth(synth_out, synth_count, spec);
        }
        if (train_cmd->parsed()) {
            return cmd_train(train_data, train_out, resolve_model(train_model, train_seeds),
                             resolve_train(train_flags, train_seeds), train_seeds.split_seed());
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(eval_ckpt, eval_data, eval_out, eval_subset, eval_split_seed,
                            eval_threshold);
        }
        if (predict_cmd->parsed()) {
            return cmd_predict(pred_ckpt, pred_image, pred_out, pred_prob, pred_threshold);
        }
        if (grad_cmd->parsed()) {
            if (!grad_channels.empty()) {
                grad_cfg.model.channels.clear();
                std::istringstream in(grad_channels);
                std::string tok;
                while (std::getline(in, tok, ',')) {
                    grad_cfg.model.channels.push_back(std::stoll(tok));
                }
            }
            grad_cfg.model.validate();
            return cmd_gradcheck(grad_cfg);
        }
        if (ablate_cmd->parsed()) {
            return cmd_ablate(abl_data, abl_out, abl_variants,
                              resolve_model(abl_model, abl_seeds),
                              resolve_train(abl_flags, abl_seeds), abl_seeds.split_seed());
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

#pragma once

// Optimization loop, evaluation harness, and the ablation runner that
// compares model variants on identical data.

#include <optional>
#include <string>
#include <vector>

#include "claw/data.hpp"
#include "claw/metrics.hpp"
#include "claw/model.hpp"

namespace claw {

enum class Optimizer { adam, sgd };

struct TrainConfig {
    index_t epochs = 30;
    index_t batch_size = 4;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;       // shuffle order
    index_t eval_every = 0;       // epochs between eval snapshots; 0 disables
    std::string checkpoint_path;  // written after the last step when non-empty

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (!(learning_rate >= 0.0)) {
            throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
        }
    }
};

struct TrainHistory {
    std::vector<double> losses;  // one entry per optimizer step
    struct EvalSnapshot {
        index_t epoch = 0;
        MetricsReport report;
    };
    std::vector<EvalSnapshot> evals;
};

struct TrainResult {
    ClawNet<float> net;
    TrainHistory history;
};

/// Adam / SGD over every trainable parameter of one network.
class SgdAdam {
public:
    SgdAdam(ClawNet<float>& net, const TrainConfig& config);
    void zero_grad();
    void step();

private:
    std::vector<NodePtr<float>> params_;
    TrainConfig config_;
    std::vector<Tensor4<float>> m_;
    std::vector<Tensor4<float>> v_;
    index_t t_ = 0;
};

/// BCE-optimized training; deterministic for fixed config seeds. Throws on a
/// non-finite loss (divergence guard).
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const std::vector<Sample>& train_set,
                  const std::vector<Sample>* eval_set = nullptr);

/// Trains on one sample and reports the Dice of the thresholded prediction
/// against its own mask.
double overfit_sanity(const Sample& sample, index_t steps, const ModelConfig& model_config,
                      double learning_rate = 1e-3);

MetricsReport evaluate_model(ClawNet<float>& net, const std::vector<Sample>& test_set,
                             double threshold);

MetricsReport evaluate_checkpoint(const std::string& checkpoint_path,
                                  const std::vector<Sample>& test_set, double threshold);

enum class VariantId { unet, claw, claw_res, claw_res_att };

const char* variant_name(VariantId v);
VariantId variant_from_name(const std::string& name);

/// Applies the variant's mechanism toggles onto a base configuration.
ModelConfig apply_variant(ModelConfig base, VariantId v);

struct AblationRow {
    std::string variant;
    double miou = 0.0;
    double dice = 0.0;
    std::optional<double> aver_hd;
    index_t param_count = 0;
    std::string best_flags;  // semicolon-joined metrics this row wins
};

/// Trains every variant with identical data, split, and seeds, evaluates on
/// the shared test side, and flags per-metric winners.
std::vector<AblationRow> ablate(const std::vector<VariantId>& variants,
                                const ModelConfig& base_config,
                                const TrainConfig& train_config,
                                const std::vector<Sample>& train_set,
                                const std::vector<Sample>& test_set);

void write_history_csv(const TrainHistory& history, const std::string& path);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);
void write_ablation_meta_json(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace claw

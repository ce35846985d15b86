#pragma once

// Segmentation quality measures: mean IoU, Dice, and the average Hausdorff
// distance between mask boundaries.

#include <optional>
#include <string>
#include <vector>

#include "claw/model.hpp"

namespace claw {

struct ConfusionCounts {
    index_t tp = 0;
    index_t fp = 0;
    index_t fn = 0;
    index_t tn = 0;

    index_t total() const { return tp + fp + fn + tn; }
};

struct PixelPoint {
    index_t y = 0;
    index_t x = 0;
    bool operator==(const PixelPoint&) const = default;
};

enum class HausdorffVariant {
    max_of_means,   // max(mean_A min_B d, mean_B min_A d)
    mean_of_means,  // arithmetic mean of the two directed averages
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth);

/// 2*tp / (2*tp + fp + fn); defined as 1.0 when both masks are empty.
double dice(const ConfusionCounts& c);

/// Mean of foreground IoU tp/(tp+fp+fn) and background IoU tn/(tn+fp+fn);
/// a class with an empty denominator contributes 1.0.
double miou(const ConfusionCounts& c);

/// Foreground pixels with at least one 4-neighbor that is background or lies
/// outside the grid, in row-major order.
std::vector<PixelPoint> boundary(const BinaryMask& mask);

/// Average Hausdorff distance between two point sets in pixel units; empty
/// inputs make the value undefined (nullopt).
std::optional<double> average_hausdorff(const std::vector<PixelPoint>& a,
                                        const std::vector<PixelPoint>& b,
                                        HausdorffVariant variant = HausdorffVariant::max_of_means);

/// average_hausdorff over the boundary point sets of two masks.
std::optional<double> mask_average_hausdorff(
    const BinaryMask& pred, const BinaryMask& truth,
    HausdorffVariant variant = HausdorffVariant::max_of_means);

struct ImageMetrics {
    std::string id;
    double miou = 0.0;
    double dice = 0.0;
    std::optional<double> aver_hd;
};

struct MetricsReport {
    std::vector<ImageMetrics> per_image;
    double mean_miou = 0.0;
    double mean_dice = 0.0;
    // Mean over the images where the distance is defined.
    std::optional<double> mean_aver_hd;
    index_t undefined_hd_count = 0;
};

MetricsReport evaluate_set(const std::vector<BinaryMask>& preds,
                           const std::vector<BinaryMask>& truths,
                           const std::vector<std::string>& ids = {});

/// CSV rows `image,miou,dice,aver_hd`; undefined distances serialize as nan.
void write_metrics_csv(const MetricsReport& report, const std::string& path);

/// JSON document with per-image entries and the aggregate means.
void write_metrics_json(const MetricsReport& report, const std::string& path);

std::string format_metrics_summary(const MetricsReport& report);

}  // namespace claw

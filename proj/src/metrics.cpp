#include "claw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace claw {

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth) {
    if (pred.height != truth.height || pred.width != truth.width) {
        throw std::invalid_argument("confusion: mask extents differ");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const bool p = pred.values[i] != 0;
        const bool t = truth.values[i] != 0;
        if (p && t) {
            ++c.tp;
        } else if (p && !t) {
            ++c.fp;
        } else if (!p && t) {
            ++c.fn;
        } else {
            ++c.tn;
        }
    }
    return c;
}

double dice(const ConfusionCounts& c) {
    const index_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) return 1.0;  // both masks empty
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double miou(const ConfusionCounts& c) {
    const index_t fg_denom = c.tp + c.fp + c.fn;
    const index_t bg_denom = c.tn + c.fp + c.fn;
    const double iou_fg =
        fg_denom == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(fg_denom);
    const double iou_bg =
        bg_denom == 0 ? 1.0 : static_cast<double>(c.tn) / static_cast<double>(bg_denom);
    return 0.5 * (iou_fg + iou_bg);
}

std::vector<PixelPoint> boundary(const BinaryMask& mask) {
    std::vector<PixelPoint> points;
    for (index_t y = 0; y < mask.height; ++y) {
        for (index_t x = 0; x < mask.width; ++x) {
            if (!mask.at(y, x)) continue;
            const bool edge = y == 0 || x == 0 || y == mask.height - 1 ||
                              x == mask.width - 1 || !mask.at(y - 1, x) || !mask.at(y + 1, x) ||
                              !mask.at(y, x - 1) || !mask.at(y, x + 1);
            if (edge) points.push_back({y, x});
        }
    }
    return points;
}

namespace {

// Exact 1D squared Euclidean distance transform (lower envelope of parabolas).
// f holds squared distances (or a large sentinel for empty sites); d receives
// min_j (i-j)^2 + f[j].
void edt_1d(const std::vector<double>& f, std::vector<double>& d) {
    const int n = static_cast<int>(f.size());
    d.assign(f.size(), 0.0);
    std::vector<int> v(f.size(), 0);
    std::vector<double> z(f.size() + 1, 0.0);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            const int p = v[k];
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p);
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

// Squared EDT of a point set over an h x w grid.
std::vector<double> grid_sq_edt(const std::vector<PixelPoint>& sites, index_t h, index_t w) {
    constexpr double kFar = 1e18;
    std::vector<double> grid(static_cast<std::size_t>(h * w), kFar);
    for (const auto& p : sites) {
        grid[static_cast<std::size_t>(p.y * w + p.x)] = 0.0;
    }
    // columns first, then rows; the two 1D passes compose to the 2D transform
    std::vector<double> tmp(static_cast<std::size_t>(h));
    std::vector<double> out_col(static_cast<std::size_t>(h));
    for (index_t x = 0; x < w; ++x) {
        for (index_t y = 0; y < h; ++y) tmp[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y * w + x)];
        edt_1d(tmp, out_col);
        for (index_t y = 0; y < h; ++y) grid[static_cast<std::size_t>(y * w + x)] = out_col[static_cast<std::size_t>(y)];
    }
    std::vector<double> row(static_cast<std::size_t>(w)), out_row(static_cast<std::size_t>(w));
    for (index_t y = 0; y < h; ++y) {
        for (index_t x = 0; x < w; ++x) row[static_cast<std::size_t>(x)] = grid[static_cast<std::size_t>(y * w + x)];
        edt_1d(row, out_row);
        for (index_t x = 0; x < w; ++x) grid[static_cast<std::size_t>(y * w + x)] = out_row[static_cast<std::size_t>(x)];
    }
    return grid;
}

double directed_mean_distance(const std::vector<PixelPoint>& from,
                              const std::vector<double>& sq_edt_of_to, index_t w) {
    double acc = 0.0;
    for (const auto& p : from) {
        acc += std::sqrt(sq_edt_of_to[static_cast<std::size_t>(p.y * w + p.x)]);
    }
    return acc / static_cast<double>(from.size());
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::optional<double> average_hausdorff(const std::vector<PixelPoint>& a,
                                        const std::vector<PixelPoint>& b,
                                        HausdorffVariant variant) {
    if (a.empty() || b.empty()) return std::nullopt;
    index_t h = 1, w = 1;
    for (const auto& p : a) {
        h = std::max(h, p.y + 1);
        w = std::max(w, p.x + 1);
    }
    for (const auto& p : b) {
        h = std::max(h, p.y + 1);
        w = std::max(w, p.x + 1);
    }
    const auto edt_b = grid_sq_edt(b, h, w);
    const auto edt_a = grid_sq_edt(a, h, w);
    const double d_ab = directed_mean_distance(a, edt_b, w);
    const double d_ba = directed_mean_distance(b, edt_a, w);
    return variant == HausdorffVariant::max_of_means ? std::max(d_ab, d_ba)
                                                     : 0.5 * (d_ab + d_ba);
}

std::optional<double> mask_average_hausdorff(const BinaryMask& pred, const BinaryMask& truth,
                                             HausdorffVariant variant) {
    return average_hausdorff(boundary(pred), boundary(truth), variant);
}

MetricsReport evaluate_set(const std::vector<BinaryMask>& preds,
                           const std::vector<BinaryMask>& truths,
                           const std::vector<std::string>& ids) {
    if (preds.size() != truths.size()) {
        throw std::invalid_argument("evaluate_set: prediction/truth counts differ");
    }
    if (!ids.empty() && ids.size() != preds.size()) {
        throw std::invalid_argument("evaluate_set: id count differs from mask count");
    }
    if (preds.empty()) {
        throw std::invalid_argument("evaluate_set: empty evaluation set");
    }

    MetricsReport report;
    double hd_acc = 0.0;
    index_t hd_count = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        ImageMetrics m;
        m.id = ids.empty() ? "image" + std::to_string(i) : ids[i];
        const ConfusionCounts c = confusion(preds[i], truths[i]);
        m.miou = miou(c);
        m.dice = dice(c);
        m.aver_hd = mask_average_hausdorff(preds[i], truths[i]);
        if (m.aver_hd) {
            hd_acc += *m.aver_hd;
            ++hd_count;
        } else {
            ++report.undefined_hd_count;
        }
        report.mean_miou += m.miou;
        report.mean_dice += m.dice;
        report.per_image.push_back(std::move(m));
    }
    report.mean_miou /= static_cast<double>(preds.size());
    report.mean_dice /= static_cast<double>(preds.size());
    if (hd_count > 0) {
        report.mean_aver_hd = hd_acc / static_cast<double>(hd_count);
    }
    return report;
}

void write_metrics_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("write_metrics_csv: cannot open " + path);
    }
    out << "image,miou,dice,aver_hd\n";
    for (const auto& m : report.per_image) {
        out << m.id << ',' << format_double(m.miou) << ',' << format_double(m.dice) << ','
            << (m.aver_hd ? format_double(*m.aver_hd) : "nan") << '\n';
    }
}

void write_metrics_json(const MetricsReport& report, const std::string& path) {
    nlohmann::json doc;
    doc["images"] = nlohmann::json::array();
    for (const auto& m : report.per_image) {
        nlohmann::json row;
        row["id"] = m.id;
        row["miou"] = m.miou;
        row["dice"] = m.dice;
        if (m.aver_hd) {
            row["aver_hd"] = *m.aver_hd;
        } else {
            row["aver_hd"] = nullptr;
        }
        doc["images"].push_back(row);
    }
    doc["aggregate"]["mean_miou"] = report.mean_miou;
    doc["aggregate"]["mean_dice"] = report.mean_dice;
    if (report.mean_aver_hd) {
        doc["aggregate"]["mean_aver_hd"] = *report.mean_aver_hd;
    } else {
        doc["aggregate"]["mean_aver_hd"] = nullptr;
    }
    doc["aggregate"]["undefined_aver_hd_count"] = report.undefined_hd_count;

    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("write_metrics_json: cannot open " + path);
    }
    out << doc.dump(2) << '\n';
}

std::string format_metrics_summary(const MetricsReport& report) {
    char buf[160];
    if (report.mean_aver_hd) {
        std::snprintf(buf, sizeof(buf), "MIoU %.2f%%  Dice %.2f%%  Aver_hd %.4f (%lld images)",
                      100.0 * report.mean_miou, 100.0 * report.mean_dice, *report.mean_aver_hd,
                      static_cast<long long>(report.per_image.size()));
    } else {
        std::snprintf(buf, sizeof(buf), "MIoU %.2f%%  Dice %.2f%%  Aver_hd undefined (%lld images)",
                      100.0 * report.mean_miou, 100.0 * report.mean_dice,
                      static_cast<long long>(report.per_image.size()));
    }
    return buf;
}

}  // namespace claw

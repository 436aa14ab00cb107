#pragma once

#include "rmct/volume.hpp"

#include <optional>

namespace rmct {

/// Reported instead of +inf when prediction and ground truth are identical.
constexpr double kPsnrIdentical = 999.0;
constexpr int kSsimWindow = 7;

/// 20 log10(R / RMSE); R defaults to max - min of gt.
double psnr(const Volume& gt, const Volume& pred, std::optional<double> data_range = std::nullopt);

/// Mean SSIM over every 7x7x7 uniform window inside the volume (stride 1),
/// C1 = (0.01 R)^2, C2 = (0.03 R)^2, population statistics.
double ssim(const Volume& gt, const Volume& pred, std::optional<double> data_range = std::nullopt);

struct Overlap {
    double iou;
    double dice;
};

/// Masks are voxels >= threshold. Two empty masks count as a perfect match.
Overlap iou_dice(const Volume& gt, const Volume& pred, double threshold);

struct MetricReport {
    double psnr_db = 0.0;
    double ssim = 0.0;
    double iou = 0.0;
    double dice = 0.0;
    double data_range_used = 0.0;
    double threshold_used = 0.0;
};

/// Threshold defaults to half the gt maximum.
MetricReport evaluate(const Volume& gt, const Volume& pred, std::optional<double> threshold = std::nullopt,
                      std::optional<double> data_range = std::nullopt);

}  // namespace rmct

#include "rmct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace rmct {

namespace {

void require_same_dims(const Volume& a, const Volume& b)
{
    if (a.dims != b.dims)
        throw std::invalid_argument("volume dimensions differ: (" + std::to_string(a.dims[0]) + "," +
                                    std::to_string(a.dims[1]) + "," + std::to_string(a.dims[2]) + ") vs (" +
                                    std::to_string(b.dims[0]) + "," + std::to_string(b.dims[1]) + "," +
                                    std::to_string(b.dims[2]) + ")");
}

double resolve_range(const Volume& gt, std::optional<double> data_range)
{
    if (data_range) {
        if (!(*data_range > 0.0))
            throw std::invalid_argument("data_range must be positive");
        return *data_range;
    }
    const auto [lo, hi] = std::minmax_element(gt.data.begin(), gt.data.end());
    const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
    if (!(range > 0.0))
        throw std::invalid_argument("ground truth is constant; pass an explicit data_range");
    return range;
}

// Sum over every w-long window along one axis, keeping only full windows.
std::vector<double> box_sum_axis(const std::vector<double>& in, std::array<int, 3>& dims, int axis, int w)
{
    std::array<int, 3> od = dims;
    od[axis] = dims[axis] - w + 1;
    std::vector<double> out(static_cast<std::size_t>(od[0]) * od[1] * od[2]);
    const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(dims[0])
                                                          : static_cast<std::size_t>(dims[0]) * dims[1]);
    for (int k = 0; k < od[2]; ++k)
        for (int j = 0; j < od[1]; ++j)
            for (int i = 0; i < od[0]; ++i) {
                const std::size_t src = i + static_cast<std::size_t>(dims[0]) * (j + static_cast<std::size_t>(dims[1]) * k);
                double s = 0.0;
                for (int t = 0; t < w; ++t)
                    s += in[src + t * stride];
                out[i + static_cast<std::size_t>(od[0]) * (j + static_cast<std::size_t>(od[1]) * k)] = s;
            }
    dims = od;
    return out;
}

std::vector<double> box_sum(std::vector<double> v, std::array<int, 3> dims, int w)
{
    for (int axis = 0; axis < 3; ++axis)
        v = box_sum_axis(v, dims, axis, w);
    return v;
}

}  // namespace

double psnr(const Volume& gt, const Volume& pred, std::optional<double> data_range)
{
    require_same_dims(gt, pred);
    const double range = resolve_range(gt, data_range);
    double sse = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - static_cast<double>(gt.data[i]);
        sse += d * d;
    }
    if (sse == 0.0)
        return kPsnrIdentical;
    const double rmse = std::sqrt(sse / static_cast<double>(gt.size()));
    return 20.0 * std::log10(range / rmse);
}

double ssim(const Volume& gt, const Volume& pred, std::optional<double> data_range)
{
    require_same_dims(gt, pred);
    for (int d : gt.dims)
        if (d < kSsimWindow)
            throw std::invalid_argument("SSIM needs every dimension >= " + std::to_string(kSsimWindow));
    const double range = resolve_range(gt, data_range);
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);

    const std::size_t n = gt.size();
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = gt.data[i];
        y[i] = pred.data[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const int w = kSsimWindow;
    const double inv = 1.0 / (static_cast<double>(w) * w * w);
    const auto sx = box_sum(std::move(x), gt.dims, w);
    const auto sy = box_sum(std::move(y), gt.dims, w);
    const auto sxx = box_sum(std::move(xx), gt.dims, w);
    const auto syy = box_sum(std::move(yy), gt.dims, w);
    const auto sxy = box_sum(std::move(xy), gt.dims, w);

    double total = 0.0;
    for (std::size_t i = 0; i < sx.size(); ++i) {
        const double mx = sx[i] * inv;
        const double my = sy[i] * inv;
        const double vx = sxx[i] * inv - mx * mx;
        const double vy = syy[i] * inv - my * my;
        const double cxy = sxy[i] * inv - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    return total / static_cast<double>(sx.size());
}

Overlap iou_dice(const Volume& gt, const Volume& pred, double threshold)
{
    require_same_dims(gt, pred);
    std::size_t a = 0, b = 0, both = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const bool in_a = gt.data[i] >= threshold;
        const bool in_b = pred.data[i] >= threshold;
        a += in_a;
        b += in_b;
        both += in_a && in_b;
    }
    const std::size_t uni = a + b - both;
    if (uni == 0)
        return {1.0, 1.0};
    return {static_cast<double>(both) / static_cast<double>(uni),
            2.0 * static_cast<double>(both) / static_cast<double>(a + b)};
}

MetricReport evaluate(const Volume& gt, const Volume& pred, std::optional<double> threshold,
                      std::optional<double> data_range)
{
    MetricReport r;
    r.data_range_used = resolve_range(gt, data_range);
    r.threshold_used = threshold ? *threshold : 0.5 * *std::max_element(gt.data.begin(), gt.data.end());
    r.psnr_db = psnr(gt, pred, r.data_range_used);
    r.ssim = ssim(gt, pred, r.data_range_used);
    const Overlap o = iou_dice(gt, pred, r.threshold_used);
    r.iou = o.iou;
    r.dice = o.dice;
    return r;
}

}  // namespace rmct

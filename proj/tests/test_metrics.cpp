#include "rmct/metrics.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace rmct;
using namespace rmct::test;

TEST_SUITE("metrics")
{
    TEST_CASE("psnr closed forms")
    {
        Pcg32 rng(1, 1);
        Volume gt = random_volume(rng, {8, 8, 8}, unit_box());
        gt.data[0] = 0.0f;
        gt.data[1] = 1.0f;
        Volume pred = gt;
        CHECK(psnr(gt, pred) == kPsnrIdentical);
        for (auto& x : pred.data)
            x += 0.1f;
        CHECK(psnr(gt, pred, 1.0) == doctest::Approx(20.0).epsilon(1e-6));

        Volume g2 = gt, p2 = pred;
        for (auto& x : g2.data)
            x *= 2.0f;
        for (auto& x : p2.data)
            x *= 2.0f;
        CHECK(psnr(g2, p2, 2.0) == doctest::Approx(psnr(gt, pred, 1.0)).epsilon(1e-9));
    }

    TEST_CASE("psnr errors")
    {
        const Volume a(Dims{4, 4, 4}, {1, 1, 1}, {0, 0, 0}, 1.0f);
        const Volume b(Dims{4, 4, 5}, {1, 1, 1}, {0, 0, 0}, 1.0f);
        CHECK_THROWS_AS(psnr(a, b), std::invalid_argument);
        Volume c = a;
        c.data[3] = 2.0f;
        CHECK_THROWS_AS(psnr(a, c), std::invalid_argument);
        CHECK_NOTHROW(psnr(a, c, 1.0));
    }

    TEST_CASE("psnr decreases with noise amplitude")
    {
        const Volume gt = builtin_phantom("blocks", {16, 16, 16});
        double previous = kPsnrIdentical;
        for (double amp : {0.01, 0.05, 0.1}) {
            Pcg32 rng(3, 3);
            Volume p = gt;
            for (auto& x : p.data)
                x += static_cast<float>(amp * (2 * rng.uniform() - 1));
            const double v = psnr(gt, p);
            CHECK(v < previous);
            previous = v;
        }
    }

    TEST_CASE("ssim identities")
    {
        Pcg32 rng(2, 2);
        const Volume gt = random_volume(rng, {9, 10, 11}, unit_box());
        CHECK(ssim(gt, gt) == 1.0);
        const Volume other = random_volume(rng, {9, 10, 11}, unit_box());
        const double s = ssim(gt, other);
        CHECK(s < 1.0);
        CHECK(s >= -1.0);
        CHECK(ssim(gt, other, 1.0) == doctest::Approx(ssim(other, gt, 1.0)).epsilon(1e-12));
        const Volume small(Dims{6, 9, 9}, {1, 1, 1}, {0, 0, 0});
        CHECK_THROWS_AS(ssim(small, small, 1.0), std::invalid_argument);
    }

    TEST_CASE("ssim of a constant prediction on blocks is near zero")
    {
        const Volume gt = builtin_phantom("blocks", {32, 32, 32});
        double mean = 0.0;
        for (float x : gt.data)
            mean += x;
        mean /= static_cast<double>(gt.size());
        const Volume flat(gt.dims, gt.spacing, gt.origin, static_cast<float>(mean));
        CHECK(ssim(gt, flat) < 0.1);
    }

    TEST_CASE("ssim on a single window matches a direct evaluation")
    {
        Pcg32 rng(6, 6);
        const Volume a = random_volume(rng, {7, 7, 7}, unit_box());
        const Volume b = random_volume(rng, {7, 7, 7}, unit_box());
        double ma = 0, mb = 0;
        const double n = 343.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            ma += a.data[i];
            mb += b.data[i];
        }
        ma /= n;
        mb /= n;
        double va = 0, vb = 0, cab = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            va += (a.data[i] - ma) * (a.data[i] - ma);
            vb += (b.data[i] - mb) * (b.data[i] - mb);
            cab += (a.data[i] - ma) * (b.data[i] - mb);
        }
        va /= n;
        vb /= n;
        cab /= n;
        const double c1 = 1e-4, c2 = 9e-4;
        const double want = (2 * ma * mb + c1) * (2 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        CHECK(ssim(a, b, 1.0) == doctest::Approx(want).epsilon(1e-9));
    }

    TEST_CASE("iou and dice on constructed masks")
    {
        Volume a(Dims{4, 1, 1}, {1, 1, 1}, {0, 0, 0});
        Volume b = a;
        a.data = {1, 1, 0, 0};
        b.data = {0, 1, 1, 0};
        Overlap o = iou_dice(a, b, 0.5);
        CHECK(o.iou == doctest::Approx(1.0 / 3));
        CHECK(o.dice == doctest::Approx(0.5));

        o = iou_dice(a, a, 0.5);
        CHECK(o.iou == 1.0);
        CHECK(o.dice == 1.0);

        b.data = {0, 0, 1, 1};
        o = iou_dice(a, b, 0.5);
        CHECK(o.iou == 0.0);
        CHECK(o.dice == 0.0);

        const Volume zero(Dims{4, 1, 1}, {1, 1, 1}, {0, 0, 0});
        o = iou_dice(zero, zero, 0.5);
        CHECK(o.iou == 1.0);
        CHECK(o.dice == 1.0);

        // threshold is inclusive
        Volume t = a;
        t.data = {0.5f, 0.49f, 0, 0};
        Volume u = t;
        u.data = {0.5f, 0, 0, 0};
        CHECK(iou_dice(t, u, 0.5).iou == 1.0);
    }

    TEST_CASE("property: dice equals 2 iou / (1 + iou)")
    {
        Pcg32 rng(9, 9);
        for (int trial = 0; trial < 1000; ++trial) {
            const Dims d{1 + static_cast<int>(rng.bounded(8)), 1 + static_cast<int>(rng.bounded(8)),
                         1 + static_cast<int>(rng.bounded(8))};
            const double pa = rng.uniform(), pb = rng.uniform();
            Volume a(d, {1, 1, 1}, {0, 0, 0}), b(d, {1, 1, 1}, {0, 0, 0});
            for (auto& x : a.data)
                x = rng.uniform() < pa ? 1.0f : 0.0f;
            for (auto& x : b.data)
                x = rng.uniform() < pb ? 1.0f : 0.0f;
            const Overlap o = iou_dice(a, b, 0.5);
            CHECK(std::abs(o.dice - 2 * o.iou / (1 + o.iou)) <= 1e-15);
        }
    }

    TEST_CASE("evaluate reports the threshold and range it used")
    {
        const Volume gt = builtin_phantom("blocks", {16, 16, 16});
        const MetricReport r = evaluate(gt, gt);
        CHECK(r.psnr_db == kPsnrIdentical);
        CHECK(r.ssim == 1.0);
        CHECK(r.iou == 1.0);
        CHECK(r.threshold_used == doctest::Approx(0.5));
        CHECK(r.data_range_used == doctest::Approx(1.0));
        const MetricReport r2 = evaluate(gt, gt, 0.2, 2.0);
        CHECK(r2.threshold_used == 0.2);
        CHECK(r2.data_range_used == 2.0);
    }
}

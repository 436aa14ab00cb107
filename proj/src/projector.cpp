#include "rmct/projector.hpp"

#include "rmct/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace rmct {

ProjectionSet::ProjectionSet(const ScanGeometry& g, float fill) : geom(g)
{
    data.assign(static_cast<std::size_t>(g.total_pixels()), fill);
}

std::span<float> ProjectionSet::view(int k)
{
    const auto n = static_cast<std::size_t>(geom.pixels_per_view());
    return {data.data() + n * k, n};
}

std::span<const float> ProjectionSet::view(int k) const
{
    const auto n = static_cast<std::size_t>(geom.pixels_per_view());
    return {data.data() + n * k, n};
}

Ray ray_for_index(const ScanGeometry& geom, long long pixel)
{
    const int per_view = geom.pixels_per_view();
    const int view = static_cast<int>(pixel / per_view);
    const int within = static_cast<int>(pixel % per_view);
    return ray_for_pixel(geom, view, within / geom.detector_cols, within % geom.detector_cols);
}

double default_step(const Vec3& spacing)
{
    return 0.5 * std::min({spacing.x, spacing.y, spacing.z});
}

double project_ray(const Volume& vol, const Ray& ray, double step)
{
    if (!(step > 0.0))
        throw std::invalid_argument("projection step must be positive");
    double acc = 0.0;
    for_each_midpoint(ray, step, [&](const Vec3& p, double w) {
        const TrilinearStencil st = trilinear_stencil(vol, p);
        double v = 0.0;
        for (int c = 0; c < st.count; ++c)
            v += st.weight[c] * vol.data[st.index[c]];
        acc += w * v;
    });
    return acc;
}

ProjectionSet forward_project(const Volume& vol, const ScanGeometry& geom, double step, int threads)
{
    if (!(step > 0.0))
        throw std::invalid_argument("projection step must be positive");
    ProjectionSet out(geom);
    parallel_for(out.data.size(), threads, [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t i = begin; i < end; ++i)
            out.data[i] = static_cast<float>(project_ray(vol, ray_for_index(geom, static_cast<long long>(i)), step));
    });
    return out;
}

Volume backproject(const ProjectionSet& p, const Dims& dims, const Vec3& spacing, const Vec3& origin, double step,
                   int threads)
{
    if (!(step > 0.0))
        throw std::invalid_argument("projection step must be positive");
    Volume out(dims, spacing, origin);
    const int workers = std::max(1, threads);
    std::vector<std::vector<double>> partial(static_cast<std::size_t>(workers));

    parallel_for(p.data.size(), workers, [&](std::size_t begin, std::size_t end, int worker) {
        auto& acc = partial[static_cast<std::size_t>(worker)];
        acc.assign(out.size(), 0.0);
        for (std::size_t i = begin; i < end; ++i) {
            const double value = p.data[i];
            if (value == 0.0)
                continue;
            const Ray ray = ray_for_index(p.geom, static_cast<long long>(i));
            for_each_midpoint(ray, step, [&](const Vec3& x, double w) {
                const TrilinearStencil st = trilinear_stencil(out, x);
                for (int c = 0; c < st.count; ++c)
                    acc[st.index[c]] += value * w * st.weight[c];
            });
        }
    });

    for (std::size_t v = 0; v < out.size(); ++v) {
        double sum = 0.0;
        for (const auto& acc : partial)
            if (!acc.empty())
                sum += acc[v];
        out.data[v] = static_cast<float>(sum);
    }
    return out;
}

ProjectionSet add_noise(const ProjectionSet& p, double photon_count, Pcg32& rng)
{
    if (!(photon_count > 0.0))
        throw std::invalid_argument("photon count must be positive");
    ProjectionSet out = p;
    for (auto& q : out.data) {
        const double mean = photon_count * std::exp(-static_cast<double>(q));
        long long drawn = 0;
        if (mean > 0.0) {
            std::poisson_distribution<long long> poisson(mean);
            drawn = poisson(rng);
        }
        const auto counts = static_cast<double>(std::max<long long>(drawn, 1));
        q = static_cast<float>(-std::log(counts / photon_count));
    }
    return out;
}

}  // namespace rmct

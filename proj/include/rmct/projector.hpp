#pragma once

#include "rmct/geometry.hpp"
#include "rmct/prng.hpp"
#include "rmct/volume.hpp"

#include <span>
#include <vector>

namespace rmct {

/// Post-log projections: every value is a line integral of attenuation.
/// `data` holds n_views images of rows x cols, row-major, view after view.
struct ProjectionSet {
    ScanGeometry geom;
    std::vector<float> data;

    ProjectionSet() = default;
    explicit ProjectionSet(const ScanGeometry& g, float fill = 0.0f);

    std::span<float> view(int k);
    std::span<const float> view(int k) const;
    float& at(int view, int row, int col)
    {
        return data[(static_cast<std::size_t>(view) * geom.detector_rows + row) * geom.detector_cols + col];
    }
    float at(int view, int row, int col) const
    {
        return data[(static_cast<std::size_t>(view) * geom.detector_rows + row) * geom.detector_cols + col];
    }
};

/// Flat pixel index -> (view, row, col) and the corresponding ray.
Ray ray_for_index(const ScanGeometry& geom, long long pixel);

/// Midpoint-rule sample positions along [t_min, t_max]: full steps, then one
/// shorter step weighted by its own length.
template <typename F>
void for_each_midpoint(const Ray& ray, double step, F&& fn)
{
    const double length = ray.t_max - ray.t_min;
    if (!(length > 0.0))
        return;
    const auto full = static_cast<long long>(length / step);
    for (long long k = 0; k < full; ++k)
        fn(ray.at(ray.t_min + (static_cast<double>(k) + 0.5) * step), step);
    const double rest = length - static_cast<double>(full) * step;
    if (rest > 0.0)
        fn(ray.at(ray.t_min + static_cast<double>(full) * step + 0.5 * rest), rest);
}

double project_ray(const Volume& vol, const Ray& ray, double step);

ProjectionSet forward_project(const Volume& vol, const ScanGeometry& geom, double step, int threads = 1);

/// Exact transpose of forward_project on a volume with the given lattice.
/// Workers accumulate into private buffers merged in worker order.
Volume backproject(const ProjectionSet& p, const Dims& dims, const Vec3& spacing, const Vec3& origin, double step,
                   int threads = 1);

/// Poisson counting noise at `photon_count` unattenuated photons per pixel.
ProjectionSet add_noise(const ProjectionSet& p, double photon_count, Pcg32& rng);

/// Half the smallest voxel spacing.
double default_step(const Vec3& spacing);

}  // namespace rmct

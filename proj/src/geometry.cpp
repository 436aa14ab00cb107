#include "rmct/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace rmct {

void validate(const ScanGeometry& g)
{
    if (g.n_views < 1)
        throw std::invalid_argument("n_views must be >= 1, got " + std::to_string(g.n_views));
    if (!(g.source_to_isocenter > 0.0))
        throw std::invalid_argument("source_to_isocenter must be positive");
    if (!(g.source_to_detector > g.source_to_isocenter))
        throw std::invalid_argument("source_to_detector must exceed source_to_isocenter");
    if (g.detector_rows < 1 || g.detector_cols < 1)
        throw std::invalid_argument("detector rows/cols must be >= 1");
    if (!(g.pixel_pitch_u > 0.0) || !(g.pixel_pitch_v > 0.0))
        throw std::invalid_argument("pixel pitch must be positive");
    if (!std::isfinite(g.angular_range))
        throw std::invalid_argument("angular_range must be finite");
    const Aabb& b = g.volume_bounds;
    if (!is_finite(b.min) || !is_finite(b.max) || b.min.x > b.max.x || b.min.y > b.max.y || b.min.z > b.max.z)
        throw std::invalid_argument("volume_bounds must be finite with min <= max");
    const Vec3 e = b.extent();
    if (!(g.source_to_isocenter > 0.5 * std::hypot(e.x, e.y)))
        throw std::invalid_argument("source orbit must stay outside the volume");
}

ScanGeometry make_circular_geometry(int n_views, double sid, double sdd, int rows, int cols,
                                    double pitch_u, double pitch_v, const Aabb& bounds,
                                    double angular_range)
{
    ScanGeometry g;
    g.n_views = n_views;
    g.source_to_isocenter = sid;
    g.source_to_detector = sdd;
    g.detector_rows = rows;
    g.detector_cols = cols;
    g.pixel_pitch_u = pitch_u;
    g.pixel_pitch_v = pitch_v;
    g.angular_range = angular_range;
    g.volume_bounds = bounds;
    validate(g);
    return g;
}

double view_angle(const ScanGeometry& geom, int view)
{
    return geom.angular_range * static_cast<double>(view) / static_cast<double>(geom.n_views);
}

Vec3 source_position(const ScanGeometry& geom, int view)
{
    const double a = view_angle(geom, view);
    const Vec3 c = geom.volume_bounds.center();
    return c + geom.source_to_isocenter * Vec3{std::cos(a), std::sin(a), 0.0};
}

Vec3 pixel_center(const ScanGeometry& geom, int view, int row, int col)
{
    const double a = view_angle(geom, view);
    const Vec3 radial{std::cos(a), std::sin(a), 0.0};
    const Vec3 u_axis{-std::sin(a), std::cos(a), 0.0};
    const Vec3 v_axis{0.0, 0.0, 1.0};
    const double u = (col - 0.5 * (geom.detector_cols - 1)) * geom.pixel_pitch_u;
    const double v = (row - 0.5 * (geom.detector_rows - 1)) * geom.pixel_pitch_v;
    const Vec3 det_center = geom.volume_bounds.center() - (geom.source_to_detector - geom.source_to_isocenter) * radial;
    return det_center + u * u_axis + v * v_axis;
}

Ray ray_for_pixel(const ScanGeometry& geom, int view, int row, int col)
{
    if (view < 0 || view >= geom.n_views)
        throw std::invalid_argument("view index " + std::to_string(view) + " out of range");
    if (row < 0 || row >= geom.detector_rows)
        throw std::invalid_argument("row index " + std::to_string(row) + " out of range");
    if (col < 0 || col >= geom.detector_cols)
        throw std::invalid_argument("col index " + std::to_string(col) + " out of range");

    Ray ray;
    ray.origin = source_position(geom, view);
    ray.direction = normalized(pixel_center(geom, view, row, col) - ray.origin);
    if (auto hit = ray_aabb_intersect(ray, geom.volume_bounds)) {
        ray.t_min = std::max(0.0, hit->t_near);
        ray.t_max = std::max(ray.t_min, hit->t_far);
    }
    return ray;
}

std::optional<Hit> ray_aabb_intersect(const Ray& ray, const Aabb& box)
{
    double t_near = -std::numeric_limits<double>::max();
    double t_far = std::numeric_limits<double>::max();
    for (int axis = 0; axis < 3; ++axis) {
        const double o = ray.origin[axis];
        const double d = ray.direction[axis];
        if (d == 0.0) {
            if (o < box.min[axis] || o > box.max[axis])
                return std::nullopt;
            continue;
        }
        double t0 = (box.min[axis] - o) / d;
        double t1 = (box.max[axis] - o) / d;
        if (t0 > t1)
            std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
        if (t_near > t_far)
            return std::nullopt;
    }
    return Hit{t_near, t_far};
}

ScanGeometry default_geometry(int n_views, int rows, int cols, const Aabb& bounds)
{
    const Vec3 ext = bounds.extent();
    const double radius = 0.5 * norm(ext);
    const double radius_xy = 0.5 * std::hypot(ext.x, ext.y);
    const double sid = 3.0 * radius;
    const double sdd = 6.0 * radius;
    // u covers the bounding cylinder at every angle; v covers the nearest corner's magnified height
    const double half_u = sdd * std::tan(std::asin(radius_xy / sid));
    const double half_v = 0.5 * ext.z * sdd / (sid - radius_xy);
    return make_circular_geometry(n_views, sid, sdd, rows, cols, 2.0 * half_u / cols, 2.0 * half_v / rows, bounds);
}

}  // namespace rmct

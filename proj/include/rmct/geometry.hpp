#pragma once

#include <cmath>
#include <numbers>
#include <optional>

namespace rmct {

/// World-space vector in millimetres.
struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr double& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
    constexpr double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }

    constexpr Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    constexpr Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    constexpr Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
    friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
    friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
    friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
    friend constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
    friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b)
{
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) { return a * (1.0 / norm(a)); }
inline bool is_finite(const Vec3& a) { return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z); }

struct Aabb {
    Vec3 min;
    Vec3 max;

    Vec3 center() const { return 0.5 * (min + max); }
    Vec3 extent() const { return max - min; }
    bool contains(const Vec3& p) const
    {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z;
    }
    friend bool operator==(const Aabb&, const Aabb&) = default;
};

/// Half-line origin + t * direction restricted to [t_min, t_max].
struct Ray {
    Vec3 origin;
    Vec3 direction;
    double t_min = 0.0;
    double t_max = 0.0;

    Vec3 at(double t) const { return origin + t * direction; }
    double length() const { return t_max - t_min; }
    bool empty() const { return !(t_max > t_min); }
};

/// Circular cone-beam trajectory with a flat-panel detector.
///
/// Sources orbit the centre of `volume_bounds` in the plane z = centre.z.
/// For view k at angle theta the source sits at centre + sid * (cos, sin, 0),
/// the detector centre at centre - (sdd - sid) * (cos, sin, 0). The detector
/// u-axis is the circle tangent (-sin, cos, 0) and v is +z. Pixel (row, col)
/// lies at u = (col - (cols-1)/2) * pitch_u, v = (row - (rows-1)/2) * pitch_v.
struct ScanGeometry {
    int n_views = 1;
    double source_to_isocenter = 0.0;
    double source_to_detector = 0.0;
    int detector_rows = 1;
    int detector_cols = 1;
    double pixel_pitch_u = 1.0;
    double pixel_pitch_v = 1.0;
    double angular_range = 2.0 * std::numbers::pi;
    Aabb volume_bounds;

    int pixels_per_view() const { return detector_rows * detector_cols; }
    long long total_pixels() const { return static_cast<long long>(n_views) * pixels_per_view(); }
    friend bool operator==(const ScanGeometry&, const ScanGeometry&) = default;
};

/// Throws std::invalid_argument when any dimension or distance is out of range.
ScanGeometry make_circular_geometry(int n_views, double sid, double sdd, int rows, int cols,
                                    double pitch_u, double pitch_v, const Aabb& bounds,
                                    double angular_range = 2.0 * std::numbers::pi);

void validate(const ScanGeometry& geom);

double view_angle(const ScanGeometry& geom, int view);
Vec3 source_position(const ScanGeometry& geom, int view);
Vec3 pixel_center(const ScanGeometry& geom, int view, int row, int col);

/// Ray from the source through the pixel centre, clipped to the volume bounds.
/// A ray that misses the bounds has t_min = t_max = 0.
Ray ray_for_pixel(const ScanGeometry& geom, int view, int row, int col);

struct Hit {
    double t_near;
    double t_far;
};

/// Slab test. A zero direction component counts as inside that slab iff the
/// origin lies within it. t_near may be negative for interior origins.
std::optional<Hit> ray_aabb_intersect(const Ray& ray, const Aabb& box);

/// Geometry sized so the detector covers the bounding sphere of `bounds`.
ScanGeometry default_geometry(int n_views, int rows, int cols, const Aabb& bounds);

}  // namespace rmct

#include "rmct/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rmct {

Volume::Volume(Dims d, Vec3 spacing_, Vec3 origin_, float fill)
    : dims(d), spacing(spacing_), origin(origin_)
{
    validate_dims(d);
    data.assign(static_cast<std::size_t>(d[0]) * d[1] * d[2], fill);
}

Aabb Volume::bounds() const
{
    const Vec3 half = 0.5 * spacing;
    const Vec3 last = voxel_center(dims[0] - 1, dims[1] - 1, dims[2] - 1);
    return {origin - half, last + half};
}

void validate_dims(const Dims& dims)
{
    for (int d : dims)
        if (d < 1)
            throw std::invalid_argument("volume dimensions must be >= 1, got " + std::to_string(d));
}

Volume volume_for_bounds(const Aabb& bounds, const Dims& dims)
{
    validate_dims(dims);
    const Vec3 ext = bounds.extent();
    const Vec3 spacing{ext.x / dims[0], ext.y / dims[1], ext.z / dims[2]};
    return Volume(dims, spacing, bounds.min + 0.5 * spacing);
}

bool Ellipsoid::contains(const Vec3& p) const
{
    const Vec3 d = p - center;
    const double c = std::cos(rotation_z);
    const double s = std::sin(rotation_z);
    const double x = c * d.x + s * d.y;
    const double y = -s * d.x + c * d.y;
    const double qx = x / semi_axes.x;
    const double qy = y / semi_axes.y;
    const double qz = d.z / semi_axes.z;
    return qx * qx + qy * qy + qz * qz <= 1.0;
}

bool Cuboid::contains(const Vec3& p) const
{
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z;
}

Volume gen_phantom(const PhantomSpec& spec, const Dims& dims, const Vec3& spacing)
{
    validate_dims(dims);
    for (const auto& e : spec.ellipsoids)
        if (!(e.semi_axes.x > 0.0 && e.semi_axes.y > 0.0 && e.semi_axes.z > 0.0))
            throw std::invalid_argument("ellipsoid semi-axes must be positive");
    if (!(spacing.x > 0.0 && spacing.y > 0.0 && spacing.z > 0.0))
        throw std::invalid_argument("voxel spacing must be positive");

    Volume vol(dims, spacing, spec.bounds.min + 0.5 * spacing);
    for (int k = 0; k < dims[2]; ++k)
        for (int j = 0; j < dims[1]; ++j)
            for (int i = 0; i < dims[0]; ++i) {
                const Vec3 p = vol.voxel_center(i, j, k);
                double sum = 0.0;
                for (const auto& e : spec.ellipsoids)
                    if (e.contains(p))
                        sum += e.density_delta;
                for (const auto& b : spec.cuboids)
                    if (b.contains(p))
                        sum += b.density_delta;
                vol.at(i, j, k) = static_cast<float>(std::max(0.0, sum));
            }
    return vol;
}

Aabb default_phantom_bounds()
{
    return {{-10.0, -10.0, -10.0}, {10.0, 10.0, 10.0}};
}

namespace {

// Builtin phantoms are authored in [-1, 1]^3 and mapped affinely into the bounds.
struct UnitMap {
    Vec3 center;
    Vec3 half;

    Vec3 point(double x, double y, double z) const
    {
        return center + Vec3{x * half.x, y * half.y, z * half.z};
    }
    Vec3 axes(double a, double b, double c) const { return {a * half.x, b * half.y, c * half.z}; }
};

constexpr double deg = std::numbers::pi / 180.0;

PhantomSpec shepp3d(const UnitMap& m)
{
    // Modified (Toft) Shepp-Logan table: A, a, b, x0, y0, phi[deg]
    struct Row { double A, a, b, x0, y0, phi; };
    static constexpr Row table[] = {
        {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
        {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
        {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
        {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
        {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
        {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
        {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
        {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
    };
    // extrusion: a z semi-axis far beyond the box makes each ellipse a cylinder
    constexpr double extruded = 1.0e6;
    PhantomSpec spec;
    for (const auto& r : table)
        spec.ellipsoids.push_back({m.point(r.x0, r.y0, 0.0), m.axes(r.a, r.b, extruded), r.phi * deg, r.A});
    return spec;
}

PhantomSpec jaw(const UnitMap& m)
{
    PhantomSpec spec;
    // soft-tissue background shell, 0.05
    spec.ellipsoids.push_back({m.point(0, 0, 0), m.axes(0.9, 0.9, 0.8), 0.0, 0.05});
    // arch: outer minus an inner ellipsoid shifted back so the U opens posteriorly
    spec.ellipsoids.push_back({m.point(0, 0, 0), m.axes(0.7, 0.6, 0.3), 0.0, 0.75});
    spec.ellipsoids.push_back({m.point(0, -0.25, 0), m.axes(0.55, 0.7, 0.31), 0.0, -0.75});
    // low-density interior inside the U, 0.2
    spec.ellipsoids.push_back({m.point(0, 0.05, 0), m.axes(0.4, 0.35, 0.2), 0.0, 0.15});
    // eight tooth capsules along the arch midline, raising the arch to 1.0
    for (int t = 0; t < 8; ++t) {
        const double angle = (20.0 + 140.0 * t / 7.0) * deg;
        const double x = 0.625 * std::cos(angle);
        const double y = 0.525 * std::sin(angle);
        spec.ellipsoids.push_back({m.point(x, y, 0.05), m.axes(0.05, 0.05, 0.2), 0.0, 0.2});
    }
    return spec;
}

PhantomSpec blocks(const UnitMap& m)
{
    // edges on multiples of 1/8 so they fall on voxel faces for dims divisible by 16
    PhantomSpec spec;
    spec.cuboids.push_back({m.point(-0.75, -0.75, -0.5), m.point(-0.125, 0.25, 0.5), 0.3});
    spec.cuboids.push_back({m.point(0.125, -0.75, -0.625), m.point(0.75, -0.125, 0.25), 0.6});
    spec.cuboids.push_back({m.point(0.0, 0.25, -0.25), m.point(0.625, 0.75, 0.625), 1.0});
    return spec;
}

}  // namespace

PhantomSpec builtin_phantom_spec(std::string_view name, const Aabb& bounds)
{
    const UnitMap m{bounds.center(), 0.5 * bounds.extent()};
    PhantomSpec spec;
    if (name == "jaw")
        spec = jaw(m);
    else if (name == "shepp3d")
        spec = shepp3d(m);
    else if (name == "blocks")
        spec = blocks(m);
    else
        throw std::invalid_argument("unknown phantom name '" + std::string(name) + "' (expected jaw, shepp3d or blocks)");
    spec.bounds = bounds;
    return spec;
}

Volume builtin_phantom(std::string_view name, const Dims& dims, const Aabb& bounds)
{
    validate_dims(dims);
    const Vec3 ext = bounds.extent();
    return gen_phantom(builtin_phantom_spec(name, bounds), dims, {ext.x / dims[0], ext.y / dims[1], ext.z / dims[2]});
}

TrilinearStencil trilinear_stencil(const Volume& vol, const Vec3& p)
{
    TrilinearStencil st;
    const double gx = (p.x - vol.origin.x) / vol.spacing.x;
    const double gy = (p.y - vol.origin.y) / vol.spacing.y;
    const double gz = (p.z - vol.origin.z) / vol.spacing.z;
    if (!(gx > -1.0 && gy > -1.0 && gz > -1.0 && gx < vol.dims[0] && gy < vol.dims[1] && gz < vol.dims[2]))
        return st;
    const int i0 = static_cast<int>(std::floor(gx));
    const int j0 = static_cast<int>(std::floor(gy));
    const int k0 = static_cast<int>(std::floor(gz));
    const double fx = gx - i0;
    const double fy = gy - j0;
    const double fz = gz - k0;
    for (int c = 0; c < 8; ++c) {
        const int i = i0 + (c & 1);
        const int j = j0 + ((c >> 1) & 1);
        const int k = k0 + ((c >> 2) & 1);
        if (i < 0 || j < 0 || k < 0 || i >= vol.dims[0] || j >= vol.dims[1] || k >= vol.dims[2])
            continue;
        const double w = ((c & 1) ? fx : 1.0 - fx) * (((c >> 1) & 1) ? fy : 1.0 - fy) * (((c >> 2) & 1) ? fz : 1.0 - fz);
        st.index[st.count] = vol.index(i, j, k);
        st.weight[st.count] = w;
        ++st.count;
    }
    return st;
}

double sample_trilinear(const Volume& vol, const Vec3& p)
{
    const TrilinearStencil st = trilinear_stencil(vol, p);
    double acc = 0.0;
    for (int c = 0; c < st.count; ++c)
        acc += st.weight[c] * vol.data[st.index[c]];
    return acc;
}

}  // namespace rmct

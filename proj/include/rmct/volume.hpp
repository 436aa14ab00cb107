#pragma once

#include "rmct/geometry.hpp"

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

namespace rmct {

using Dims = std::array<int, 3>;

/// Dense attenuation volume. Values sit at voxel centres; `origin` is the
/// centre of voxel (0,0,0) and data is stored x-fastest.
struct Volume {
    Dims dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin;
    std::vector<float> data;

    Volume() = default;
    Volume(Dims d, Vec3 spacing, Vec3 origin, float fill = 0.0f);

    std::size_t size() const { return data.size(); }
    std::size_t index(int i, int j, int k) const
    {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
    }
    float& at(int i, int j, int k) { return data[index(i, j, k)]; }
    float at(int i, int j, int k) const { return data[index(i, j, k)]; }
    Vec3 voxel_center(int i, int j, int k) const
    {
        return origin + Vec3{i * spacing.x, j * spacing.y, k * spacing.z};
    }
    /// Box spanned by the voxel faces.
    Aabb bounds() const;
};

void validate_dims(const Dims& dims);

/// Volume whose voxels tile `bounds` exactly.
Volume volume_for_bounds(const Aabb& bounds, const Dims& dims);

struct Ellipsoid {
    Vec3 center;
    Vec3 semi_axes;
    double rotation_z = 0.0;
    double density_delta = 0.0;

    bool contains(const Vec3& p) const;
};

struct Cuboid {
    Vec3 min;
    Vec3 max;
    double density_delta = 0.0;

    bool contains(const Vec3& p) const;
};

/// Additive composition of primitives in world coordinates; the summed
/// density is clamped at zero.
struct PhantomSpec {
    Aabb bounds;
    std::vector<Ellipsoid> ellipsoids;
    std::vector<Cuboid> cuboids;
};

Volume gen_phantom(const PhantomSpec& spec, const Dims& dims, const Vec3& spacing);

/// Default world box of the builtin phantoms, in millimetres.
Aabb default_phantom_bounds();

/// Phantom primitives for "jaw", "shepp3d" or "blocks" mapped into `bounds`.
PhantomSpec builtin_phantom_spec(std::string_view name, const Aabb& bounds = default_phantom_bounds());

Volume builtin_phantom(std::string_view name, const Dims& dims, const Aabb& bounds = default_phantom_bounds());

/// The up-to-8 voxels and weights that trilinear interpolation at a point
/// touches. Neighbours outside the grid are dropped (zero padding).
struct TrilinearStencil {
    int count = 0;
    std::array<std::size_t, 8> index{};
    std::array<double, 8> weight{};
};

TrilinearStencil trilinear_stencil(const Volume& vol, const Vec3& p);

/// Trilinear interpolation between voxel centres; neighbours outside the
/// grid count as zero.
double sample_trilinear(const Volume& vol, const Vec3& p);

}  // namespace rmct

#pragma once

#include "rmct/geometry.hpp"
#include "rmct/prng.hpp"
#include "rmct/volume.hpp"

#include <cmath>
#include <filesystem>
#include <string>

namespace rmct::test {

inline double uniform(Pcg32& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

inline Vec3 random_point(Pcg32& rng, const Aabb& box)
{
    return {uniform(rng, box.min.x, box.max.x), uniform(rng, box.min.y, box.max.y), uniform(rng, box.min.z, box.max.z)};
}

inline Vec3 random_direction(Pcg32& rng)
{
    for (;;) {
        const Vec3 v{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
        const double n = norm(v);
        if (n > 1e-3 && n <= 1.0)
            return v * (1.0 / n);
    }
}

inline Volume random_volume(Pcg32& rng, const Dims& dims, const Aabb& bounds, double lo = 0.0, double hi = 1.0)
{
    Volume v = volume_for_bounds(bounds, dims);
    for (auto& x : v.data)
        x = static_cast<float>(uniform(rng, lo, hi));
    return v;
}

inline Aabb unit_box() { return {{-1, -1, -1}, {1, 1, 1}}; }

inline double rel_err(double a, double b, double floor = 1e-12)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("rmct_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace rmct::test

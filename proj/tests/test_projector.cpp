#include "rmct/projector.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace rmct;
using namespace rmct::test;

namespace {

double inner(const std::vector<float>& a, const std::vector<float>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += static_cast<double>(a[i]) * b[i];
    return s;
}

}  // namespace

TEST_SUITE("projector")
{
    TEST_CASE("midpoint rule splits a ray into full steps and one remainder")
    {
        const Ray r{{0, 0, 0}, {1, 0, 0}, 0.0, 1.0};
        std::vector<double> xs, ws;
        for_each_midpoint(r, 0.3, [&](const Vec3& p, double w) {
            xs.push_back(p.x);
            ws.push_back(w);
        });
        REQUIRE(xs.size() == 4);
        CHECK(xs[0] == doctest::Approx(0.15));
        CHECK(xs[2] == doctest::Approx(0.75));
        CHECK(xs[3] == doctest::Approx(0.95));
        CHECK(ws[3] == doctest::Approx(0.1));
        CHECK(std::accumulate(ws.begin(), ws.end(), 0.0) == doctest::Approx(1.0));
    }

    TEST_CASE("constant volume integrates to value times chord length")
    {
        // The lattice extends past the integration box so trilinear sees no padding.
        const Aabb box{{-4, -4, -4}, {4, 4, 4}};
        const Volume v(Dims{24, 24, 24}, {0.5, 0.5, 0.5}, {-5.75, -5.75, -5.75}, 0.7f);
        Pcg32 rng(5, 5);
        for (int trial = 0; trial < 50; ++trial) {
            Ray r{random_point(rng, {{-20, -20, -20}, {20, 20, 20}}), random_direction(rng), 0, 100};
            const auto hit = ray_aabb_intersect(r, box);
            if (!hit || hit->t_far <= std::max(0.0, hit->t_near))
                continue;
            r.t_min = std::max(0.0, hit->t_near);
            r.t_max = hit->t_far;
            CHECK(project_ray(v, r, 0.25) == doctest::Approx(0.7 * r.length()).epsilon(1e-6));
        }
    }

    TEST_CASE("axis-aligned ray through a uniform cube")
    {
        const Aabb b = default_phantom_bounds();
        const ScanGeometry g = default_geometry(4, 5, 5, b);
        PhantomSpec s{b, {}, {{{-5, -5, -5}, {5, 5, 5}, 1.0}}};
        const Volume v = gen_phantom(s, {40, 40, 40}, {0.5, 0.5, 0.5});
        const ProjectionSet p = forward_project(v, g, 0.05);
        // view 0 central pixel travels along -x through the cube: chord 10
        CHECK(p.at(0, 2, 2) == doctest::Approx(10.0).epsilon(0.02));
        CHECK(p.at(1, 2, 2) == doctest::Approx(10.0).epsilon(0.02));
    }

    TEST_CASE("empty volume projects to zero and misses are zero")
    {
        const Aabb b = default_phantom_bounds();
        const Volume v = volume_for_bounds(b, {8, 8, 8});
        const ProjectionSet p = forward_project(v, default_geometry(3, 6, 6, b), 0.5);
        CHECK(std::all_of(p.data.begin(), p.data.end(), [](float x) { return x == 0.0f; }));
        const Ray miss{{0, 0, 0}, {1, 0, 0}, 0, 0};
        CHECK(project_ray(v, miss, 0.5) == 0.0);
    }

    TEST_CASE("adjoint identity on random pairs")
    {
        const Aabb b = default_phantom_bounds();
        const Dims dims{12, 12, 12};
        const ScanGeometry g = default_geometry(6, 10, 10, b);
        const Volume lat = volume_for_bounds(b, dims);
        const double step = default_step(lat.spacing);
        Pcg32 rng(9, 9);
        for (int trial = 0; trial < 3; ++trial) {
            const Volume x = random_volume(rng, dims, b);
            ProjectionSet y(g);
            for (auto& q : y.data)
                q = static_cast<float>(rng.uniform());
            const ProjectionSet ax = forward_project(x, g, step);
            const Volume aty = backproject(y, dims, lat.spacing, lat.origin, step);
            const double lhs = inner(ax.data, y.data);
            const double rhs = inner(x.data, aty.data);
            const double scale = std::sqrt(inner(ax.data, ax.data) * inner(y.data, y.data));
            CHECK(std::abs(lhs - rhs) / scale <= 1e-5);
        }
    }

    TEST_CASE("threads do not change forward or back projections")
    {
        const Aabb b = default_phantom_bounds();
        const Volume v = builtin_phantom("jaw", {12, 12, 12}, b);
        const ScanGeometry g = default_geometry(5, 8, 8, b);
        const ProjectionSet one = forward_project(v, g, 0.4, 1);
        const ProjectionSet three = forward_project(v, g, 0.4, 3);
        CHECK(one.data == three.data);
        const Volume bp1 = backproject(one, v.dims, v.spacing, v.origin, 0.4, 1);
        const Volume bp3 = backproject(one, v.dims, v.spacing, v.origin, 0.4, 3);
        for (std::size_t i = 0; i < bp1.size(); ++i)
            CHECK(bp1.data[i] == doctest::Approx(bp3.data[i]).epsilon(1e-6));
    }

    TEST_CASE("poisson noise is seeded, unbiased at high counts, and rejects bad counts")
    {
        const Aabb b = default_phantom_bounds();
        const ScanGeometry g = default_geometry(2, 16, 16, b);
        ProjectionSet clean(g, 0.5f);
        Pcg32 r1(1, 2), r2(1, 2), r3(2, 2);
        const ProjectionSet n1 = add_noise(clean, 1e4, r1);
        const ProjectionSet n2 = add_noise(clean, 1e4, r2);
        const ProjectionSet n3 = add_noise(clean, 1e4, r3);
        CHECK(n1.data == n2.data);
        CHECK(n1.data != n3.data);
        double mean = 0.0;
        for (float q : n1.data)
            mean += q;
        mean /= static_cast<double>(n1.data.size());
        CHECK(mean == doctest::Approx(0.5).epsilon(0.01));

        Pcg32 r4(1, 2);
        const ProjectionSet precise = add_noise(clean, 1e12, r4);
        for (float q : precise.data)
            CHECK(q == doctest::Approx(0.5).epsilon(1e-4));

        Pcg32 r5(1, 2);
        CHECK_THROWS_AS(add_noise(clean, 0.0, r5), std::invalid_argument);
    }

    TEST_CASE("fully absorbed pixels stay finite")
    {
        const ScanGeometry g = default_geometry(1, 2, 2, default_phantom_bounds());
        ProjectionSet p(g, 200.0f);
        Pcg32 rng(0, 0);
        const ProjectionSet n = add_noise(p, 100.0, rng);
        for (float q : n.data)
            CHECK(q == doctest::Approx(std::log(100.0)));
    }
}

#pragma once

#include "rmct/prng.hpp"
#include "rmct/rda_field.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace rmct::test {

inline FieldConfig tiny_field_config()
{
    FieldConfig c;
    c.levels = 2;
    c.table_log2 = 6;
    c.feats_per_level = 2;
    c.base_res = 2;
    c.growth = 2.0;
    c.width = 8;
    c.heads = 2;
    c.blocks = 2;
    return c;
}

/// Field with every parameter drawn at O(1) scale so all nonlinearities are exercised.
inline RdaField<double> randomized_field(const FieldConfig& cfg, std::uint64_t seed)
{
    RdaField<double> f(cfg, {{-1, -1, -1}, {1, 1, 1}}, seed);
    Pcg32 rng(seed, 99);
    auto p = f.parameters();
    for (std::size_t i = 0; i < p.size(); ++i)
        p[i] = (2.0 * rng.uniform() - 1.0) * (i < f.layout().in_w ? 1.0 : 0.6);
    return f;
}

struct GradProblem {
    std::vector<Vec3> points;
    std::vector<double> weights;  ///< loss = sum_i weights_i * density_i
};

inline GradProblem random_problem(Pcg32& rng, int n)
{
    GradProblem g;
    for (int i = 0; i < n; ++i) {
        g.points.push_back({2 * rng.uniform() - 1, 2 * rng.uniform() - 1, 2 * rng.uniform() - 1});
        g.weights.push_back(2 * rng.uniform() - 1);
    }
    return g;
}

inline double problem_loss(const RdaField<double>& f, const GradProblem& g)
{
    std::vector<double> d(g.points.size());
    f.query_densities(g.points, d);
    double l = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i)
        l += g.weights[i] * d[i];
    return l;
}

inline std::vector<double> problem_gradient(const RdaField<double>& f, const GradProblem& g)
{
    RayTape<double> tape;
    std::vector<double> d(g.points.size());
    f.query_densities(g.points, d, &tape);
    std::vector<double> grad(f.parameter_count(), 0.0);
    f.backward(tape, g.weights, grad);
    return grad;
}

inline double central_difference(RdaField<double>& f, const GradProblem& g, std::size_t index, double h)
{
    auto p = f.parameters();
    const double keep = p[index];
    p[index] = keep + h;
    const double up = problem_loss(f, g);
    p[index] = keep - h;
    const double down = problem_loss(f, g);
    p[index] = keep;
    return (up - down) / (2.0 * h);
}

inline double grad_rel_error(double analytic, double numeric)
{
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Parameter slot (tensor name) holding flat index i.
inline std::string slot_of(const ParamLayout& lay, std::size_t i)
{
    for (const auto& s : lay.slots)
        if (i >= s.offset && i < s.offset + s.count())
            return s.name;
    return "?";
}

}  // namespace rmct::test

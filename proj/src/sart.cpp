#include "rmct/sart.hpp"

#include <algorithm>
#include <stdexcept>

namespace rmct {

namespace {
constexpr double kGuard = 1e-8;

double resolve_step(const SartConfig& cfg, const Volume& lattice)
{
    return cfg.step > 0.0 ? cfg.step : default_step(lattice.spacing);
}
}  // namespace

void SartConfig::validate() const
{
    if (iterations < 1)
        throw std::invalid_argument("SART iterations must be >= 1");
    if (!(relaxation > 0.0 && relaxation < 2.0))
        throw std::invalid_argument("SART relaxation must lie in (0, 2)");
}

SartWeights sart_weights(const ScanGeometry& geom, const Volume& lattice, const SartConfig& cfg)
{
    SartWeights w;
    w.step = resolve_step(cfg, lattice);
    const Volume ones(lattice.dims, lattice.spacing, lattice.origin, 1.0f);
    w.row_sum = forward_project(ones, geom, w.step, cfg.threads);
    const ProjectionSet unit(geom, 1.0f);
    w.col_sum = backproject(unit, lattice.dims, lattice.spacing, lattice.origin, w.step, cfg.threads);
    return w;
}

Volume sart_iterate(const Volume& x, const ProjectionSet& p, const SartConfig& cfg)
{
    return sart_iterate(x, p, cfg, sart_weights(p.geom, x, cfg));
}

Volume sart_iterate(const Volume& x, const ProjectionSet& p, const SartConfig& cfg, const SartWeights& weights)
{
    cfg.validate();
    ProjectionSet residual = forward_project(x, p.geom, weights.step, cfg.threads);
    for (std::size_t i = 0; i < residual.data.size(); ++i) {
        const double rs = weights.row_sum.data[i];
        residual.data[i] = rs > kGuard ? static_cast<float>((p.data[i] - residual.data[i]) / rs) : 0.0f;
    }
    const Volume correction = backproject(residual, x.dims, x.spacing, x.origin, weights.step, cfg.threads);
    Volume next = x;
    for (std::size_t v = 0; v < next.size(); ++v) {
        const double cs = weights.col_sum.data[v];
        double value = next.data[v];
        if (cs > kGuard)
            value += cfg.relaxation * correction.data[v] / cs;
        if (cfg.nonneg_clamp)
            value = std::max(0.0, value);
        next.data[v] = static_cast<float>(value);
    }
    return next;
}

Volume sart_reconstruct(const ProjectionSet& p, const Dims& dims, const Vec3& spacing, const Vec3& origin,
                        const SartConfig& cfg)
{
    cfg.validate();
    Volume x(dims, spacing, origin);
    const SartWeights weights = sart_weights(p.geom, x, cfg);
    for (int it = 0; it < cfg.iterations; ++it)
        x = sart_iterate(x, p, cfg, weights);
    return x;
}

}  // namespace rmct

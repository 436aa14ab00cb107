#pragma once

#include "rmct/projector.hpp"
#include "rmct/volume.hpp"

namespace rmct {

struct SartConfig {
    int iterations = 20;
    double relaxation = 1.0;
    bool nonneg_clamp = true;
    double step = 0.0;  ///< projector step; <= 0 picks half the smallest voxel spacing
    int threads = 1;

    void validate() const;
};

/// Ray and voxel normalisers of the projector pair on one lattice.
struct SartWeights {
    ProjectionSet row_sum;  ///< A applied to an all-ones volume
    Volume col_sum;         ///< A^T applied to all-ones projections
    double step = 0.0;
};

SartWeights sart_weights(const ScanGeometry& geom, const Volume& lattice, const SartConfig& cfg);

/// One simultaneous sweep over all views:
///   x <- x + lambda * (A^T ((p - A x) / row_sum)) / col_sum
/// Divisions by sums below 1e-8 contribute nothing.
Volume sart_iterate(const Volume& x, const ProjectionSet& p, const SartConfig& cfg);
Volume sart_iterate(const Volume& x, const ProjectionSet& p, const SartConfig& cfg, const SartWeights& weights);

/// x0 = 0 followed by cfg.iterations sweeps.
Volume sart_reconstruct(const ProjectionSet& p, const Dims& dims, const Vec3& spacing, const Vec3& origin,
                        const SartConfig& cfg);

}  // namespace rmct

#pragma once

#include "rmct/geometry.hpp"
#include "rmct/prng.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace rmct {

/// Coarse occupancy of the reconstruction box. A cell is occupied while its
/// exponential moving average of field density exceeds the threshold.
struct OccupancyGrid {
    std::array<int, 3> res{1, 1, 1};
    Aabb bounds;
    std::vector<std::uint8_t> occupancy;
    std::vector<float> ema_density;
    double threshold = 0.0;
    double running_max = 0.0;
    int refreshes = 0;

    std::size_t cell_count() const { return occupancy.size(); }
    std::size_t index(int i, int j, int k) const
    {
        return static_cast<std::size_t>(i) + static_cast<std::size_t>(res[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(res[1]) * k);
    }
    bool occupied(int i, int j, int k) const { return occupancy[index(i, j, k)] != 0; }
    Vec3 cell_size() const;
    Vec3 cell_center(int i, int j, int k) const;
    double occupied_fraction() const;
    /// Cell containing p (clamped to the grid).
    std::array<int, 3> cell_of(const Vec3& p) const;
};

/// Batched density evaluation: fills out[i] with the density at points[i].
using DensityQuery = std::function<void(std::span<const Vec3> points, std::span<double> out)>;

/// Fully occupied grid with every EMA at 1, the state before any training.
OccupancyGrid make_occupancy_grid(const std::array<int, 3>& res, const Aabb& bounds);

/// Two query points per cell: the centre, then one uniformly jittered point.
std::vector<Vec3> occupancy_query_points(const OccupancyGrid& grid, Pcg32& rng);

/// Folds densities at occupancy_query_points into the EMA and re-thresholds.
void fold_occupancy(OccupancyGrid& grid, std::span<const double> densities, double tau, double ema_factor);

/// Largest density among occupancy query results (0 for none).
double max_density(std::span<const double> densities);

/// One refresh: each cell's density is the max over its centre and one
/// jittered point; ema <- (1 - ema_factor) * ema + ema_factor * density;
/// occupancy <- ema > tau.
void refresh_occupancy(OccupancyGrid& grid, const DensityQuery& query, double tau, double ema_factor, Pcg32& rng);

/// Fresh grid plus one refresh.
OccupancyGrid build_occupancy(const DensityQuery& query, const std::array<int, 3>& res, const Aabb& bounds,
                              double tau, double ema_factor, Pcg32& rng);

struct Interval {
    double enter;
    double exit;
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Amanatides-Woo walk over [ray.t_min, ray.t_max], merging runs of occupied
/// cells into maximal intervals.
std::vector<Interval> traverse_occupied(const OccupancyGrid& grid, const Ray& ray);

/// Arc-length parameterisation of a sorted union of disjoint intervals.
class IntervalUnion {
public:
    explicit IntervalUnion(std::vector<Interval> intervals);

    double total_length() const { return cumulative_.back(); }
    std::size_t size() const { return intervals_.size(); }
    const std::vector<Interval>& intervals() const { return intervals_; }
    /// Interval holding arc length s; a value on a shared boundary belongs to the later interval.
    std::size_t segment_of(double s) const;
    double segment_end(std::size_t segment) const { return cumulative_[segment + 1]; }
    double segment_begin(std::size_t segment) const { return cumulative_[segment]; }
    double to_ray(double s) const;

private:
    std::vector<Interval> intervals_;
    std::vector<double> cumulative_;
};

struct CoarseSamples {
    std::vector<double> t;      ///< one sample per stratum, ray parameter
    std::vector<double> z;      ///< n1 + 1 stratum edges, ray parameter
    std::vector<double> arc_t;  ///< the same samples as arc length over the union
    std::vector<double> arc_z;  ///< the same edges as arc length
};

/// Equal-measure strata over the union; sample i sits at (i + u[i]) * L / n1.
CoarseSamples stratified_coarse(const std::vector<Interval>& intervals, int n1, std::span<const double> u);
CoarseSamples stratified_coarse(const std::vector<Interval>& intervals, int n1, Pcg32& rng);

struct DensityPdf {
    std::vector<double> pdf;
    std::vector<double> cdf;
};

/// pdf_i = (w_i + eps) / sum(w_j + eps); the inclusive cdf ends at exactly 1.
DensityPdf density_pdf(std::span<const double> w, double eps = 1e-8);

/// Systematic resampling of n2 points over segments [z_i, z_{i+1}].
///
/// The segment of sample k is found by inverting the cdf at (k + v) / n2.
/// Inside its segment the sample is placed at
///   z_i + frac(v + k / n2) * (z_{i+1} - z_i)
/// with the sample's global index k. Output is sorted.
std::vector<double> systematic_fine(std::span<const double> z, std::span<const double> pdf, int n2, double v);

/// Segment chosen for each systematic position, in k order.
std::vector<std::size_t> systematic_allocation(std::span<const double> cdf, int n2, double v);

/// Ordered samples along one ray with per-sample quadrature lengths.
struct SampleSet {
    std::vector<double> t_values;
    std::vector<double> deltas;
    std::vector<int> segment_ids;
    std::vector<std::uint8_t> is_fine;  ///< 1 where the sample came from systematic resampling
    int coarse_count = 0;
    int fine_count = 0;

    std::size_t size() const { return t_values.size(); }
    bool empty() const { return t_values.empty(); }
};

/// Densities at ray parameters t (one per entry).
using CoarseDensityProvider = std::function<void(std::span<const double> t, std::span<double> w)>;

struct HybridOptions {
    int n1 = 32;
    int n2 = 32;
    /// Use the occupied intervals, not the coarse strata, as resampling segments.
    bool intervals_as_segments = false;
};

/// Occupancy traversal, stratified coarse samples, density pdf and
/// systematic fine resampling merged into one sorted SampleSet.
SampleSet hybrid_sample(const OccupancyGrid& grid, const CoarseDensityProvider& density_at_coarse, const Ray& ray,
                        const HybridOptions& options, Pcg32& rng);

/// n stratified samples over the whole [t_min, t_max] range.
SampleSet uniform_sample(const Ray& ray, int n, Pcg32& rng);

}  // namespace rmct

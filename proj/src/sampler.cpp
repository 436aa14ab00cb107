#include "rmct/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace rmct {

Vec3 OccupancyGrid::cell_size() const
{
    const Vec3 e = bounds.extent();
    return {e.x / res[0], e.y / res[1], e.z / res[2]};
}

Vec3 OccupancyGrid::cell_center(int i, int j, int k) const
{
    const Vec3 c = cell_size();
    return bounds.min + Vec3{(i + 0.5) * c.x, (j + 0.5) * c.y, (k + 0.5) * c.z};
}

double OccupancyGrid::occupied_fraction() const
{
    if (occupancy.empty())
        return 0.0;
    const auto n = std::count(occupancy.begin(), occupancy.end(), std::uint8_t{1});
    return static_cast<double>(n) / static_cast<double>(occupancy.size());
}

std::array<int, 3> OccupancyGrid::cell_of(const Vec3& p) const
{
    const Vec3 c = cell_size();
    std::array<int, 3> cell{};
    for (int a = 0; a < 3; ++a) {
        const int idx = static_cast<int>(std::floor((p[a] - bounds.min[a]) / c[a]));
        cell[a] = std::clamp(idx, 0, res[a] - 1);
    }
    return cell;
}

OccupancyGrid make_occupancy_grid(const std::array<int, 3>& res, const Aabb& bounds)
{
    for (int r : res)
        if (r < 1)
            throw std::invalid_argument("occupancy resolution must be >= 1");
    OccupancyGrid g;
    g.res = res;
    g.bounds = bounds;
    const auto n = static_cast<std::size_t>(res[0]) * res[1] * res[2];
    g.occupancy.assign(n, 1);
    g.ema_density.assign(n, 1.0f);
    return g;
}

std::vector<Vec3> occupancy_query_points(const OccupancyGrid& grid, Pcg32& rng)
{
    const Vec3 cs = grid.cell_size();
    std::vector<Vec3> points(2 * grid.cell_count());
    for (int k = 0; k < grid.res[2]; ++k)
        for (int j = 0; j < grid.res[1]; ++j)
            for (int i = 0; i < grid.res[0]; ++i) {
                const std::size_t c = grid.index(i, j, k);
                points[2 * c] = grid.cell_center(i, j, k);
                const double jx = rng.uniform();
                const double jy = rng.uniform();
                const double jz = rng.uniform();
                points[2 * c + 1] = grid.bounds.min + Vec3{(i + jx) * cs.x, (j + jy) * cs.y, (k + jz) * cs.z};
            }
    return points;
}

double max_density(std::span<const double> densities)
{
    double m = 0.0;
    for (double d : densities)
        m = std::max(m, d);
    return m;
}

void fold_occupancy(OccupancyGrid& grid, std::span<const double> density, double tau, double ema_factor)
{
    if (!(ema_factor > 0.0 && ema_factor <= 1.0))
        throw std::invalid_argument("occupancy EMA factor must lie in (0, 1]");
    if (!(tau >= 0.0))
        throw std::invalid_argument("occupancy threshold must be >= 0");
    if (density.size() != 2 * grid.cell_count())
        throw std::invalid_argument("fold_occupancy expects two densities per cell");

    for (std::size_t c = 0; c < grid.cell_count(); ++c) {
        const double d = std::max({0.0, density[2 * c], density[2 * c + 1]});
        grid.ema_density[c] = static_cast<float>((1.0 - ema_factor) * grid.ema_density[c] + ema_factor * d);
        grid.occupancy[c] = grid.ema_density[c] > tau ? 1 : 0;
    }
    grid.threshold = tau;
    grid.running_max = std::max(grid.running_max, max_density(density));
    ++grid.refreshes;
}

void refresh_occupancy(OccupancyGrid& grid, const DensityQuery& query, double tau, double ema_factor, Pcg32& rng)
{
    const std::vector<Vec3> points = occupancy_query_points(grid, rng);
    std::vector<double> density(points.size());
    query(points, density);
    fold_occupancy(grid, density, tau, ema_factor);
}

OccupancyGrid build_occupancy(const DensityQuery& query, const std::array<int, 3>& res, const Aabb& bounds,
                              double tau, double ema_factor, Pcg32& rng)
{
    OccupancyGrid g = make_occupancy_grid(res, bounds);
    refresh_occupancy(g, query, tau, ema_factor, rng);
    return g;
}

std::vector<Interval> traverse_occupied(const OccupancyGrid& grid, const Ray& ray)
{
    std::vector<Interval> out;
    double t = ray.t_min;
    double t_end = ray.t_max;
    if (auto hit = ray_aabb_intersect(ray, grid.bounds)) {
        t = std::max(t, hit->t_near);
        t_end = std::min(t_end, hit->t_far);
    } else {
        return out;
    }
    if (!(t_end > t))
        return out;

    const Vec3 cs = grid.cell_size();
    std::array<int, 3> cell = grid.cell_of(ray.at(t + 0.5 * std::min(t_end - t, 1e-9 * (1.0 + std::abs(t)))));
    std::array<int, 3> step{};
    std::array<double, 3> t_next{};
    std::array<double, 3> t_delta{};
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double d = ray.direction[a];
        if (d > 0.0) {
            step[a] = 1;
            t_next[a] = (grid.bounds.min[a] + (cell[a] + 1) * cs[a] - ray.origin[a]) / d;
            t_delta[a] = cs[a] / d;
        } else if (d < 0.0) {
            step[a] = -1;
            t_next[a] = (grid.bounds.min[a] + cell[a] * cs[a] - ray.origin[a]) / d;
            t_delta[a] = -cs[a] / d;
        } else {
            step[a] = 0;
            t_next[a] = inf;
            t_delta[a] = inf;
        }
    }

    bool open = false;
    while (t < t_end) {
        int axis = 0;
        if (t_next[1] < t_next[axis])
            axis = 1;
        if (t_next[2] < t_next[axis])
            axis = 2;
        const double leave = std::min(std::max(t_next[axis], t), t_end);
        if (grid.occupied(cell[0], cell[1], cell[2]) && leave > t) {
            if (open)
                out.back().exit = leave;
            else
                out.push_back({t, leave});
            open = true;
        } else if (leave > t) {
            open = false;
        }
        t = leave;
        if (t >= t_end)
            break;
        cell[axis] += step[axis];
        if (cell[axis] < 0 || cell[axis] >= grid.res[axis])
            break;
        t_next[axis] += t_delta[axis];
    }
    return out;
}

IntervalUnion::IntervalUnion(std::vector<Interval> intervals) : intervals_(std::move(intervals))
{
    cumulative_.reserve(intervals_.size() + 1);
    cumulative_.push_back(0.0);
    for (const auto& iv : intervals_)
        cumulative_.push_back(cumulative_.back() + (iv.exit - iv.enter));
}

std::size_t IntervalUnion::segment_of(double s) const
{
    const auto it = std::upper_bound(cumulative_.begin() + 1, cumulative_.end(), s);
    if (it == cumulative_.end())
        return intervals_.size() - 1;
    return static_cast<std::size_t>(it - (cumulative_.begin() + 1));
}

double IntervalUnion::to_ray(double s) const
{
    if (s >= total_length())
        return intervals_.back().exit;
    const std::size_t i = segment_of(s);
    return intervals_[i].enter + (s - cumulative_[i]);
}

CoarseSamples stratified_coarse(const std::vector<Interval>& intervals, int n1, std::span<const double> u)
{
    if (n1 < 1)
        throw std::invalid_argument("n1 must be >= 1, got " + std::to_string(n1));
    if (intervals.empty())
        throw std::invalid_argument("stratified sampling needs at least one interval");
    if (u.size() != static_cast<std::size_t>(n1))
        throw std::invalid_argument("need one uniform draw per stratum");

    const IntervalUnion un(intervals);
    const double total = un.total_length();
    const double below_total = std::nextafter(total, 0.0);
    CoarseSamples out;
    out.arc_z.resize(static_cast<std::size_t>(n1) + 1);
    out.z.resize(out.arc_z.size());
    for (int i = 0; i <= n1; ++i) {
        out.arc_z[i] = i == n1 ? total : total * i / n1;
        out.z[i] = un.to_ray(out.arc_z[i]);
    }
    out.arc_t.resize(static_cast<std::size_t>(n1));
    out.t.resize(out.arc_t.size());
    for (int i = 0; i < n1; ++i) {
        out.arc_t[i] = std::min((i + u[i]) * total / n1, below_total);
        out.t[i] = un.to_ray(out.arc_t[i]);
    }
    return out;
}

CoarseSamples stratified_coarse(const std::vector<Interval>& intervals, int n1, Pcg32& rng)
{
    if (n1 < 1)
        throw std::invalid_argument("n1 must be >= 1, got " + std::to_string(n1));
    std::vector<double> u(static_cast<std::size_t>(n1));
    for (auto& x : u)
        x = rng.uniform();
    return stratified_coarse(intervals, n1, u);
}

DensityPdf density_pdf(std::span<const double> w, double eps)
{
    DensityPdf out;
    if (w.empty())
        return out;
    double sum = 0.0;
    for (double x : w)
        sum += x + eps;
    out.pdf.resize(w.size());
    out.cdf.resize(w.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        out.pdf[i] = (w[i] + eps) / sum;
        acc += out.pdf[i];
        out.cdf[i] = acc;
    }
    out.cdf.back() = 1.0;
    return out;
}

std::vector<std::size_t> systematic_allocation(std::span<const double> cdf, int n2, double v)
{
    std::vector<std::size_t> seg(static_cast<std::size_t>(std::max(n2, 0)));
    for (int k = 0; k < n2; ++k) {
        const double pos = (k + v) / n2;
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), pos);
        seg[k] = std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    }
    return seg;
}

namespace {

double fine_position(std::span<const double> z, std::size_t i, int k, int n2, double v)
{
    const double x = v + static_cast<double>(k) / n2;
    return z[i] + (x - std::floor(x)) * (z[i + 1] - z[i]);
}

DensityPdf cumulate(std::span<const double> pdf)
{
    DensityPdf out;
    out.pdf.assign(pdf.begin(), pdf.end());
    out.cdf.resize(pdf.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pdf.size(); ++i)
        out.cdf[i] = (acc += pdf[i]);
    if (!out.cdf.empty())
        out.cdf.back() = 1.0;
    return out;
}

}  // namespace

std::vector<double> systematic_fine(std::span<const double> z, std::span<const double> pdf, int n2, double v)
{
    if (n2 < 0)
        throw std::invalid_argument("n2 must be >= 0");
    if (pdf.empty() || z.size() != pdf.size() + 1)
        throw std::invalid_argument("systematic_fine needs |z| = |pdf| + 1 (got " + std::to_string(z.size()) + " and " +
                                    std::to_string(pdf.size()) + ")");
    const DensityPdf dist = cumulate(pdf);
    const auto seg = systematic_allocation(dist.cdf, n2, v);
    std::vector<double> out(seg.size());
    for (int k = 0; k < n2; ++k)
        out[k] = fine_position(z, seg[k], k, n2, v);
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

SampleSet assemble(const IntervalUnion& un, std::vector<double> arc, int coarse, int fine)
{
    // arc holds the coarse samples first, then the fine ones
    std::vector<std::pair<double, bool>> tagged(arc.size());
    for (std::size_t i = 0; i < arc.size(); ++i)
        tagged[i] = {arc[i], i >= static_cast<std::size_t>(coarse)};
    std::sort(tagged.begin(), tagged.end());
    tagged.erase(std::unique(tagged.begin(), tagged.end(),
                             [](const auto& a, const auto& b) { return a.first == b.first; }),
                 tagged.end());
    SampleSet out;
    out.coarse_count = coarse;
    out.fine_count = fine;
    const double total = un.total_length();
    out.t_values.reserve(tagged.size());
    out.deltas.reserve(tagged.size());
    out.segment_ids.reserve(tagged.size());
    out.is_fine.reserve(tagged.size());
    for (std::size_t j = 0; j < tagged.size(); ++j) {
        const double s = tagged[j].first;
        const std::size_t seg = un.segment_of(s);
        const double next = j + 1 < tagged.size() ? tagged[j + 1].first : total;
        const double delta = std::min(next, un.segment_end(seg)) - s;
        if (!(delta > 0.0))
            continue;
        out.t_values.push_back(un.intervals()[seg].enter + (s - un.segment_begin(seg)));
        out.deltas.push_back(delta);
        out.segment_ids.push_back(static_cast<int>(seg));
        out.is_fine.push_back(tagged[j].second ? 1 : 0);
    }
    return out;
}

}  // namespace

SampleSet hybrid_sample(const OccupancyGrid& grid, const CoarseDensityProvider& density_at_coarse, const Ray& ray,
                        const HybridOptions& options, Pcg32& rng)
{
    if (options.n1 < 1)
        throw std::invalid_argument("n1 must be >= 1");
    if (options.n2 < 0)
        throw std::invalid_argument("n2 must be >= 0");
    std::vector<Interval> intervals = traverse_occupied(grid, ray);
    if (intervals.empty())
        return {};
    const IntervalUnion un(intervals);
    const CoarseSamples coarse = stratified_coarse(intervals, options.n1, rng);

    std::vector<double> w(coarse.t.size());
    density_at_coarse(coarse.t, w);
    const double v = rng.uniform();

    std::vector<double> fine;
    if (!options.intervals_as_segments) {
        fine = systematic_fine(coarse.arc_z, density_pdf(w).pdf, options.n2, v);
    } else {
        std::vector<double> edges(un.size() + 1);
        std::vector<double> mass(un.size(), 0.0);
        std::vector<int> hits(un.size(), 0);
        for (std::size_t s = 0; s <= un.size(); ++s)
            edges[s] = s == un.size() ? un.total_length() : un.segment_begin(s);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const std::size_t s = un.segment_of(coarse.arc_t[i]);
            mass[s] += w[i];
            ++hits[s];
        }
        for (std::size_t s = 0; s < mass.size(); ++s)
            mass[s] = hits[s] > 0 ? mass[s] / hits[s] * (edges[s + 1] - edges[s]) : 0.0;
        fine = systematic_fine(edges, density_pdf(mass).pdf, options.n2, v);
    }
    const double below_total = std::nextafter(un.total_length(), 0.0);
    for (auto& s : fine)
        s = std::min(s, below_total);

    std::vector<double> arc = coarse.arc_t;
    arc.insert(arc.end(), fine.begin(), fine.end());
    return assemble(un, std::move(arc), options.n1, options.n2);
}

SampleSet uniform_sample(const Ray& ray, int n, Pcg32& rng)
{
    if (n < 1)
        throw std::invalid_argument("sample count must be >= 1");
    if (ray.empty())
        return {};
    const std::vector<Interval> whole{{ray.t_min, ray.t_max}};
    const CoarseSamples strata = stratified_coarse(whole, n, rng);
    return assemble(IntervalUnion(whole), strata.arc_t, n, 0);
}

}  // namespace rmct

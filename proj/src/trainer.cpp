#include "rmct/trainer.hpp"

#include "rmct/errors.hpp"
#include "rmct/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rmct {

namespace {

void require_positive(int value, const char* name)
{
    if (value < 1)
        throw std::invalid_argument(std::string(name) + " must be >= 1, got " + std::to_string(value));
}

constexpr double kTvSmoothing = 1e-8;

}  // namespace

void TrainConfig::validate() const
{
    require_positive(iterations, "iterations");
    require_positive(batch_rays, "batch_rays");
    require_positive(n1, "n1");
    require_positive(n2, "n2");
    require_positive(occupancy_refresh_every, "occupancy_refresh_every");
    require_positive(occupancy_resolution, "occupancy_resolution");
    require_positive(log_every, "log_every");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("learning_rate must be > 0");
    if (!(dense_lr_scale > 0.0) || !std::isfinite(dense_lr_scale))
        throw std::invalid_argument("dense_lr_scale must be > 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0))
        throw std::invalid_argument("lr_decay must lie in (0, 1]");
    if (!(occupancy_tau_fraction >= 0.0 && occupancy_tau_fraction < 1.0))
        throw std::invalid_argument("occupancy_tau_fraction must lie in [0, 1)");
    if (!(occupancy_ema > 0.0 && occupancy_ema <= 1.0))
        throw std::invalid_argument("occupancy_ema must lie in (0, 1]");
    if (!(context_dropout >= 0.0 && context_dropout <= 1.0))
        throw std::invalid_argument("context_dropout must lie in [0, 1]");
    if (!(tv_weight >= 0.0))
        throw std::invalid_argument("tv_weight must be >= 0");
    field.validate();
}

void Adam::step(std::span<float> params, std::span<const float> grad, double lr)
{
    advance();
    update(params, grad, lr, 0, params.size());
}

void Adam::update(std::span<float> params, std::span<const float> grad, double lr, std::size_t begin, std::size_t end)
{
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw std::invalid_argument("Adam state size does not match the parameters");
    if (t_ == 0)
        throw InvalidState("Adam::update before advance");
    if (begin > end || end > params.size())
        throw std::invalid_argument("Adam::update range outside the parameters");
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    const auto b1 = static_cast<float>(kBeta1);
    const auto b2 = static_cast<float>(kBeta2);
    const auto step_size = static_cast<float>(lr / c1);
    const auto inv_c2 = static_cast<float>(1.0 / c2);
    const auto eps = static_cast<float>(kEps);
    for (std::size_t i = begin; i < end; ++i) {
        const float g = grad[i];
        m_[i] = b1 * m_[i] + (1.0f - b1) * g;
        v_[i] = b2 * v_[i] + (1.0f - b2) * g * g;
        params[i] -= step_size * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
    }
}

double render_ray(std::span<const double> densities, std::span<const double> deltas)
{
    if (densities.size() != deltas.size())
        throw std::invalid_argument("render_ray: " + std::to_string(densities.size()) + " densities but " +
                                    std::to_string(deltas.size()) + " deltas");
    double acc = 0.0;
    for (std::size_t j = 0; j < deltas.size(); ++j)
        acc += densities[j] * deltas[j];
    return acc;
}

double render_ray(std::span<const float> densities, std::span<const double> deltas)
{
    if (densities.size() != deltas.size())
        throw std::invalid_argument("render_ray: " + std::to_string(densities.size()) + " densities but " +
                                    std::to_string(deltas.size()) + " deltas");
    double acc = 0.0;
    for (std::size_t j = 0; j < deltas.size(); ++j)
        acc += static_cast<double>(densities[j]) * deltas[j];
    return acc;
}

namespace {

FieldConfig checked_field(const TrainConfig& cfg)
{
    cfg.validate();
    FieldConfig f = cfg.field;
    f.use_attention = cfg.use_rda;
    return f;
}

}  // namespace

Trainer::Trainer(const ProjectionSet& projections, const TrainConfig& cfg)
    : proj_(projections),
      cfg_(cfg),
      field_(checked_field(cfg), projections.geom.volume_bounds, mix_seed(cfg.seed, 1)),
      grid_(make_occupancy_grid({cfg.occupancy_resolution, cfg.occupancy_resolution, cfg.occupancy_resolution},
                                projections.geom.volume_bounds)),
      adam_(field_.parameter_count()),
      batch_rng_(mix_seed(cfg.seed, 2), 0),
      occupancy_rng_(mix_seed(cfg.seed, 3), 0),
      workers_(resolve_threads(cfg.threads))
{
    validate(projections.geom);
    if (projections.data.size() != static_cast<std::size_t>(projections.geom.total_pixels()))
        throw std::invalid_argument("projection data size does not match its geometry");
    worker_grad_.resize(static_cast<std::size_t>(workers_));
}

double Trainer::current_learning_rate() const
{
    return cfg_.learning_rate * std::pow(cfg_.lr_decay, step_ / 1000.0);
}

SampleSet Trainer::sample_ray(const Ray& ray, Pcg32& rng) const
{
    if (!cfg_.use_xray_sampling)
        return uniform_sample(ray, cfg_.n1 + cfg_.n2, rng);

    std::vector<Vec3> points;
    std::vector<float> dens;
    const CoarseDensityProvider coarse = [&](std::span<const double> t, std::span<double> w) {
        points.resize(t.size());
        dens.resize(t.size());
        for (std::size_t i = 0; i < t.size(); ++i)
            points[i] = ray.at(t[i]);
        field_.query_densities(points, dens);
        for (std::size_t i = 0; i < t.size(); ++i)
            w[i] = dens[i];
    };
    HybridOptions opts;
    opts.n1 = cfg_.n1;
    opts.n2 = cfg_.n2;
    opts.intervals_as_segments = cfg_.intervals_as_segments;
    return hybrid_sample(grid_, coarse, ray, opts, rng);
}

double Trainer::ray_loss(const Ray& ray, double measured, Pcg32& rng, std::vector<RayTape<float>>& tapes,
                         AlignedVector<float>& grad, long long& sample_count) const
{
    const SampleSet s = sample_ray(ray, rng);
    sample_count = static_cast<long long>(s.size());
    if (s.empty())
        return measured * measured;

    const std::size_t n = s.size();
    std::vector<Vec3> points(n);
    for (std::size_t j = 0; j < n; ++j)
        points[j] = ray.at(s.t_values[j]);

    // Sequences: the whole ray, one per occupied interval, or every sample alone.
    const bool isolated = cfg_.use_rda && cfg_.context_dropout > 0.0 && rng.uniform() < cfg_.context_dropout;
    std::vector<std::size_t> starts{0};
    if (!isolated && cfg_.attention_per_interval)
        for (std::size_t j = 1; j < n; ++j)
            if (s.segment_ids[j] != s.segment_ids[j - 1])
                starts.push_back(j);
    starts.push_back(n);

    const std::size_t sequences = starts.size() - 1;
    if (tapes.size() < sequences)
        tapes.resize(sequences);
    std::vector<float> density(n);
    if (isolated)
        field_.query_isolated(points, density, &tapes[0]);
    for (std::size_t q = 0; q < sequences && !isolated; ++q) {
        const std::size_t a = starts[q];
        const std::size_t len = starts[q + 1] - a;
        field_.query_densities(std::span<const Vec3>(points).subspan(a, len), std::span<float>(density).subspan(a, len),
                               &tapes[q]);
    }

    const double pred = render_ray(density, s.deltas);
    const double err = pred - measured;
    const double b = cfg_.batch_rays;
    double loss = err * err;

    std::vector<float> d_density(n);
    for (std::size_t j = 0; j < n; ++j)
        d_density[j] = static_cast<float>(2.0 * err * s.deltas[j] / b);

    if (cfg_.tv_weight > 0.0) {
        for (std::size_t j = 0; j + 1 < n; ++j) {
            const double diff = static_cast<double>(density[j + 1]) - density[j];
            const double mag = std::sqrt(diff * diff + kTvSmoothing);
            loss += cfg_.tv_weight * mag;
            const double g = cfg_.tv_weight * diff / mag / b;
            d_density[j + 1] += static_cast<float>(g);
            d_density[j] -= static_cast<float>(g);
        }
    }

    for (std::size_t q = 0; q < sequences; ++q) {
        const std::size_t a = starts[q];
        field_.backward(tapes[q], std::span<const float>(d_density).subspan(a, starts[q + 1] - a), grad);
    }
    return loss;
}

double Trainer::step()
{
    const long long total = proj_.geom.total_pixels();
    const auto batch = static_cast<std::size_t>(cfg_.batch_rays);
    if (batch == 0 || total <= 0)
        throw InvalidState("training step with an empty ray batch");

    std::vector<long long> pixels(batch);
    for (auto& px : pixels)
        px = static_cast<long long>(batch_rng_.bounded(static_cast<std::uint32_t>(total)));

    const std::size_t params = field_.parameter_count();
    std::vector<double> worker_loss(static_cast<std::size_t>(workers_), 0.0);
    std::vector<long long> worker_samples(static_cast<std::size_t>(workers_), 0);
    std::vector<long long> worker_empty(static_cast<std::size_t>(workers_), 0);
    const std::uint64_t step_seed = mix_seed(cfg_.seed, 4, static_cast<std::uint64_t>(step_));

    parallel_for(batch, workers_, [&](std::size_t begin, std::size_t end, int w) {
        auto& grad = worker_grad_[static_cast<std::size_t>(w)];
        grad.assign(params, 0.0f);
        std::vector<RayTape<float>> tapes(1);
        double loss = 0.0;
        for (std::size_t r = begin; r < end; ++r) {
            Pcg32 rng(step_seed, r);
            const Ray ray = ray_for_index(proj_.geom, pixels[r]);
            long long count = 0;
            loss += ray_loss(ray, proj_.data[static_cast<std::size_t>(pixels[r])], rng, tapes, grad, count);
            worker_samples[static_cast<std::size_t>(w)] += count;
            if (count == 0)
                ++worker_empty[static_cast<std::size_t>(w)];
        }
        worker_loss[static_cast<std::size_t>(w)] = loss;
    });

    auto& grad = worker_grad_[0];
    double loss = worker_loss[0];
    for (int w = 1; w < workers_; ++w) {
        const auto& other = worker_grad_[static_cast<std::size_t>(w)];
        if (other.empty())
            continue;
        for (std::size_t i = 0; i < params; ++i)
            grad[i] += other[i];
        loss += worker_loss[static_cast<std::size_t>(w)];
    }
    for (int w = 0; w < workers_; ++w) {
        stats_.samples += worker_samples[static_cast<std::size_t>(w)];
        stats_.empty_rays += worker_empty[static_cast<std::size_t>(w)];
    }
    stats_.rays += static_cast<long long>(batch);

    const double lr = current_learning_rate();
    const std::size_t hash_end = field_.layout().in_w;
    adam_.advance();
    adam_.update(field_.parameters(), grad, lr, 0, hash_end);
    adam_.update(field_.parameters(), grad, lr * cfg_.dense_lr_scale, hash_end, params);
    ++step_;
    return loss / static_cast<double>(batch);
}

void Trainer::refresh_occupancy()
{
    const std::vector<Vec3> points = occupancy_query_points(grid_, occupancy_rng_);
    std::vector<float> dens(points.size());
    field_.query_independent(points, dens, workers_);
    const std::vector<double> d(dens.begin(), dens.end());
    const double running = std::max(grid_.running_max, max_density(d));
    fold_occupancy(grid_, d, cfg_.occupancy_tau_fraction * running, cfg_.occupancy_ema);
}

Volume extract_volume(const RdaField<float>& field, const Dims& dims, const Vec3& spacing, const Vec3& origin,
                      int threads)
{
    validate_dims(dims);
    Volume out(dims, spacing, origin);
    std::vector<Vec3> points(out.size());
    for (int k = 0; k < dims[2]; ++k)
        for (int j = 0; j < dims[1]; ++j)
            for (int i = 0; i < dims[0]; ++i)
                points[out.index(i, j, k)] = out.voxel_center(i, j, k);
    field.query_independent(points, out.data, resolve_threads(threads));
    return out;
}

TrainResult train(const ProjectionSet& projections, const TrainConfig& cfg, const Volume* gt)
{
    const auto started = std::chrono::steady_clock::now();
    Trainer trainer(projections, cfg);
    TrainReport report;
    report.iterations = cfg.iterations;
    report.log_every = cfg.log_every;

    double window = 0.0;
    for (int it = 0; it < cfg.iterations; ++it) {
        window += trainer.step();
        if ((it + 1) % cfg.log_every == 0) {
            report.loss_history.push_back(window / cfg.log_every);
            window = 0.0;
        }
        if (cfg.use_xray_sampling && (it + 1) % cfg.occupancy_refresh_every == 0 && it + 1 < cfg.iterations)
            trainer.refresh_occupancy();
    }

    if (gt) {
        const Volume pred = extract_volume(trainer.field(), gt->dims, gt->spacing, gt->origin, cfg.threads);
        report.metrics = evaluate(*gt, pred);
    }
    report.samples = trainer.stats();
    report.occupied_fraction = trainer.grid().occupied_fraction();
    report.occupancy_refreshes = trainer.grid().refreshes;
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return {trainer.field(), report};
}

}  // namespace rmct

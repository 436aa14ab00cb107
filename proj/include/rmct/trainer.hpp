#pragma once

#include "rmct/metrics.hpp"
#include "rmct/projector.hpp"
#include "rmct/rda_field.hpp"
#include "rmct/sampler.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace rmct {

struct TrainConfig {
    int iterations = 1500;
    int batch_rays = 1024;
    int n1 = 32;
    int n2 = 32;
    double learning_rate = 1e-2;
    double dense_lr_scale = 0.1;  ///< learning rate of non-hash parameters relative to learning_rate
    double lr_decay = 0.9;  ///< multiplicative, per 1000 steps
    int occupancy_refresh_every = 256;
    int occupancy_resolution = 64;
    double occupancy_tau_fraction = 0.01;  ///< threshold relative to the running max density
    double occupancy_ema = 0.05;
    std::uint64_t seed = 0;
    int log_every = 50;
    bool use_xray_sampling = true;
    bool use_rda = true;
    bool intervals_as_segments = false;
    bool attention_per_interval = false;
    /// Probability that a training ray is evaluated as isolated length-1
    /// sequences, the same context extraction uses.
    double context_dropout = 0.5;
    double tv_weight = 0.0;  ///< along-ray total variation of densities; 0 disables
    int threads = 1;
    FieldConfig field;

    void validate() const;
};

/// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    explicit Adam(std::size_t n = 0) : m_(n, 0.0f), v_(n, 0.0f) {}
    /// Whole-vector update at one learning rate.
    void step(std::span<float> params, std::span<const float> grad, double lr);
    /// Starts a step; follow with update() over disjoint ranges.
    void advance() { ++t_; }
    void update(std::span<float> params, std::span<const float> grad, double lr, std::size_t begin, std::size_t end);
    long long steps() const { return t_; }

private:
    std::vector<float> m_;
    std::vector<float> v_;
    long long t_ = 0;
};

/// Discrete line integral sum_j D_j * delta_j.
double render_ray(std::span<const double> densities, std::span<const double> deltas);
double render_ray(std::span<const float> densities, std::span<const double> deltas);

struct SampleStats {
    long long rays = 0;
    long long samples = 0;
    long long empty_rays = 0;

    double mean_samples_per_ray() const { return rays ? static_cast<double>(samples) / rays : 0.0; }
    double empty_fraction() const { return rays ? static_cast<double>(empty_rays) / rays : 0.0; }
};

struct TrainReport {
    int iterations = 0;
    int log_every = 0;
    std::vector<double> loss_history;  ///< mean loss of each log_every window
    std::optional<MetricReport> metrics;
    double wall_seconds = 0.0;
    SampleStats samples;
    double occupied_fraction = 1.0;
    int occupancy_refreshes = 0;
};

/// One optimisation stream over a fixed projection set.
class Trainer {
public:
    Trainer(const ProjectionSet& projections, const TrainConfig& cfg);

    /// One batch: sample rays, render, MSE, one Adam update. Returns the mean loss.
    double step();
    /// Re-evaluates the occupancy grid over the current field.
    void refresh_occupancy();

    int iteration() const { return step_; }
    double current_learning_rate() const;
    const RdaField<float>& field() const { return field_; }
    RdaField<float>& field() { return field_; }
    const OccupancyGrid& grid() const { return grid_; }
    const SampleStats& stats() const { return stats_; }
    const TrainConfig& config() const { return cfg_; }

    /// Samples the trainer would use for `ray` at the current state.
    SampleSet sample_ray(const Ray& ray, Pcg32& rng) const;

private:
    double ray_loss(const Ray& ray, double measured, Pcg32& rng, std::vector<RayTape<float>>& tapes,
                    AlignedVector<float>& grad, long long& sample_count) const;

    const ProjectionSet& proj_;
    TrainConfig cfg_;
    RdaField<float> field_;
    OccupancyGrid grid_;
    Adam adam_;
    Pcg32 batch_rng_;
    Pcg32 occupancy_rng_;
    int step_ = 0;
    SampleStats stats_;
    int workers_ = 1;
    std::vector<AlignedVector<float>> worker_grad_;
};

struct TrainResult {
    RdaField<float> field;
    TrainReport report;
};

TrainResult train(const ProjectionSet& projections, const TrainConfig& cfg, const Volume* gt = nullptr);

/// Density at every voxel centre, each point queried as its own length-1 sequence.
Volume extract_volume(const RdaField<float>& field, const Dims& dims, const Vec3& spacing, const Vec3& origin,
                      int threads = 1);

}  // namespace rmct

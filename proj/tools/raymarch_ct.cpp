#include "rmct/errors.hpp"
#include "rmct/io.hpp"
#include "rmct/metrics.hpp"
#include "rmct/parallel.hpp"
#include "rmct/projector.hpp"
#include "rmct/sart.hpp"
#include "rmct/trainer.hpp"
#include "rmct/volume.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

using namespace rmct;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

Dims cube(int n)
{
    if (n < 1)
        throw std::invalid_argument("--dims must be >= 1, got " + std::to_string(n));
    return {n, n, n};
}

struct PhantomArgs {
    std::string name, out;
    int dims = 64;
};

struct ProjectArgs {
    std::string vol, out;
    int views = 30, rows = 48, cols = 48;
    double step = 0.0, photons = 0.0;
    std::optional<double> sid, sdd;
    std::uint64_t seed = 0;
};

struct TrainArgs {
    std::string proj, config, gt, out, report;
    bool no_xray = false, no_rda = false;
    std::optional<std::uint64_t> seed;
    std::optional<int> iterations;
};

struct ExtractArgs {
    std::string ckpt, out;
    int dims = 64;
};

struct SartArgs {
    std::string proj, out;
    int iters = 20, dims = 64;
    double lambda = 1.0;
};

struct EvalArgs {
    std::string gt, pred, out;
    std::optional<double> threshold;
};

struct SliceArgs {
    std::string vol, axis = "z", out;
    int index = 0;
};

int run_phantom(const PhantomArgs& a)
{
    const Volume v = builtin_phantom(a.name, cube(a.dims));
    write_volume(a.out, v);
    return 0;
}

int run_project(const ProjectArgs& a, int threads)
{
    const Volume vol = read_volume(a.vol);
    const Aabb bounds = vol.bounds();
    ScanGeometry geom = default_geometry(a.views, a.rows, a.cols, bounds);
    if (a.sid || a.sdd) {
        const double sid = a.sid.value_or(geom.source_to_isocenter);
        const double sdd = a.sdd.value_or(geom.source_to_detector);
        const double scale = sdd / geom.source_to_detector * geom.source_to_isocenter / sid;
        geom = make_circular_geometry(a.views, sid, sdd, a.rows, a.cols, geom.pixel_pitch_u * scale,
                                      geom.pixel_pitch_v * scale, bounds);
    }
    const double step = a.step > 0.0 ? a.step : default_step(vol.spacing);
    ProjectionSet p = forward_project(vol, geom, step, threads);
    if (a.photons > 0.0) {
        Pcg32 rng(a.seed, 0x6e6f697365);
        p = add_noise(p, a.photons, rng);
    }
    write_projections(a.out, p);
    return 0;
}

int run_train(const TrainArgs& a, int threads)
{
    RunConfig cfg = a.config.empty() ? RunConfig{} : read_run_config(a.config);
    TrainConfig& t = cfg.train;
    if (a.no_xray)
        t.use_xray_sampling = false;
    if (a.no_rda)
        t.use_rda = false;
    if (a.seed)
        t.seed = *a.seed;
    if (a.iterations)
        t.iterations = *a.iterations;
    t.threads = threads;
    t.validate();

    const std::string proj = !a.proj.empty() ? a.proj : cfg.paths.proj.value_or("");
    const std::string out = !a.out.empty() ? a.out : cfg.paths.out.value_or("");
    const std::string gt_path = !a.gt.empty() ? a.gt : cfg.paths.gt.value_or("");
    const std::string report_path = !a.report.empty() ? a.report : cfg.paths.report.value_or("");
    if (proj.empty())
        throw std::invalid_argument("--proj is required (or paths.proj in --config)");
    if (out.empty())
        throw std::invalid_argument("--out is required (or paths.out in --config)");

    const ProjectionSet p = read_projections(proj);
    std::optional<Volume> gt;
    if (!gt_path.empty())
        gt = read_volume(gt_path);

    const TrainResult result = train(p, t, gt ? &*gt : nullptr);
    Checkpoint meta;
    meta.field = result.field.config();
    meta.bounds = p.geom.volume_bounds;
    meta.seed = mix_seed(t.seed, 1);
    meta.use_rda = t.use_rda;
    meta.use_xray_sampling = t.use_xray_sampling;
    save_checkpoint(out, result.field, meta);
    if (!report_path.empty())
        write_text(report_path, train_report_json(result.report));
    if (result.report.metrics)
        std::cout << "psnr " << result.report.metrics->psnr_db << " ssim " << result.report.metrics->ssim << "\n";
    return 0;
}

int run_extract(const ExtractArgs& a, int threads)
{
    Checkpoint meta;
    const RdaField<float> field = load_checkpoint(a.ckpt, &meta);
    const Volume lattice = volume_for_bounds(meta.bounds, cube(a.dims));
    write_volume(a.out, extract_volume(field, lattice.dims, lattice.spacing, lattice.origin, threads));
    return 0;
}

int run_sart(const SartArgs& a, int threads)
{
    const ProjectionSet p = read_projections(a.proj);
    SartConfig cfg;
    cfg.iterations = a.iters;
    cfg.relaxation = a.lambda;
    cfg.threads = threads;
    const Volume lattice = volume_for_bounds(p.geom.volume_bounds, cube(a.dims));
    write_volume(a.out, sart_reconstruct(p, lattice.dims, lattice.spacing, lattice.origin, cfg));
    return 0;
}

int run_eval(const EvalArgs& a)
{
    const Volume gt = read_volume(a.gt);
    const Volume pred = read_volume(a.pred);
    const std::string json = metric_report_json(evaluate(gt, pred, a.threshold));
    if (a.out.empty() || a.out == "-")
        std::cout << json;
    else
        write_text(a.out, json);
    return 0;
}

int run_slice(const SliceArgs& a)
{
    const Volume vol = read_volume(a.vol);
    write_pgm_slice(a.out, vol, parse_axis(a.axis), a.index);
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sparse-view cone-beam CT: phantoms, projection, neural-field and SART reconstruction"};
    app.require_subcommand(1);
    app.fallthrough();
    int threads_flag = 0;
    app.add_option("--threads", threads_flag, "worker threads (default: RAYMARCH_CT_THREADS, else all cores)")
        ->check(CLI::NonNegativeNumber);

    PhantomArgs ph;
    auto* phantom = app.add_subcommand("phantom", "generate a builtin phantom volume");
    phantom->add_option("--name", ph.name, "jaw, shepp3d or blocks")
        ->required()
        ->check(CLI::IsMember({"jaw", "shepp3d", "blocks"}));
    phantom->add_option("--dims", ph.dims, "voxels per axis")->check(CLI::PositiveNumber);
    phantom->add_option("--out", ph.out, "output volume")->required();

    ProjectArgs pr;
    auto* project = app.add_subcommand("project", "simulate cone-beam projections of a volume");
    project->add_option("--vol", pr.vol, "input volume")->required();
    project->add_option("--views", pr.views, "number of views")->check(CLI::PositiveNumber);
    project->add_option("--rows", pr.rows, "detector rows")->check(CLI::PositiveNumber);
    project->add_option("--cols", pr.cols, "detector columns")->check(CLI::PositiveNumber);
    project->add_option("--step", pr.step, "ray-march step in mm (default: half the voxel spacing)")
        ->check(CLI::NonNegativeNumber);
    project->add_option("--noise-photons", pr.photons, "Poisson noise photon count (0: noiseless)")
        ->check(CLI::NonNegativeNumber);
    project->add_option("--seed", pr.seed, "noise seed");
    project->add_option("--sid", pr.sid, "source-to-isocentre distance in mm")->check(CLI::PositiveNumber);
    project->add_option("--sdd", pr.sdd, "source-to-detector distance in mm")->check(CLI::PositiveNumber);
    project->add_option("--out", pr.out, "output projection directory")->required();

    TrainArgs tr;
    auto* trainc = app.add_subcommand("train", "fit the neural density field to projections");
    trainc->add_option("--proj", tr.proj, "projection directory");
    trainc->add_option("--config", tr.config, "run configuration JSON");
    trainc->add_option("--gt", tr.gt, "ground-truth volume for the final metrics");
    trainc->add_option("--out", tr.out, "checkpoint path");
    trainc->add_option("--report", tr.report, "training report JSON");
    trainc->add_option("--seed", tr.seed, "overrides train.seed");
    trainc->add_option("--iterations", tr.iterations, "overrides train.iterations")->check(CLI::PositiveNumber);
    trainc->add_flag("--no-xray-sampling", tr.no_xray, "uniform stratified sampling instead of the hybrid sampler");
    trainc->add_flag("--no-rda", tr.no_rda, "bypass per-ray attention");

    ExtractArgs ex;
    auto* extract = app.add_subcommand("extract", "evaluate a checkpoint on a voxel grid");
    extract->add_option("--ckpt", ex.ckpt, "checkpoint path")->required();
    extract->add_option("--dims", ex.dims, "voxels per axis")->check(CLI::PositiveNumber);
    extract->add_option("--out", ex.out, "output volume")->required();

    SartArgs sa;
    auto* sart = app.add_subcommand("sart", "SART reconstruction");
    sart->add_option("--proj", sa.proj, "projection directory")->required();
    sart->add_option("--iters", sa.iters, "iterations")->check(CLI::PositiveNumber);
    sart->add_option("--lambda", sa.lambda, "relaxation in (0, 2)");
    sart->add_option("--dims", sa.dims, "voxels per axis")->check(CLI::PositiveNumber);
    sart->add_option("--out", sa.out, "output volume")->required();

    EvalArgs ev;
    auto* evalc = app.add_subcommand("eval", "compare a volume against ground truth");
    evalc->add_option("--gt", ev.gt, "ground-truth volume")->required();
    evalc->add_option("--pred", ev.pred, "predicted volume")->required();
    evalc->add_option("--threshold", ev.threshold, "mask threshold (default: half the ground-truth maximum)");
    evalc->add_option("--out", ev.out, "metrics JSON (default: stdout)");

    SliceArgs sl;
    auto* slice = app.add_subcommand("slice", "export one slice as an 8-bit PGM");
    slice->add_option("--vol", sl.vol, "input volume")->required();
    slice->add_option("--axis", sl.axis, "x, y or z")->check(CLI::IsMember({"x", "y", "z"}));
    slice->add_option("--index", sl.index, "slice index");
    slice->add_option("--out", sl.out, "output PGM")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        const int threads = resolve_threads(threads_flag);
        if (*phantom)
            return run_phantom(ph);
        if (*project)
            return run_project(pr, threads);
        if (*trainc)
            return run_train(tr, threads);
        if (*extract)
            return run_extract(ex, threads);
        if (*sart)
            return run_sart(sa, threads);
        if (*evalc)
            return run_eval(ev);
        if (*slice)
            return run_slice(sl);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitValidation;
}

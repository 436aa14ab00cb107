#pragma once

#include "rmct/projector.hpp"
#include "rmct/rda_field.hpp"
#include "rmct/sart.hpp"
#include "rmct/trainer.hpp"
#include "rmct/volume.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace rmct {

namespace fs = std::filesystem;

/// `<stem>.json` sidecar + `<stem>.raw` f32le payload. `path` may name
/// either file or the bare stem.
void write_volume(const fs::path& path, const Volume& vol);
Volume read_volume(const fs::path& path);

/// Directory holding geometry.json and view_0000.raw, view_0001.raw, ...
void write_projections(const fs::path& dir, const ProjectionSet& p);
ProjectionSet read_projections(const fs::path& dir);

/// Manifest `<stem>.json` (config, bounds, seed, tensor offset table) plus
/// `<stem>.bin` holding every parameter as f32le in layout order.
struct Checkpoint {
    FieldConfig field;
    Aabb bounds;
    std::uint64_t seed = 0;
    bool use_rda = true;
    bool use_xray_sampling = true;
};

void save_checkpoint(const fs::path& path, const RdaField<float>& field, const Checkpoint& meta);
Checkpoint read_checkpoint_manifest(const fs::path& path);
RdaField<float> load_checkpoint(const fs::path& path, Checkpoint* meta = nullptr);

struct RunPaths {
    std::optional<std::string> proj, gt, out, report;
};

/// Training, field, SART and path settings from one JSON document. Unknown
/// keys, wrong types and out-of-range values throw std::invalid_argument
/// naming the offending key.
struct RunConfig {
    TrainConfig train;
    SartConfig sart;
    RunPaths paths;
};

RunConfig parse_run_config(std::string_view json_text);
RunConfig read_run_config(const fs::path& path);
std::string run_config_json(const RunConfig& cfg);

std::string metric_report_json(const MetricReport& m);
std::string train_report_json(const TrainReport& r);

enum class Axis { x, y, z };
Axis parse_axis(std::string_view name);

/// One axis-aligned slice as a binary 8-bit PGM, min-max normalised
/// (a constant slice maps to 0).
void write_pgm_slice(const fs::path& path, const Volume& vol, Axis axis, int index);

/// Whole-file text helpers; failures throw IoError naming the path.
void write_text(const fs::path& path, std::string_view text);
std::string read_text(const fs::path& path);

}  // namespace rmct

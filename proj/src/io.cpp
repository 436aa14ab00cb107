#include "rmct/io.hpp"

#include "rmct/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace rmct {

static_assert(std::endian::native == std::endian::little, "raw payloads are written as native little-endian floats");

using nlohmann::json;

namespace {

fs::path with_ext(const fs::path& path, const char* ext)
{
    fs::path p = path;
    const auto e = p.extension();
    if (e == ".json" || e == ".raw" || e == ".bin")
        p.replace_extension();
    p += ext;
    return p;
}

void write_bytes(const fs::path& path, const void* data, std::size_t bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out)
        throw IoError("failed writing " + path.string());
}

std::vector<float> read_floats(const fs::path& path, std::size_t expected)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected * sizeof(float))
        throw IoError(path.string() + ": expected " + std::to_string(expected * sizeof(float)) + " bytes, found " +
                      std::to_string(bytes));
    in.seekg(0);
    std::vector<float> out(expected);
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
    if (!in)
        throw IoError("failed reading " + path.string());
    return out;
}

json parse_json_file(const fs::path& path)
{
    const std::string text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

// Accessors for files we wrote ourselves: malformed content is an I/O error.
template <typename T>
T field_of(const json& j, const char* key, const fs::path& file)
{
    if (!j.is_object() || !j.contains(key))
        throw IoError(file.string() + ": missing \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw IoError(file.string() + ": bad \"" + key + "\": " + e.what());
    }
}

Vec3 vec_of(const json& j, const char* key, const fs::path& file)
{
    const auto a = field_of<std::vector<double>>(j, key, file);
    if (a.size() != 3)
        throw IoError(file.string() + ": \"" + key + "\" must have 3 entries");
    return {a[0], a[1], a[2]};
}

json field_config_json(const FieldConfig& f)
{
    return {{"levels", f.levels},         {"table_log2", f.table_log2}, {"feats_per_level", f.feats_per_level},
            {"base_res", f.base_res},     {"growth", f.growth},         {"width", f.width},
            {"heads", f.heads},           {"blocks", f.blocks},         {"use_attention", f.use_attention}};
}

json geometry_json(const ScanGeometry& g)
{
    return {{"n_views", g.n_views},
            {"source_to_isocenter", g.source_to_isocenter},
            {"source_to_detector", g.source_to_detector},
            {"detector_rows", g.detector_rows},
            {"detector_cols", g.detector_cols},
            {"pixel_pitch_u", g.pixel_pitch_u},
            {"pixel_pitch_v", g.pixel_pitch_v},
            {"angular_range", g.angular_range},
            {"volume_bounds", {{"min", vec_json(g.volume_bounds.min)}, {"max", vec_json(g.volume_bounds.max)}}}};
}

// Strict reader for user-supplied configuration.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name))
    {
        if (!j_.is_object())
            throw std::invalid_argument(name_ + ": expected an object");
    }

    void allow(std::initializer_list<const char*> keys)
    {
        std::set<std::string> known(keys.begin(), keys.end());
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!known.count(it.key()))
                throw std::invalid_argument("unknown config key \"" + qualified(it.key()) + "\"");
    }

    bool has(const char* key) const { return j_.contains(key); }
    const json& raw(const char* key) const { return j_.at(key); }
    std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

    void get(const char* key, int& out) const
    {
        if (!has(key))
            return;
        const json& v = j_.at(key);
        if (!v.is_number_integer())
            throw std::invalid_argument(qualified(key) + ": expected an integer");
        const auto x = v.get<long long>();
        if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
            throw std::invalid_argument(qualified(key) + ": out of range");
        out = static_cast<int>(x);
    }
    void get(const char* key, std::uint64_t& out) const
    {
        if (!has(key))
            return;
        const json& v = j_.at(key);
        if (!v.is_number_unsigned())
            throw std::invalid_argument(qualified(key) + ": expected a non-negative integer");
        out = v.get<std::uint64_t>();
    }
    void get(const char* key, double& out) const
    {
        if (!has(key))
            return;
        const json& v = j_.at(key);
        if (!v.is_number())
            throw std::invalid_argument(qualified(key) + ": expected a number");
        out = v.get<double>();
    }
    void get(const char* key, bool& out) const
    {
        if (!has(key))
            return;
        const json& v = j_.at(key);
        if (!v.is_boolean())
            throw std::invalid_argument(qualified(key) + ": expected true or false");
        out = v.get<bool>();
    }
    void get(const char* key, std::optional<std::string>& out) const
    {
        if (!has(key))
            return;
        const json& v = j_.at(key);
        if (!v.is_string())
            throw std::invalid_argument(qualified(key) + ": expected a string");
        out = v.get<std::string>();
    }

private:
    const json& j_;
    std::string name_;
};

void read_field(const Section& s, FieldConfig& f)
{
    s.get("levels", f.levels);
    s.get("table_log2", f.table_log2);
    s.get("feats_per_level", f.feats_per_level);
    s.get("base_res", f.base_res);
    s.get("growth", f.growth);
    s.get("width", f.width);
    s.get("heads", f.heads);
    s.get("blocks", f.blocks);
}

}  // namespace

void write_text(const fs::path& path, std::string_view text)
{
    write_bytes(path, text.data(), text.size());
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_volume(const fs::path& path, const Volume& vol)
{
    validate_dims(vol.dims);
    if (vol.data.size() != static_cast<std::size_t>(vol.dims[0]) * vol.dims[1] * vol.dims[2])
        throw std::invalid_argument("volume data size does not match its dims");
    const json meta = {{"dims", {vol.dims[0], vol.dims[1], vol.dims[2]}},
                       {"spacing", vec_json(vol.spacing)},
                       {"origin", vec_json(vol.origin)},
                       {"dtype", "f32le"},
                       {"order", "x-fastest"}};
    write_text(with_ext(path, ".json"), meta.dump(2) + "\n");
    write_bytes(with_ext(path, ".raw"), vol.data.data(), vol.data.size() * sizeof(float));
}

Volume read_volume(const fs::path& path)
{
    const fs::path meta_path = with_ext(path, ".json");
    const json meta = parse_json_file(meta_path);
    for (const char* key : {"dims", "spacing", "origin", "dtype", "order"})
        if (!meta.contains(key))
            throw IoError(meta_path.string() + ": missing \"" + key + "\"");
    if (field_of<std::string>(meta, "dtype", meta_path) != "f32le")
        throw IoError(meta_path.string() + ": dtype must be \"f32le\"");
    if (field_of<std::string>(meta, "order", meta_path) != "x-fastest")
        throw IoError(meta_path.string() + ": order must be \"x-fastest\"");
    const auto d = field_of<std::vector<int>>(meta, "dims", meta_path);
    if (d.size() != 3 || *std::min_element(d.begin(), d.end()) < 1)
        throw IoError(meta_path.string() + ": dims must be three positive integers");
    Volume vol({d[0], d[1], d[2]}, vec_of(meta, "spacing", meta_path), vec_of(meta, "origin", meta_path));
    vol.data = read_floats(with_ext(path, ".raw"), vol.data.size());
    return vol;
}

void write_projections(const fs::path& dir, const ProjectionSet& p)
{
    validate(p.geom);
    if (p.data.size() != static_cast<std::size_t>(p.geom.total_pixels()))
        throw std::invalid_argument("projection data size does not match its geometry");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    write_text(dir / "geometry.json", geometry_json(p.geom).dump(2) + "\n");
    for (int k = 0; k < p.geom.n_views; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%04d.raw", k);
        const auto view = p.view(k);
        write_bytes(dir / name, view.data(), view.size() * sizeof(float));
    }
}

ProjectionSet read_projections(const fs::path& dir)
{
    const fs::path gpath = dir / "geometry.json";
    const json g = parse_json_file(gpath);
    if (!g.contains("volume_bounds"))
        throw IoError(gpath.string() + ": missing \"volume_bounds\"");
    const json b = field_of<json>(g, "volume_bounds", gpath);
    ScanGeometry geom;
    try {
        geom = make_circular_geometry(field_of<int>(g, "n_views", gpath), field_of<double>(g, "source_to_isocenter", gpath),
                                      field_of<double>(g, "source_to_detector", gpath),
                                      field_of<int>(g, "detector_rows", gpath), field_of<int>(g, "detector_cols", gpath),
                                      field_of<double>(g, "pixel_pitch_u", gpath),
                                      field_of<double>(g, "pixel_pitch_v", gpath),
                                      Aabb{vec_of(b, "min", gpath), vec_of(b, "max", gpath)},
                                      field_of<double>(g, "angular_range", gpath));
    } catch (const std::invalid_argument& e) {
        throw IoError(gpath.string() + ": " + e.what());
    }

    std::size_t raw_files = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("view_", 0) == 0 && entry.path().extension() == ".raw")
            ++raw_files;
    }
    if (raw_files != static_cast<std::size_t>(geom.n_views))
        throw IoError(dir.string() + ": expected " + std::to_string(geom.n_views) + " view files, found " +
                      std::to_string(raw_files));

    ProjectionSet p(geom);
    for (int k = 0; k < geom.n_views; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%04d.raw", k);
        const auto values = read_floats(dir / name, static_cast<std::size_t>(geom.pixels_per_view()));
        std::copy(values.begin(), values.end(), p.view(k).begin());
    }
    return p;
}

void save_checkpoint(const fs::path& path, const RdaField<float>& field, const Checkpoint& meta)
{
    json tensors = json::array();
    for (const auto& slot : field.layout().slots)
        tensors.push_back({{"name", slot.name}, {"offset", slot.offset}, {"shape", slot.shape}});
    const fs::path bin = with_ext(path, ".bin");
    const json manifest = {{"format", "rmct-field-v1"},
                           {"dtype", "f32le"},
                           {"blob", bin.filename().string()},
                           {"parameter_count", field.parameter_count()},
                           {"field", field_config_json(meta.field)},
                           {"bounds", {{"min", vec_json(meta.bounds.min)}, {"max", vec_json(meta.bounds.max)}}},
                           {"seed", meta.seed},
                           {"use_rda", meta.use_rda},
                           {"use_xray_sampling", meta.use_xray_sampling},
                           {"tensors", tensors}};
    write_text(with_ext(path, ".json"), manifest.dump(2) + "\n");
    const auto params = field.parameters();
    write_bytes(bin, params.data(), params.size() * sizeof(float));
}

Checkpoint read_checkpoint_manifest(const fs::path& path)
{
    const fs::path mpath = with_ext(path, ".json");
    const json m = parse_json_file(mpath);
    if (field_of<std::string>(m, "format", mpath) != "rmct-field-v1")
        throw IoError(mpath.string() + ": unsupported checkpoint format");
    Checkpoint c;
    const json f = field_of<json>(m, "field", mpath);
    c.field.levels = field_of<int>(f, "levels", mpath);
    c.field.table_log2 = field_of<int>(f, "table_log2", mpath);
    c.field.feats_per_level = field_of<int>(f, "feats_per_level", mpath);
    c.field.base_res = field_of<int>(f, "base_res", mpath);
    c.field.growth = field_of<double>(f, "growth", mpath);
    c.field.width = field_of<int>(f, "width", mpath);
    c.field.heads = field_of<int>(f, "heads", mpath);
    c.field.blocks = field_of<int>(f, "blocks", mpath);
    c.field.use_attention = field_of<bool>(f, "use_attention", mpath);
    const json b = field_of<json>(m, "bounds", mpath);
    c.bounds = {vec_of(b, "min", mpath), vec_of(b, "max", mpath)};
    c.seed = field_of<std::uint64_t>(m, "seed", mpath);
    c.use_rda = field_of<bool>(m, "use_rda", mpath);
    c.use_xray_sampling = field_of<bool>(m, "use_xray_sampling", mpath);
    try {
        c.field.validate();
    } catch (const std::invalid_argument& e) {
        throw IoError(mpath.string() + ": " + e.what());
    }
    return c;
}

RdaField<float> load_checkpoint(const fs::path& path, Checkpoint* meta)
{
    const Checkpoint c = read_checkpoint_manifest(path);
    RdaField<float> field(c.field, c.bounds, c.seed);
    const auto values = read_floats(with_ext(path, ".bin"), field.parameter_count());
    std::copy(values.begin(), values.end(), field.parameters().begin());
    for (float v : values)
        if (!std::isfinite(v))
            throw IoError(with_ext(path, ".bin").string() + ": non-finite parameter");
    if (meta)
        *meta = c;
    return field;
}

RunConfig parse_run_config(std::string_view text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    Section top(root, "");
    top.allow({"train", "field", "sampler", "occupancy", "sart", "paths"});

    if (top.has("train")) {
        Section s(top.raw("train"), "train");
        s.allow({"iterations", "batch_rays", "learning_rate", "lr_decay", "seed", "log_every", "use_xray_sampling",
                 "use_rda", "attention_per_interval", "context_dropout", "dense_lr_scale", "tv_weight", "threads"});
        auto& t = cfg.train;
        s.get("iterations", t.iterations);
        s.get("batch_rays", t.batch_rays);
        s.get("learning_rate", t.learning_rate);
        s.get("lr_decay", t.lr_decay);
        s.get("seed", t.seed);
        s.get("log_every", t.log_every);
        s.get("use_xray_sampling", t.use_xray_sampling);
        s.get("use_rda", t.use_rda);
        s.get("attention_per_interval", t.attention_per_interval);
        s.get("context_dropout", t.context_dropout);
        s.get("dense_lr_scale", t.dense_lr_scale);
        s.get("tv_weight", t.tv_weight);
        s.get("threads", t.threads);
    }
    if (top.has("field")) {
        Section s(top.raw("field"), "field");
        s.allow({"levels", "table_log2", "feats_per_level", "base_res", "growth", "width", "heads", "blocks"});
        read_field(s, cfg.train.field);
    }
    if (top.has("sampler")) {
        Section s(top.raw("sampler"), "sampler");
        s.allow({"n1", "n2", "intervals_as_segments"});
        s.get("n1", cfg.train.n1);
        s.get("n2", cfg.train.n2);
        s.get("intervals_as_segments", cfg.train.intervals_as_segments);
    }
    if (top.has("occupancy")) {
        Section s(top.raw("occupancy"), "occupancy");
        s.allow({"resolution", "refresh_every", "tau_fraction", "ema"});
        s.get("resolution", cfg.train.occupancy_resolution);
        s.get("refresh_every", cfg.train.occupancy_refresh_every);
        s.get("tau_fraction", cfg.train.occupancy_tau_fraction);
        s.get("ema", cfg.train.occupancy_ema);
    }
    if (top.has("sart")) {
        Section s(top.raw("sart"), "sart");
        s.allow({"iterations", "relaxation", "nonneg_clamp", "step", "threads"});
        s.get("iterations", cfg.sart.iterations);
        s.get("relaxation", cfg.sart.relaxation);
        s.get("nonneg_clamp", cfg.sart.nonneg_clamp);
        s.get("step", cfg.sart.step);
        s.get("threads", cfg.sart.threads);
    }
    if (top.has("paths")) {
        Section s(top.raw("paths"), "paths");
        s.allow({"proj", "gt", "out", "report"});
        s.get("proj", cfg.paths.proj);
        s.get("gt", cfg.paths.gt);
        s.get("out", cfg.paths.out);
        s.get("report", cfg.paths.report);
    }
    cfg.train.validate();
    cfg.sart.validate();
    return cfg;
}

RunConfig read_run_config(const fs::path& path)
{
    const std::string text = read_text(path);
    try {
        return parse_run_config(text);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

std::string run_config_json(const RunConfig& cfg)
{
    const auto& t = cfg.train;
    json field = field_config_json(t.field);
    field.erase("use_attention");
    json j = {{"train",
               {{"iterations", t.iterations},
                {"batch_rays", t.batch_rays},
                {"learning_rate", t.learning_rate},
                {"lr_decay", t.lr_decay},
                {"seed", t.seed},
                {"log_every", t.log_every},
                {"use_xray_sampling", t.use_xray_sampling},
                {"use_rda", t.use_rda},
                {"attention_per_interval", t.attention_per_interval},
                {"context_dropout", t.context_dropout},
                {"dense_lr_scale", t.dense_lr_scale},
                {"tv_weight", t.tv_weight},
                {"threads", t.threads}}},
              {"field", field},
              {"sampler", {{"n1", t.n1}, {"n2", t.n2}, {"intervals_as_segments", t.intervals_as_segments}}},
              {"occupancy",
               {{"resolution", t.occupancy_resolution},
                {"refresh_every", t.occupancy_refresh_every},
                {"tau_fraction", t.occupancy_tau_fraction},
                {"ema", t.occupancy_ema}}},
              {"sart",
               {{"iterations", cfg.sart.iterations},
                {"relaxation", cfg.sart.relaxation},
                {"nonneg_clamp", cfg.sart.nonneg_clamp},
                {"step", cfg.sart.step},
                {"threads", cfg.sart.threads}}}};
    json paths = json::object();
    if (cfg.paths.proj) paths["proj"] = *cfg.paths.proj;
    if (cfg.paths.gt) paths["gt"] = *cfg.paths.gt;
    if (cfg.paths.out) paths["out"] = *cfg.paths.out;
    if (cfg.paths.report) paths["report"] = *cfg.paths.report;
    if (!paths.empty())
        j["paths"] = paths;
    return j.dump(2) + "\n";
}

std::string metric_report_json(const MetricReport& m)
{
    const json j = {{"psnr", m.psnr_db},   {"ssim", m.ssim},
                    {"iou", m.iou},        {"dice", m.dice},
                    {"data_range", m.data_range_used}, {"threshold", m.threshold_used}};
    return j.dump(2) + "\n";
}

std::string train_report_json(const TrainReport& r)
{
    json j = {{"iterations", r.iterations},
              {"log_every", r.log_every},
              {"loss_history", r.loss_history},
              {"wall_seconds", r.wall_seconds},
              {"rays", r.samples.rays},
              {"mean_samples_per_ray", r.samples.mean_samples_per_ray()},
              {"empty_ray_fraction", r.samples.empty_fraction()},
              {"occupied_fraction", r.occupied_fraction},
              {"occupancy_refreshes", r.occupancy_refreshes}};
    if (r.metrics)
        j["metrics"] = json::parse(metric_report_json(*r.metrics));
    return j.dump(2) + "\n";
}

Axis parse_axis(std::string_view name)
{
    if (name == "x")
        return Axis::x;
    if (name == "y")
        return Axis::y;
    if (name == "z")
        return Axis::z;
    throw std::invalid_argument("axis must be x, y or z, got \"" + std::string(name) + "\"");
}

void write_pgm_slice(const fs::path& path, const Volume& vol, Axis axis, int index)
{
    const int a = static_cast<int>(axis);
    if (index < 0 || index >= vol.dims[a])
        throw std::invalid_argument("slice index " + std::to_string(index) + " outside [0, " +
                                    std::to_string(vol.dims[a]) + ")");
    // Image columns/rows follow the two remaining axes in x, y, z order.
    const int ca = a == 0 ? 1 : 0;
    const int ra = a == 2 ? 1 : 2;
    const int w = vol.dims[ca];
    const int h = vol.dims[ra];
    std::vector<float> px(static_cast<std::size_t>(w) * h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            std::array<int, 3> ijk{};
            ijk[a] = index;
            ijk[ca] = c;
            ijk[ra] = r;
            px[static_cast<std::size_t>(r) * w + c] = vol.at(ijk[0], ijk[1], ijk[2]);
        }
    const auto [lo, hi] = std::minmax_element(px.begin(), px.end());
    const double low = *lo;
    const double span = static_cast<double>(*hi) - low;
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
        const double x = span > 0.0 ? (px[i] - low) / span : 0.0;
        out[header + i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)));
    }
    write_text(path, out);
}

}  // namespace rmct

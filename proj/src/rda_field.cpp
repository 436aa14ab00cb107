#include "rmct/rda_field.hpp"

#include "rmct/errors.hpp"
#include "rmct/parallel.hpp"
#include "rmct/prng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rmct {

int FieldConfig::level_resolution(int level) const
{
    return static_cast<int>(std::floor(base_res * std::pow(growth, level)));
}

void FieldConfig::validate() const
{
    if (levels < 1 || feats_per_level < 1 || base_res < 1)
        throw std::invalid_argument("hash encoder levels, features and base resolution must be >= 1");
    if (table_log2 < 1 || table_log2 > 30)
        throw std::invalid_argument("hash table_log2 must lie in [1, 30]");
    if (!(growth > 1.0))
        throw std::invalid_argument("hash level growth must exceed 1");
    if (width < 1 || heads < 1 || width % heads != 0)
        throw std::invalid_argument("field width must be a positive multiple of heads");
    if (blocks < 0)
        throw std::invalid_argument("block count must be >= 0");
}

std::size_t TensorSlot::count() const
{
    std::size_t n = 1;
    for (int s : shape)
        n *= static_cast<std::size_t>(s);
    return n;
}

ParamLayout ParamLayout::build(const FieldConfig& cfg)
{
    cfg.validate();
    ParamLayout lay;
    std::size_t off = 0;
    auto add = [&](std::string name, std::vector<int> shape) {
        TensorSlot slot{std::move(name), off, std::move(shape)};
        off += slot.count();
        lay.slots.push_back(slot);
        return slot.offset;
    };
    const int d = cfg.width;
    lay.hash = add("hash_tables", {cfg.levels, cfg.table_size(), cfg.feats_per_level});
    lay.in_w = add("input_proj.weight", {cfg.feature_dim(), d});
    lay.in_b = add("input_proj.bias", {d});
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        Block blk{};
        blk.fuse_w = add(p + "fusion.weight", {d, d});
        blk.fuse_b = add(p + "fusion.bias", {d});
        blk.wq = add(p + "attn.query", {d, d});
        blk.wk = add(p + "attn.key", {d, d});
        blk.wv = add(p + "attn.value", {d, d});
        blk.wo = add(p + "attn.output", {d, d});
        lay.blocks.push_back(blk);
    }
    lay.head_w = add("head.weight", {d});
    lay.head_b = add("head.bias", {1});
    lay.total = off;
    return lay;
}

template <typename Scalar>
void hash_encode(const FieldConfig& cfg, std::span<const Scalar> tables, const Vec3& p, std::span<Scalar> out,
                 std::uint32_t* rows, Scalar* weights)
{
    const int F = cfg.feats_per_level;
    const auto T = static_cast<std::uint32_t>(cfg.table_size());
    for (int level = 0; level < cfg.levels; ++level) {
        const int res = cfg.level_resolution(level);
        std::uint32_t base[3];
        double frac[3];
        for (int a = 0; a < 3; ++a) {
            const double x = std::clamp(p[a], 0.0, 1.0) * res;
            const int i = std::min(static_cast<int>(std::floor(x)), res - 1);
            base[a] = static_cast<std::uint32_t>(i);
            frac[a] = x - i;
        }
        const Scalar* table = tables.data() + static_cast<std::size_t>(level) * T * F;
        Scalar* dst = out.data() + static_cast<std::size_t>(level) * F;
        for (int f = 0; f < F; ++f)
            dst[f] = Scalar(0);
        for (int c = 0; c < 8; ++c) {
            const std::uint32_t cx = base[0] + (c & 1);
            const std::uint32_t cy = base[1] + ((c >> 1) & 1);
            const std::uint32_t cz = base[2] + ((c >> 2) & 1);
            const auto w = static_cast<Scalar>(((c & 1) ? frac[0] : 1.0 - frac[0]) *
                                               (((c >> 1) & 1) ? frac[1] : 1.0 - frac[1]) *
                                               (((c >> 2) & 1) ? frac[2] : 1.0 - frac[2]));
            const std::uint32_t row = spatial_hash(cx, cy, cz, T);
            const Scalar* src = table + static_cast<std::size_t>(row) * F;
            for (int f = 0; f < F; ++f)
                dst[f] += w * src[f];
            if (rows) {
                rows[level * 8 + c] = row;
                weights[level * 8 + c] = w;
            }
        }
    }
}

template void hash_encode<float>(const FieldConfig&, std::span<const float>, const Vec3&, std::span<float>,
                                 std::uint32_t*, float*);
template void hash_encode<double>(const FieldConfig&, std::span<const double>, const Vec3&, std::span<double>,
                                  std::uint32_t*, double*);

namespace {

template <typename Scalar>
Scalar sigmoid(Scalar x)
{
    if (x >= Scalar(0))
        return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar softplus(Scalar x)
{
    return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Scalar>
Scalar silu(Scalar x)
{
    return x * sigmoid(x);
}

template <typename Scalar>
Scalar silu_grad(Scalar x)
{
    const Scalar s = sigmoid(x);
    return s * (Scalar(1) + x * (Scalar(1) - s));
}

template <typename Mat>
void softmax_rows(Mat& m)
{
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        const auto mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        row /= row.sum();
    }
}

}  // namespace

template <typename Scalar>
RdaField<Scalar>::RdaField(const FieldConfig& cfg, const Aabb& bounds, std::uint64_t seed)
    : cfg_(cfg), bounds_(bounds), layout_(ParamLayout::build(cfg))
{
    params_.assign(layout_.total, Scalar(0));
    Pcg32 rng(seed, 0x5eedf1e1dULL);
    auto uniform = [&](std::size_t off, std::size_t count, double bound) {
        for (std::size_t i = 0; i < count; ++i)
            params_[off + i] = static_cast<Scalar>((2.0 * rng.uniform() - 1.0) * bound);
    };
    const std::size_t d = cfg.width;
    uniform(layout_.hash, layout_.slots[0].count(), 1e-4);
    uniform(layout_.in_w, static_cast<std::size_t>(cfg.feature_dim()) * d, 1.0 / std::sqrt(cfg.feature_dim()));
    for (const auto& blk : layout_.blocks) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(d));
        uniform(blk.fuse_w, d * d, bound);
        uniform(blk.wq, d * d, bound);
        uniform(blk.wk, d * d, bound);
        uniform(blk.wv, d * d, bound);
        uniform(blk.wo, d * d, bound);
    }
    uniform(layout_.head_w, d, 1.0 / std::sqrt(static_cast<double>(d)));
}

template <typename Scalar>
Vec3 RdaField<Scalar>::normalize(const Vec3& w) const
{
    const Vec3 e = bounds_.extent();
    return {std::clamp((w.x - bounds_.min.x) / e.x, 0.0, 1.0), std::clamp((w.y - bounds_.min.y) / e.y, 0.0, 1.0),
            std::clamp((w.z - bounds_.min.z) / e.z, 0.0, 1.0)};
}

template <typename Scalar>
void RdaField<Scalar>::encode_sequence(std::span<const Vec3> pts, Mat& features, std::uint32_t* rows,
                                       Scalar* weights) const
{
    const int LF = cfg_.feature_dim();
    const std::size_t corners = 8 * static_cast<std::size_t>(cfg_.levels);
    features.resize(static_cast<Eigen::Index>(pts.size()), LF);
    const std::span<const Scalar> tables(params_.data() + layout_.hash, layout_.slots[0].count());
    for (std::size_t i = 0; i < pts.size(); ++i)
        hash_encode<Scalar>(cfg_, tables, normalize(pts[i]), std::span<Scalar>(features.row(i).data(), LF),
                            rows ? rows + i * corners : nullptr, weights ? weights + i * corners : nullptr);
}

template <typename Scalar>
void RdaField<Scalar>::query_densities(std::span<const Vec3> pts, std::span<Scalar> out, RayTape<Scalar>* tape) const
{
    forward(pts, out, tape, false);
}

template <typename Scalar>
void RdaField<Scalar>::query_isolated(std::span<const Vec3> pts, std::span<Scalar> out, RayTape<Scalar>* tape) const
{
    forward(pts, out, tape, true);
}

template <typename Scalar>
void RdaField<Scalar>::forward(std::span<const Vec3> pts, std::span<Scalar> out, RayTape<Scalar>* tape,
                               bool isolated) const
{
    using Map = Eigen::Map<const Mat>;
    using RowMap = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>;
    using ColMap = Eigen::Map<const Vec>;
    const int n = static_cast<int>(pts.size());
    if (n == 0)
        throw std::invalid_argument("query_densities needs at least one sample");
    if (out.size() != pts.size())
        throw std::invalid_argument("query_densities output size mismatch");

    RayTape<Scalar> local;
    RayTape<Scalar>& tp = tape ? *tape : local;
    const int d = cfg_.width;
    const int LF = cfg_.feature_dim();
    const int H = cfg_.heads;
    const int dh = cfg_.head_dim();
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    const Scalar* p = params_.data();

    tp.n = n;
    tp.attention = cfg_.use_attention;
    tp.isolated = isolated;
    const std::size_t corners = static_cast<std::size_t>(n) * 8 * cfg_.levels;
    tp.corner_rows.resize(corners);
    tp.corner_weights.resize(corners);
    encode_sequence(pts, tp.features, tp.corner_rows.data(), tp.corner_weights.data());

    Mat act = tp.features * Map(p + layout_.in_w, LF, d);
    act.rowwise() += RowMap(p + layout_.in_b, d);

    tp.blocks.resize(layout_.blocks.size());
    for (std::size_t b = 0; b < layout_.blocks.size(); ++b) {
        const auto& L = layout_.blocks[b];
        auto& c = tp.blocks[b];
        c.input = act;
        c.pre = act * Map(p + L.fuse_w, d, d);
        c.pre.rowwise() += RowMap(p + L.fuse_b, d);
        c.h1 = c.input + c.pre.unaryExpr([](Scalar x) { return silu(x); });
        if (cfg_.use_attention && isolated) {
            // every row attends only to itself, so the attention output is its value
            c.v = c.h1 * Map(p + L.wv, d, d);
            c.probs.clear();
            act = c.h1 + c.v * Map(p + L.wo, d, d);
        } else if (cfg_.use_attention) {
            c.q = c.h1 * Map(p + L.wq, d, d);
            c.k = c.h1 * Map(p + L.wk, d, d);
            c.v = c.h1 * Map(p + L.wv, d, d);
            c.o.resize(n, d);
            c.probs.resize(static_cast<std::size_t>(H));
            for (int h = 0; h < H; ++h) {
                Mat& P = c.probs[h];
                P.noalias() = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose();
                P *= scale;
                softmax_rows(P);
                c.o.middleCols(h * dh, dh).noalias() = P * c.v.middleCols(h * dh, dh);
            }
            act = c.h1 + c.o * Map(p + L.wo, d, d);
        } else {
            act = c.h1;
        }
    }
    tp.last = std::move(act);
    tp.pre_head = tp.last * ColMap(p + layout_.head_w, d);
    tp.pre_head.array() += p[layout_.head_b];
    tp.density.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        tp.density[i] = softplus(tp.pre_head[i]);
        out[i] = tp.density[i];
    }
    tp.recorded = tape != nullptr;
}

template <typename Scalar>
void RdaField<Scalar>::query_independent(std::span<const Vec3> pts, std::span<Scalar> out, int threads) const
{
    using Map = Eigen::Map<const Mat>;
    using RowMap = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>;
    using ColMap = Eigen::Map<const Vec>;
    if (out.size() != pts.size())
        throw std::invalid_argument("query_independent output size mismatch");
    constexpr std::size_t chunk = 2048;
    const std::size_t n_chunks = (pts.size() + chunk - 1) / chunk;
    const int d = cfg_.width;
    const int LF = cfg_.feature_dim();
    const Scalar* p = params_.data();

    parallel_for(n_chunks, threads, [&](std::size_t c0, std::size_t c1, int) {
        Mat features;
        for (std::size_t c = c0; c < c1; ++c) {
            const std::size_t begin = c * chunk;
            const std::size_t count = std::min(chunk, pts.size() - begin);
            encode_sequence(pts.subspan(begin, count), features, nullptr, nullptr);
            Mat act = features * Map(p + layout_.in_w, LF, d);
            act.rowwise() += RowMap(p + layout_.in_b, d);
            for (const auto& L : layout_.blocks) {
                Mat pre = act * Map(p + L.fuse_w, d, d);
                pre.rowwise() += RowMap(p + L.fuse_b, d);
                Mat h1 = act + pre.unaryExpr([](Scalar x) { return silu(x); });
                if (cfg_.use_attention) {
                    // a length-1 sequence attends only to itself with weight 1
                    Mat v = h1 * Map(p + L.wv, d, d);
                    act = h1 + v * Map(p + L.wo, d, d);
                } else {
                    act = std::move(h1);
                }
            }
            Vec s = act * ColMap(p + layout_.head_w, d);
            for (std::size_t i = 0; i < count; ++i)
                out[begin + i] = softplus(s[static_cast<Eigen::Index>(i)] + p[layout_.head_b]);
        }
    });
}

template <typename Scalar>
void RdaField<Scalar>::backward(const RayTape<Scalar>& tp, std::span<const Scalar> density_grad,
                                std::span<Scalar> grad) const
{
    using Map = Eigen::Map<const Mat>;
    using MutMap = Eigen::Map<Mat>;
    using RowMut = Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>;
    using ColMap = Eigen::Map<const Vec>;
    using ColMut = Eigen::Map<Vec>;
    if (!tp.recorded)
        throw InvalidState("backward called on a tape that recorded no forward pass");
    if (density_grad.size() != static_cast<std::size_t>(tp.n))
        throw InvalidState("backward: density gradient length does not match the taped sequence");
    if (grad.size() != params_.size())
        throw InvalidState("backward: gradient buffer does not match the parameter count");
    if (tp.attention != cfg_.use_attention || tp.blocks.size() != layout_.blocks.size())
        throw InvalidState("backward: tape was recorded by a differently configured field");

    const int n = tp.n;
    const int d = cfg_.width;
    const int LF = cfg_.feature_dim();
    const int H = cfg_.heads;
    const int dh = cfg_.head_dim();
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    const Scalar* p = params_.data();
    Scalar* g = grad.data();

    Vec ds(n);
    for (int i = 0; i < n; ++i)
        ds[i] = density_grad[i] * sigmoid(tp.pre_head[i]);
    ColMut(g + layout_.head_w, d).noalias() += tp.last.transpose() * ds;
    g[layout_.head_b] += ds.sum();
    Mat dact = ds * ColMap(p + layout_.head_w, d).transpose();

    for (std::size_t bi = layout_.blocks.size(); bi-- > 0;) {
        const auto& L = layout_.blocks[bi];
        const auto& c = tp.blocks[bi];
        Mat dh1 = dact;
        if (tp.attention && tp.isolated) {
            MutMap(g + L.wo, d, d).noalias() += c.v.transpose() * dact;
            const Mat dv = dact * Map(p + L.wo, d, d).transpose();
            MutMap(g + L.wv, d, d).noalias() += c.h1.transpose() * dv;
            dh1.noalias() += dv * Map(p + L.wv, d, d).transpose();
        } else if (tp.attention) {
            MutMap(g + L.wo, d, d).noalias() += c.o.transpose() * dact;
            const Mat d_o = dact * Map(p + L.wo, d, d).transpose();
            Mat dq(n, d), dk(n, d), dv(n, d);
            for (int h = 0; h < H; ++h) {
                const Mat& P = c.probs[h];
                const auto doh = d_o.middleCols(h * dh, dh);
                Mat dP = doh * c.v.middleCols(h * dh, dh).transpose();
                dv.middleCols(h * dh, dh).noalias() = P.transpose() * doh;
                const Vec row_dot = P.cwiseProduct(dP).rowwise().sum();
                Mat dS = P.cwiseProduct(dP - row_dot.replicate(1, n));
                dS *= scale;
                dq.middleCols(h * dh, dh).noalias() = dS * c.k.middleCols(h * dh, dh);
                dk.middleCols(h * dh, dh).noalias() = dS.transpose() * c.q.middleCols(h * dh, dh);
            }
            MutMap(g + L.wq, d, d).noalias() += c.h1.transpose() * dq;
            MutMap(g + L.wk, d, d).noalias() += c.h1.transpose() * dk;
            MutMap(g + L.wv, d, d).noalias() += c.h1.transpose() * dv;
            dh1.noalias() += dq * Map(p + L.wq, d, d).transpose();
            dh1.noalias() += dk * Map(p + L.wk, d, d).transpose();
            dh1.noalias() += dv * Map(p + L.wv, d, d).transpose();
        }
        const Mat dpre = dh1.cwiseProduct(c.pre.unaryExpr([](Scalar x) { return silu_grad(x); }));
        MutMap(g + L.fuse_w, d, d).noalias() += c.input.transpose() * dpre;
        RowMut(g + L.fuse_b, d) += dpre.colwise().sum();
        dact = dh1;
        dact.noalias() += dpre * Map(p + L.fuse_w, d, d).transpose();
    }

    MutMap(g + layout_.in_w, LF, d).noalias() += tp.features.transpose() * dact;
    RowMut(g + layout_.in_b, d) += dact.colwise().sum();
    const Mat dfeat = dact * Map(p + layout_.in_w, LF, d).transpose();

    const int F = cfg_.feats_per_level;
    const std::size_t T = static_cast<std::size_t>(cfg_.table_size());
    Scalar* gtab = g + layout_.hash;
    for (int i = 0; i < n; ++i)
        for (int level = 0; level < cfg_.levels; ++level) {
            const std::size_t base = (static_cast<std::size_t>(i) * cfg_.levels + level) * 8;
            Scalar* lt = gtab + static_cast<std::size_t>(level) * T * F;
            for (int c = 0; c < 8; ++c) {
                const Scalar w = tp.corner_weights[base + c];
                Scalar* row = lt + static_cast<std::size_t>(tp.corner_rows[base + c]) * F;
                for (int f = 0; f < F; ++f)
                    row[f] += w * dfeat(i, level * F + f);
            }
        }
}

template class RdaField<float>;
template class RdaField<double>;

}  // namespace rmct

#pragma once

#include "rmct/geometry.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rmct {

/// Shape hyperparameters of the density field.
struct FieldConfig {
    int levels = 8;           ///< hash levels
    int table_log2 = 16;      ///< log2 of rows per level table
    int feats_per_level = 2;
    int base_res = 16;
    double growth = 1.5;
    int width = 32;           ///< hidden width d
    int heads = 4;
    int blocks = 2;
    bool use_attention = true;  ///< false bypasses the per-ray attention in every block

    int table_size() const { return 1 << table_log2; }
    int feature_dim() const { return levels * feats_per_level; }
    int head_dim() const { return width / heads; }
    int level_resolution(int level) const;
    void validate() const;
};

struct TensorSlot {
    std::string name;
    std::size_t offset = 0;
    std::vector<int> shape;
    std::size_t count() const;
};

/// Offsets of every parameter tensor inside one flat array.
struct ParamLayout {
    struct Block {
        std::size_t fuse_w, fuse_b, wq, wk, wv, wo;
    };
    std::size_t hash = 0;
    std::size_t in_w = 0, in_b = 0;
    std::vector<Block> blocks;
    std::size_t head_w = 0, head_b = 0;
    std::size_t total = 0;
    std::vector<TensorSlot> slots;

    static ParamLayout build(const FieldConfig& cfg);
};

constexpr std::uint32_t kHashPrimes[3] = {1u, 2654435761u, 805459861u};

/// Row of level table for integer lattice corner (x, y, z).
inline std::uint32_t spatial_hash(std::uint32_t x, std::uint32_t y, std::uint32_t z, std::uint32_t table_size)
{
    return ((x * kHashPrimes[0]) ^ (y * kHashPrimes[1]) ^ (z * kHashPrimes[2])) & (table_size - 1u);
}

/// Multiresolution hash encoding of a point in [0,1]^3.
///
/// `tables` is levels x table_size x feats. For every level the 8 corners of
/// the enclosing cell are hashed and their rows blended trilinearly. When
/// `rows`/`weights` are given they receive the 8 * levels table rows and
/// blend weights, level-major.
template <typename Scalar>
void hash_encode(const FieldConfig& cfg, std::span<const Scalar> tables, const Vec3& p, std::span<Scalar> out,
                 std::uint32_t* rows = nullptr, Scalar* weights = nullptr);

/// Intermediates of one ray's forward pass, enough for exact reverse mode.
template <typename Scalar>
struct RayTape {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    struct Block {
        Mat input, pre, h1, q, k, v, o;
        std::vector<Mat> probs;  ///< per head, n x n attention weights
    };

    int n = 0;
    bool recorded = false;
    bool attention = true;
    bool isolated = false;  ///< every sample was its own length-1 sequence
    std::vector<std::uint32_t> corner_rows;
    std::vector<Scalar> corner_weights;
    Mat features;
    std::vector<Block> blocks;
    Mat last;
    Vec pre_head;
    std::vector<Scalar> density;

    void clear() { recorded = false; n = 0; }
};

/// Parameter and gradient storage. A fixed base alignment keeps Eigen's
/// vectorised kernels, and so the rounding, independent of heap addresses.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

/// Hash encoder, residual fusion + per-ray multi-head self-attention blocks,
/// and a softplus density head. All parameters live in one flat array laid
/// out by ParamLayout.
template <typename Scalar>
class RdaField {
public:
    using Mat = typename RayTape<Scalar>::Mat;
    using Vec = typename RayTape<Scalar>::Vec;

    RdaField(const FieldConfig& cfg, const Aabb& bounds, std::uint64_t seed);

    const FieldConfig& config() const { return cfg_; }
    const Aabb& bounds() const { return bounds_; }
    const ParamLayout& layout() const { return layout_; }
    std::span<Scalar> parameters() { return params_; }
    std::span<const Scalar> parameters() const { return params_; }
    std::size_t parameter_count() const { return params_.size(); }

    /// Maps a world point into [0,1]^3 over the bounds (clamped).
    Vec3 normalize(const Vec3& world) const;

    /// Densities for the samples of one ray, attended to as one sequence.
    /// Records into `tape` when given. Throws on an empty sequence.
    void query_densities(std::span<const Vec3> world_points, std::span<Scalar> out, RayTape<Scalar>* tape = nullptr) const;

    /// Every point as its own length-1 sequence, recorded on one tape.
    void query_isolated(std::span<const Vec3> world_points, std::span<Scalar> out, RayTape<Scalar>* tape = nullptr) const;

    /// Every point as its own length-1 sequence, batched. Splits work into
    /// fixed chunks so the result does not depend on `threads`.
    void query_independent(std::span<const Vec3> world_points, std::span<Scalar> out, int threads = 1) const;

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(density).
    void backward(const RayTape<Scalar>& tape, std::span<const Scalar> density_grad, std::span<Scalar> grad) const;

private:
    void forward(std::span<const Vec3> world_points, std::span<Scalar> out, RayTape<Scalar>* tape, bool isolated) const;
    void encode_sequence(std::span<const Vec3> world_points, Mat& features, std::uint32_t* rows, Scalar* weights) const;

    FieldConfig cfg_;
    Aabb bounds_;
    ParamLayout layout_;
    AlignedVector<Scalar> params_;
};

extern template class RdaField<float>;
extern template class RdaField<double>;

}  // namespace rmct

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pag {

enum class MetricKind : uint8_t { euclidean = 0, cosine = 1 };

enum class VecFormat { fvecs, bvecs };

/// Contiguous row-major float storage with zero-padded rows and cached norms.
/// Rows are appended once and never mutated; the row count is published
/// atomically so concurrent readers never observe a partially written row.
class VectorSet {
public:
    VectorSet() = default;
    VectorSet(size_t dim, size_t padded_dim, MetricKind metric = MetricKind::euclidean);

    VectorSet(VectorSet&& other) noexcept;
    VectorSet& operator=(VectorSet&& other) noexcept;
    VectorSet(const VectorSet&) = delete;
    VectorSet& operator=(const VectorSet&) = delete;

    /// Appends one vector (dim components). Under cosine the row is
    /// normalized to unit norm; zero vectors are rejected. Returns the row id.
    uint32_t add(std::span<const float> v);

    size_t count() const { return count_.load(std::memory_order_acquire); }
    size_t dim() const { return dim_; }
    size_t padded_dim() const { return padded_dim_; }
    MetricKind metric() const { return metric_; }

    const float* row(size_t i) const { return data_.data() + i * padded_dim_; }
    float norm(size_t i) const { return norms_[i]; }

    /// Rewrites the layout so padded_dim is the least multiple of `multiple`
    /// covering dim. Only valid before the set is shared with readers.
    void repad(size_t multiple);

    /// Trusted bit-exact ingestion of an already padded row with its cached
    /// norm (index deserialization; skips normalization and finiteness checks).
    uint32_t add_raw(const float* padded_row, float norm);

    /// Pre-allocates room for `rows` total rows so appends never reallocate.
    void reserve(size_t rows);
    size_t capacity() const { return capacity_; }

private:
    size_t dim_ = 0;
    size_t padded_dim_ = 0;
    size_t capacity_ = 0;
    MetricKind metric_ = MetricKind::euclidean;
    std::atomic<size_t> count_{0};
    std::vector<float> data_;
    std::vector<float> norms_;
};

/// Squared Euclidean distance with a fixed blocked accumulation order,
/// reproducible across runs. Both rows must share the same padded_dim.
float sq_dist(const float* a, const float* b, size_t padded_dim);

/// Euclidean norm of one row (same accumulation policy as sq_dist).
float vec_norm(const float* a, size_t padded_dim);

/// Reads an fvecs/bvecs file. Throws std::runtime_error with the offending
/// record index on malformed input; empty files are an error.
VectorSet load_vectors(const std::string& path, VecFormat format,
                       MetricKind metric = MetricKind::euclidean);

/// Reads an ibvecs file of integer id lists (ground truth).
std::vector<std::vector<int32_t>> load_ivecs(const std::string& path);

void save_fvecs(const std::string& path, const VectorSet& vs);
void save_ivecs(const std::string& path, const std::vector<std::vector<int32_t>>& rows);

}  // namespace pag

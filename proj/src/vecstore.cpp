#include "pag/vecstore.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace pag {

VectorSet::VectorSet(size_t dim, size_t padded_dim, MetricKind metric)
    : dim_(dim), padded_dim_(padded_dim), metric_(metric) {
    if (padded_dim_ < dim_) throw std::invalid_argument("padded_dim < dim");
}

VectorSet::VectorSet(VectorSet&& other) noexcept { *this = std::move(other); }

VectorSet& VectorSet::operator=(VectorSet&& other) noexcept {
    dim_ = other.dim_;
    padded_dim_ = other.padded_dim_;
    capacity_ = other.capacity_;
    metric_ = other.metric_;
    count_.store(other.count_.load(std::memory_order_acquire), std::memory_order_release);
    data_ = std::move(other.data_);
    norms_ = std::move(other.norms_);
    return *this;
}

void VectorSet::reserve(size_t rows) {
    if (rows <= capacity_) return;
    data_.resize(rows * padded_dim_, 0.0f);
    norms_.resize(rows, 0.0f);
    capacity_ = rows;
}

uint32_t VectorSet::add(std::span<const float> v) {
    if (v.size() != dim_) throw std::invalid_argument("vector dimension mismatch");
    size_t id = count_.load(std::memory_order_relaxed);
    if (id + 1 > capacity_) reserve(capacity_ == 0 ? 64 : capacity_ * 2);
    float* dst = data_.data() + id * padded_dim_;
    for (size_t k = 0; k < dim_; ++k) {
        if (!std::isfinite(v[k])) throw std::invalid_argument("non-finite component");
        dst[k] = v[k];
    }
    float nrm = vec_norm(dst, padded_dim_);
    if (metric_ == MetricKind::cosine) {
        if (nrm == 0.0f) throw std::invalid_argument("zero vector under cosine metric");
        float inv = 1.0f / nrm;
        for (size_t k = 0; k < dim_; ++k) dst[k] *= inv;
        nrm = vec_norm(dst, padded_dim_);
    }
    norms_[id] = nrm;
    count_.store(id + 1, std::memory_order_release);
    return static_cast<uint32_t>(id);
}

uint32_t VectorSet::add_raw(const float* padded_row, float norm) {
    size_t id = count_.load(std::memory_order_relaxed);
    if (id + 1 > capacity_) reserve(capacity_ == 0 ? 64 : capacity_ * 2);
    std::memcpy(data_.data() + id * padded_dim_, padded_row, padded_dim_ * sizeof(float));
    norms_[id] = norm;
    count_.store(id + 1, std::memory_order_release);
    return static_cast<uint32_t>(id);
}

void VectorSet::repad(size_t multiple) {
    size_t new_pad = ((dim_ + multiple - 1) / multiple) * multiple;
    if (new_pad == padded_dim_) return;
    size_t n = count();
    std::vector<float> fresh(capacity_ * new_pad, 0.0f);
    for (size_t i = 0; i < n; ++i)
        std::memcpy(fresh.data() + i * new_pad, row(i), dim_ * sizeof(float));
    data_ = std::move(fresh);
    padded_dim_ = new_pad;
}

float sq_dist(const float* a, const float* b, size_t padded_dim) {
    float acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
    size_t k = 0;
    for (; k + 4 <= padded_dim; k += 4) {
        float d0 = a[k] - b[k];
        float d1 = a[k + 1] - b[k + 1];
        float d2 = a[k + 2] - b[k + 2];
        float d3 = a[k + 3] - b[k + 3];
        acc0 += d0 * d0;
        acc1 += d1 * d1;
        acc2 += d2 * d2;
        acc3 += d3 * d3;
    }
    for (; k < padded_dim; ++k) {
        float d = a[k] - b[k];
        acc0 += d * d;
    }
    return ((acc0 + acc1) + (acc2 + acc3));
}

float vec_norm(const float* a, size_t padded_dim) {
    float acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
    size_t k = 0;
    for (; k + 4 <= padded_dim; k += 4) {
        acc0 += a[k] * a[k];
        acc1 += a[k + 1] * a[k + 1];
        acc2 += a[k + 2] * a[k + 2];
        acc3 += a[k + 3] * a[k + 3];
    }
    for (; k < padded_dim; ++k) acc0 += a[k] * a[k];
    return std::sqrt((acc0 + acc1) + (acc2 + acc3));
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_or_throw(const std::string& path, const char* mode) {
    std::FILE* f = std::fopen(path.c_str(), mode);
    if (!f) throw std::runtime_error("cannot open file: " + path);
    return FilePtr(f);
}

}  // namespace

VectorSet load_vectors(const std::string& path, VecFormat format, MetricKind metric) {
    FilePtr f = open_or_throw(path, "rb");
    VectorSet vs;
    std::vector<float> buf;
    std::vector<uint8_t> bbuf;
    size_t rec = 0;
    int32_t dim = 0;
    while (true) {
        int32_t d;
        size_t got = std::fread(&d, sizeof(int32_t), 1, f.get());
        if (got == 0) break;
        if (d <= 0) throw std::runtime_error("bad dimension at record " + std::to_string(rec));
        if (rec == 0) {
            dim = d;
            vs = VectorSet(static_cast<size_t>(dim), static_cast<size_t>(dim), metric);
            buf.resize(static_cast<size_t>(dim));
            bbuf.resize(static_cast<size_t>(dim));
        } else if (d != dim) {
            throw std::runtime_error("inconsistent dimension at record " + std::to_string(rec));
        }
        size_t n = static_cast<size_t>(dim);
        if (format == VecFormat::fvecs) {
            if (std::fread(buf.data(), sizeof(float), n, f.get()) != n)
                throw std::runtime_error("truncated record " + std::to_string(rec));
        } else {
            if (std::fread(bbuf.data(), 1, n, f.get()) != n)
                throw std::runtime_error("truncated record " + std::to_string(rec));
            for (size_t k = 0; k < n; ++k) buf[k] = static_cast<float>(bbuf[k]);
        }
        vs.add(buf);
        ++rec;
    }
    if (rec == 0) throw std::runtime_error("empty vector file: " + path);
    return vs;
}

std::vector<std::vector<int32_t>> load_ivecs(const std::string& path) {
    FilePtr f = open_or_throw(path, "rb");
    std::vector<std::vector<int32_t>> rows;
    size_t rec = 0;
    while (true) {
        int32_t d;
        size_t got = std::fread(&d, sizeof(int32_t), 1, f.get());
        if (got == 0) break;
        // empty id lists are legal (d == 0)
        if (d < 0) throw std::runtime_error("bad dimension at record " + std::to_string(rec));
        std::vector<int32_t> row(static_cast<size_t>(d));
        if (std::fread(row.data(), sizeof(int32_t), row.size(), f.get()) != row.size())
            throw std::runtime_error("truncated record " + std::to_string(rec));
        rows.push_back(std::move(row));
        ++rec;
    }
    if (rec == 0) throw std::runtime_error("empty ivecs file: " + path);
    return rows;
}

void save_fvecs(const std::string& path, const VectorSet& vs) {
    FilePtr f = open_or_throw(path, "wb");
    int32_t d = static_cast<int32_t>(vs.dim());
    for (size_t i = 0; i < vs.count(); ++i) {
        std::fwrite(&d, sizeof(int32_t), 1, f.get());
        std::fwrite(vs.row(i), sizeof(float), vs.dim(), f.get());
    }
}

void save_ivecs(const std::string& path, const std::vector<std::vector<int32_t>>& rows) {
    FilePtr f = open_or_throw(path, "wb");
    for (const auto& row : rows) {
        int32_t d = static_cast<int32_t>(row.size());
        std::fwrite(&d, sizeof(int32_t), 1, f.get());
        std::fwrite(row.data(), sizeof(int32_t), row.size(), f.get());
    }
}

}  // namespace pag

#include "pag/projection.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace pag {

namespace {

// Columns of the output are an orthonormal basis, Haar-distributed:
// modified Gram-Schmidt of an i.i.d. Gaussian matrix (positive-diagonal QR).
void random_rotation(uint32_t k, std::mt19937_64& rng, std::vector<float>& q) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> a(static_cast<size_t>(k) * k);
    std::vector<double> col(k);
    q.assign(static_cast<size_t>(k) * k, 0.0f);
    std::vector<double> qd(static_cast<size_t>(k) * k, 0.0);
    for (uint32_t c = 0; c < k; ++c) {
        while (true) {
            for (uint32_t r = 0; r < k; ++r) col[r] = gauss(rng);
            for (uint32_t p = 0; p < c; ++p) {
                double dot = 0;
                for (uint32_t r = 0; r < k; ++r) dot += col[r] * qd[p * k + r];
                for (uint32_t r = 0; r < k; ++r) col[r] -= dot * qd[p * k + r];
            }
            double nrm = 0;
            for (uint32_t r = 0; r < k; ++r) nrm += col[r] * col[r];
            nrm = std::sqrt(nrm);
            if (nrm > 1e-9) {
                for (uint32_t r = 0; r < k; ++r) qd[c * k + r] = col[r] / nrm;
                break;
            }
        }
    }
    for (size_t i = 0; i < qd.size(); ++i) q[i] = static_cast<float>(qd[i]);
}

}  // namespace

ReferenceSet build_reference_set(uint32_t padded_dim, uint32_t L, uint32_t m, uint64_t seed) {
    if (L == 0 || padded_dim % L != 0) throw std::invalid_argument("padded_dim not divisible by L");
    uint32_t sub_dim = padded_dim / L;
    if (sub_dim < 2) throw std::invalid_argument("sub_dim < 2: cross-polytope degenerate");
    if (m == 0 || m > 16) throw std::invalid_argument("m must be in [1, 16] (4-bit codes)");

    ReferenceSet rs;
    rs.L = L;
    rs.sub_dim = sub_dim;
    rs.m = m;
    rs.seed = seed;
    rs.refs.assign(static_cast<size_t>(L) * m * sub_dim, 0.0f);

    const float scale = 1.0f / std::sqrt(static_cast<float>(L));
    const uint32_t polytopes = (m + 2 * sub_dim - 1) / (2 * sub_dim);
    std::mt19937_64 rng(seed);
    std::vector<float> rot;
    for (uint32_t l = 0; l < L; ++l) {
        uint32_t j = 0;
        for (uint32_t p = 0; p < polytopes && j < m; ++p) {
            random_rotation(sub_dim, rng, rot);
            // vertex order within a polytope: +e_1..+e_k then -e_1..-e_k
            for (uint32_t sgn = 0; sgn < 2 && j < m; ++sgn) {
                for (uint32_t c = 0; c < sub_dim && j < m; ++c, ++j) {
                    float* dst = rs.refs.data() + (static_cast<size_t>(l) * m + j) * sub_dim;
                    float s = (sgn == 0) ? scale : -scale;
                    for (uint32_t r = 0; r < sub_dim; ++r)
                        dst[r] = s * rot[static_cast<size_t>(c) * sub_dim + r];
                }
            }
        }
    }
    return rs;
}

void encode_edge_into(const float* u, const float* w, const ReferenceSet& refs,
                      uint8_t* codes_out, float* cos_beta, float* edge_norm,
                      float* base_offset) {
    const uint32_t L = refs.L, m = refs.m, k = refs.sub_dim;
    float best_sum = 0.0f;
    float offset_sum = 0.0f;
    float norm_sq = 0.0f;
    for (uint32_t l = 0; l < L; ++l) {
        const float* ul = u + static_cast<size_t>(l) * k;
        const float* wl = w + static_cast<size_t>(l) * k;
        float best = -1e30f;
        uint32_t best_j = 0;
        for (uint32_t j = 0; j < m; ++j) {
            const float* r = refs.ref(l, j);
            float dot = 0;
            for (uint32_t c = 0; c < k; ++c) dot += (wl[c] - ul[c]) * r[c];
            if (dot > best) {
                best = dot;
                best_j = j;
            }
        }
        set_code(codes_out, l, best_j);
        best_sum += best;
        const float* r = refs.ref(l, best_j);
        float off = 0;
        for (uint32_t c = 0; c < k; ++c) off += ul[c] * r[c];
        offset_sum += off;
        for (uint32_t c = 0; c < k; ++c) {
            float d = wl[c] - ul[c];
            norm_sq += d * d;
        }
    }
    float nrm = std::sqrt(norm_sq);
    if (nrm == 0.0f) throw std::invalid_argument("zero-length edge");
    *cos_beta = best_sum / nrm;
    *edge_norm = nrm;
    *base_offset = offset_sum;
}

EdgeMeta encode_edge(const float* u, const float* w, const ReferenceSet& refs) {
    EdgeMeta meta;
    meta.codes.assign(refs.code_bytes(), 0);
    encode_edge_into(u, w, refs, meta.codes.data(), &meta.cos_beta, &meta.edge_norm,
                     &meta.base_offset);
    return meta;
}

void build_projection_table(const float* x, const ReferenceSet& refs, ProjectionTable& out) {
    const uint32_t L = refs.L, m = refs.m, k = refs.sub_dim;
    out.L = L;
    out.m = m;
    out.entries.resize(static_cast<size_t>(L) * m);
    for (uint32_t l = 0; l < L; ++l) {
        const float* xl = x + static_cast<size_t>(l) * k;
        for (uint32_t j = 0; j < m; ++j) {
            const float* r = refs.ref(l, j);
            float dot = 0;
            for (uint32_t c = 0; c < k; ++c) dot += xl[c] * r[c];
            out.entries[static_cast<size_t>(l) * m + j] = dot;
        }
    }
}

ProjectionTable build_projection_table(const float* x, const ReferenceSet& refs) {
    ProjectionTable t;
    build_projection_table(x, refs, t);
    return t;
}

float table_code_sum(const ProjectionTable& table, const uint8_t* codes) {
    float sum = 0;
    for (uint32_t l = 0; l < table.L; ++l) sum += table.at(l, code_at(codes, l));
    return sum;
}

uint32_t default_subspace_count(uint32_t dim) {
    uint32_t p = 1;
    double root = std::sqrt(static_cast<double>(dim));
    while (p * 2 <= root * std::sqrt(2.0) && p * 2 <= dim) p *= 2;  // nearest power of two
    uint32_t hi = 1;
    while (hi * 2 <= dim / 8) hi *= 2;
    uint32_t lo = 8;
    if (hi < lo) {
        // tiny dimensions: keep sub_dim >= 4
        lo = hi = std::max(1u, hi);
        while (lo * 2 <= dim / 4) lo = hi = lo * 2;
    }
    if (p < lo) p = lo;
    if (p > hi) p = hi;
    return p;
}

}  // namespace pag

#pragma once

#include <cstdint>
#include <vector>

namespace pag {

/// Random reference family: L subspaces, m unit references per subspace,
/// drawn as vertices of independently rotated cross-polytopes. References
/// are stored pre-scaled by 1/sqrt(L) so a concatenated reference is unit.
/// Fully determined by (padded_dim, L, m, seed).
struct ReferenceSet {
    uint32_t L = 0;
    uint32_t sub_dim = 0;
    uint32_t m = 0;
    uint64_t seed = 0;
    std::vector<float> refs;  // L * m * sub_dim, scaled

    const float* ref(uint32_t l, uint32_t j) const {
        return refs.data() + (static_cast<size_t>(l) * m + j) * sub_dim;
    }
    size_t code_bytes() const { return (L + 1) / 2; }
};

inline uint32_t code_at(const uint8_t* codes, uint32_t l) {
    return (codes[l >> 1] >> ((l & 1u) * 4)) & 0xFu;
}

inline void set_code(uint8_t* codes, uint32_t l, uint32_t j) {
    uint8_t& b = codes[l >> 1];
    uint32_t shift = (l & 1u) * 4;
    b = static_cast<uint8_t>((b & ~(0xFu << shift)) | ((j & 0xFu) << shift));
}

ReferenceSet build_reference_set(uint32_t padded_dim, uint32_t L, uint32_t m, uint64_t seed);

/// Per-edge inference record: 4-bit per-subspace codes of the nearest
/// reference, plus the cached geometry needed by the tests.
struct EdgeMeta {
    std::vector<uint8_t> codes;  // packed two codes per byte, (L+1)/2 bytes
    float cos_beta = 0;          // cosine between w-u and its reference r*
    float edge_norm = 0;         // ||w-u||
    float base_offset = 0;       // <r*, u>, r* in the scaled convention
};

/// Low-level encoder writing into caller-owned storage (codes_out must hold
/// code_bytes()). Throws on a zero-length edge.
void encode_edge_into(const float* u, const float* w, const ReferenceSet& refs,
                      uint8_t* codes_out, float* cos_beta, float* edge_norm,
                      float* base_offset);

EdgeMeta encode_edge(const float* u, const float* w, const ReferenceSet& refs);

/// Query-local table of subspace inner products: entries[l][j] = <x_l, r_jl>
/// in the scaled convention. One per in-flight search or insertion.
struct ProjectionTable {
    uint32_t L = 0;
    uint32_t m = 0;
    std::vector<float> entries;  // L * m

    float at(uint32_t l, uint32_t j) const { return entries[static_cast<size_t>(l) * m + j]; }
};

void build_projection_table(const float* x, const ReferenceSet& refs, ProjectionTable& out);
ProjectionTable build_projection_table(const float* x, const ReferenceSet& refs);

/// Sum of table entries selected by an edge's codes, i.e. <r*, x>.
float table_code_sum(const ProjectionTable& table, const uint8_t* codes);

/// O(L) estimate of the cosine between r* and q-u given the exact ||q-u||.
inline float estimate_cos_theta(const ProjectionTable& table, const uint8_t* codes,
                                float base_offset, float dist_uq) {
    return (table_code_sum(table, codes) - base_offset) / dist_uq;
}

inline float estimate_cos_theta(const ProjectionTable& table, const EdgeMeta& meta,
                                float dist_uq) {
    return estimate_cos_theta(table, meta.codes.data(), meta.base_offset, dist_uq);
}

/// Default subspace count: sqrt(d) rounded to the nearest power of two,
/// clamped to [8, d/8] (and to >= 1 for tiny d).
uint32_t default_subspace_count(uint32_t dim);

}  // namespace pag

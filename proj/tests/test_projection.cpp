#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "pag/projection.hpp"
#include "pag/vecstore.hpp"

using namespace pag;

namespace {

std::vector<float> random_vec(std::mt19937_64& rng, size_t n, float scale = 1.0f) {
    std::normal_distribution<float> g(0.0f, scale);
    std::vector<float> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

double dot(const float* a, const float* b, size_t n) {
    double s = 0;
    for (size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

// Reconstructs the full-dimensional concatenated reference selected by an
// edge's codes: subspace l holds ref(l, code_l), zeros elsewhere.
std::vector<float> concat_reference(const ReferenceSet& rs, const uint8_t* codes) {
    std::vector<float> r(static_cast<size_t>(rs.L) * rs.sub_dim, 0.0f);
    for (uint32_t l = 0; l < rs.L; ++l) {
        uint32_t j = code_at(codes, l);
        const float* sub = rs.ref(l, j);
        for (uint32_t k = 0; k < rs.sub_dim; ++k) r[l * rs.sub_dim + k] = sub[k];
    }
    return r;
}

}  // namespace

TEST_CASE("packed 4-bit codes round trip") {
    std::vector<uint8_t> buf(8, 0);
    std::mt19937_64 rng(5);
    std::vector<uint32_t> want(16);
    for (uint32_t l = 0; l < 16; ++l) {
        want[l] = static_cast<uint32_t>(rng() % 16);
        set_code(buf.data(), l, want[l]);
    }
    for (uint32_t l = 0; l < 16; ++l) CHECK(code_at(buf.data(), l) == want[l]);
    // overwrite one nibble, neighbors untouched
    set_code(buf.data(), 5, 3);
    CHECK(code_at(buf.data(), 5) == 3);
    CHECK(code_at(buf.data(), 4) == want[4]);
    CHECK(code_at(buf.data(), 6) == want[6]);
}

TEST_CASE("reference sets are deterministic in the seed") {
    auto a = build_reference_set(64, 8, 16, 99);
    auto b = build_reference_set(64, 8, 16, 99);
    auto c = build_reference_set(64, 8, 16, 100);
    CHECK(a.refs == b.refs);
    CHECK(a.refs != c.refs);
    CHECK(a.sub_dim == 8);
    CHECK(a.code_bytes() == 4);
}

TEST_CASE("references are rotated cross-polytope vertices scaled by 1/sqrt(L)") {
    const uint32_t L = 4, m = 16, d = 32;  // sub_dim 8, one polytope per subspace
    auto rs = build_reference_set(d, L, m, 7);
    REQUIRE(rs.sub_dim == 8);
    const double scale = 1.0 / std::sqrt(static_cast<double>(L));

    for (uint32_t l = 0; l < L; ++l) {
        for (uint32_t j = 0; j < m; ++j) {
            // each subspace reference has norm 1/sqrt(L)
            double n = std::sqrt(dot(rs.ref(l, j), rs.ref(l, j), rs.sub_dim));
            CHECK(n == doctest::Approx(scale).epsilon(1e-5));
        }
        // vertex layout: +e_1..+e_k then -e_1..-e_k (rotated), so j and
        // j + sub_dim are antipodal
        for (uint32_t j = 0; j < rs.sub_dim; ++j) {
            for (uint32_t k = 0; k < rs.sub_dim; ++k)
                CHECK(rs.ref(l, j)[k] == doctest::Approx(-rs.ref(l, j + rs.sub_dim)[k])
                                             .epsilon(1e-6));
        }
        // distinct positive vertices stay orthogonal under rotation
        for (uint32_t i = 0; i < rs.sub_dim; ++i)
            for (uint32_t j = i + 1; j < rs.sub_dim; ++j)
                CHECK(dot(rs.ref(l, i), rs.ref(l, j), rs.sub_dim) ==
                      doctest::Approx(0.0).epsilon(1e-5));
    }

    // a concatenated reference (one pick per subspace) is unit
    std::vector<uint8_t> codes(rs.code_bytes(), 0);
    for (uint32_t l = 0; l < L; ++l) set_code(codes.data(), l, l % m);
    auto r = concat_reference(rs, codes.data());
    CHECK(std::sqrt(dot(r.data(), r.data(), d)) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("reference set construction rejects invalid shapes") {
    CHECK_THROWS_AS(build_reference_set(64, 7, 16, 1), std::invalid_argument);   // 64 % 7
    CHECK_THROWS_AS(build_reference_set(64, 64, 16, 1), std::invalid_argument);  // sub_dim 1
    CHECK_THROWS_AS(build_reference_set(64, 8, 17, 1), std::invalid_argument);   // m > 16
}

TEST_CASE("encode_edge matches a brute-force argmax over all concatenated references") {
    // L=2, m=16: only 256 concatenated candidates, small enough to enumerate.
    const uint32_t L = 2, m = 16, d = 16;
    auto rs = build_reference_set(d, L, m, 21);
    std::mt19937_64 rng(22);

    for (int rep = 0; rep < 25; ++rep) {
        auto u = random_vec(rng, d);
        auto w = random_vec(rng, d);
        EdgeMeta meta = encode_edge(u.data(), w.data(), rs);

        std::vector<double> e(d);
        double en = 0;
        for (uint32_t k = 0; k < d; ++k) {
            e[k] = static_cast<double>(w[k]) - u[k];
            en += e[k] * e[k];
        }
        en = std::sqrt(en);

        // enumerate every (j0, j1) pair and take the best cosine with the edge
        double best = -2;
        uint32_t best_j0 = 0, best_j1 = 0;
        for (uint32_t j0 = 0; j0 < m; ++j0) {
            for (uint32_t j1 = 0; j1 < m; ++j1) {
                double s = 0;
                for (uint32_t k = 0; k < rs.sub_dim; ++k)
                    s += e[k] * rs.ref(0, j0)[k] + e[rs.sub_dim + k] * rs.ref(1, j1)[k];
                double c = s / en;
                if (c > best + 1e-12) {
                    best = c;
                    best_j0 = j0;
                    best_j1 = j1;
                }
            }
        }
        CHECK(code_at(meta.codes.data(), 0) == best_j0);
        CHECK(code_at(meta.codes.data(), 1) == best_j1);
        CHECK(static_cast<double>(meta.cos_beta) == doctest::Approx(best).epsilon(1e-4));
        CHECK(static_cast<double>(meta.edge_norm) == doctest::Approx(en).epsilon(1e-5));

        // base_offset is the inner product of the selected reference with u
        auto r = concat_reference(rs, meta.codes.data());
        CHECK(static_cast<double>(meta.base_offset) ==
              doctest::Approx(dot(r.data(), u.data(), d)).epsilon(1e-4));
    }
}

TEST_CASE("cos_beta lies in (0, 1] and a reference-aligned edge reaches 1") {
    const uint32_t L = 4, m = 16, d = 32;
    auto rs = build_reference_set(d, L, m, 33);
    std::mt19937_64 rng(34);
    for (int rep = 0; rep < 50; ++rep) {
        auto u = random_vec(rng, d);
        auto w = random_vec(rng, d);
        EdgeMeta meta = encode_edge(u.data(), w.data(), rs);
        CHECK(meta.cos_beta > 0.0f);
        CHECK(meta.cos_beta <= 1.0f + 1e-6f);
    }

    // edge parallel to a concatenated reference: cosine hits 1
    std::vector<uint8_t> codes(rs.code_bytes(), 0);
    for (uint32_t l = 0; l < L; ++l) set_code(codes.data(), l, 3);
    auto r = concat_reference(rs, codes.data());
    std::vector<float> u(d, 0.0f), w(d);
    for (uint32_t k = 0; k < d; ++k) w[k] = 2.5f * r[k];
    EdgeMeta meta = encode_edge(u.data(), w.data(), rs);
    CHECK(static_cast<double>(meta.cos_beta) == doctest::Approx(1.0).epsilon(1e-5));
    for (uint32_t l = 0; l < L; ++l) CHECK(code_at(meta.codes.data(), l) == 3);
}

TEST_CASE("encode_edge rejects a zero-length edge") {
    auto rs = build_reference_set(16, 2, 16, 1);
    std::vector<float> u(16, 0.5f);
    CHECK_THROWS_AS(encode_edge(u.data(), u.data(), rs), std::invalid_argument);
}

TEST_CASE("projection table plus base offset recovers <r*, q-u> exactly at O(L)") {
    const uint32_t L = 8, m = 16, d = 64;
    auto rs = build_reference_set(d, L, m, 55);
    std::mt19937_64 rng(56);

    for (int rep = 0; rep < 20; ++rep) {
        auto u = random_vec(rng, d);
        auto w = random_vec(rng, d);
        auto q = random_vec(rng, d);
        EdgeMeta meta = encode_edge(u.data(), w.data(), rs);
        ProjectionTable table = build_projection_table(q.data(), rs);

        auto r = concat_reference(rs, meta.codes.data());
        std::vector<double> qu(d);
        double qn = 0;
        for (uint32_t k = 0; k < d; ++k) {
            qu[k] = static_cast<double>(q[k]) - u[k];
            qn += qu[k] * qu[k];
        }
        qn = std::sqrt(qn);
        double want = 0;
        for (uint32_t k = 0; k < d; ++k) want += r[k] * qu[k];
        want /= qn;

        float got = estimate_cos_theta(table, meta, static_cast<float>(qn));
        CHECK(static_cast<double>(got) == doctest::Approx(want).epsilon(2e-4));
    }
}

TEST_CASE("default subspace count tracks sqrt(d) as a power of two") {
    CHECK(default_subspace_count(64) == 8);
    CHECK(default_subspace_count(128) == 16);
    CHECK(default_subspace_count(256) == 16);
    CHECK(default_subspace_count(960) == 32);
    CHECK(default_subspace_count(1024) == 32);
    // clamp: sub_dim never drops below 8 components for large-ish d
    for (uint32_t d : {64u, 128u, 200u, 256u, 960u, 1024u}) {
        uint32_t L = default_subspace_count(d);
        CHECK(L >= 1);
        CHECK(d / L >= 4);
    }
}

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <vector>

#include "doctest.h"
#include "pag/vecstore.hpp"

using namespace pag;

namespace {

// Independent scalar oracle in double precision, naive accumulation order.
double sq_dist_oracle(const float* a, const float* b, size_t n) {
    double s = 0;
    for (size_t i = 0; i < n; ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return s;
}

double norm_oracle(const float* a, size_t n) {
    double s = 0;
    for (size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * a[i];
    return std::sqrt(s);
}

std::vector<float> random_vec(std::mt19937_64& rng, size_t n, float scale = 1.0f) {
    std::normal_distribution<float> g(0.0f, scale);
    std::vector<float> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

struct TmpFile {
    std::string path;
    explicit TmpFile(const char* name)
        : path((std::filesystem::temp_directory_path() / name).string()) {}
    ~TmpFile() { std::remove(path.c_str()); }
};

// Independent fvecs writer (one little-endian int32 dim header per record).
void write_fvecs_raw(const std::string& path, const std::vector<std::vector<float>>& rows) {
    FILE* f = std::fopen(path.c_str(), "wb");
    REQUIRE(f != nullptr);
    for (const auto& r : rows) {
        int32_t d = static_cast<int32_t>(r.size());
        std::fwrite(&d, sizeof(d), 1, f);
        std::fwrite(r.data(), sizeof(float), r.size(), f);
    }
    std::fclose(f);
}

}  // namespace

TEST_CASE("sq_dist and vec_norm match a scalar double-precision oracle") {
    std::mt19937_64 rng(7);
    for (size_t n : {1u, 3u, 8u, 17u, 64u, 100u, 257u}) {
        for (int rep = 0; rep < 20; ++rep) {
            auto a = random_vec(rng, n), b = random_vec(rng, n);
            double want = sq_dist_oracle(a.data(), b.data(), n);
            double got = sq_dist(a.data(), b.data(), n);
            CHECK(got == doctest::Approx(want).epsilon(1e-4));
            CHECK(static_cast<double>(vec_norm(a.data(), n)) ==
                  doctest::Approx(norm_oracle(a.data(), n)).epsilon(1e-5));
        }
    }
}

TEST_CASE("sq_dist is bitwise symmetric and deterministic") {
    std::mt19937_64 rng(11);
    auto a = random_vec(rng, 96), b = random_vec(rng, 96);
    float ab = sq_dist(a.data(), b.data(), 96);
    CHECK(sq_dist(b.data(), a.data(), 96) == ab);
    CHECK(sq_dist(a.data(), b.data(), 96) == ab);  // repeat call, same bits
    CHECK(sq_dist(a.data(), a.data(), 96) == 0.0f);
}

TEST_CASE("zero padding is invisible to distances") {
    std::mt19937_64 rng(13);
    auto a = random_vec(rng, 24), b = random_vec(rng, 24);

    VectorSet narrow(24, 24);
    narrow.add(a);
    narrow.add(b);
    VectorSet wide(24, 32);  // 8 padding zeros per row
    wide.add(a);
    wide.add(b);

    float dn = sq_dist(narrow.row(0), narrow.row(1), narrow.padded_dim());
    float dw = sq_dist(wide.row(0), wide.row(1), wide.padded_dim());
    CHECK(dn == doctest::Approx(dw).epsilon(1e-6));
    for (size_t j = 24; j < 32; ++j) CHECK(wide.row(0)[j] == 0.0f);
}

TEST_CASE("repad preserves contents and pads to the least covering multiple") {
    std::mt19937_64 rng(17);
    VectorSet vs(30, 30);
    std::vector<std::vector<float>> rows;
    for (int i = 0; i < 5; ++i) {
        rows.push_back(random_vec(rng, 30));
        vs.add(rows.back());
    }
    vs.repad(8);
    CHECK(vs.padded_dim() == 32);
    for (size_t i = 0; i < 5; ++i) {
        for (size_t j = 0; j < 30; ++j) CHECK(vs.row(i)[j] == rows[i][j]);
        CHECK(vs.row(i)[30] == 0.0f);
        CHECK(vs.row(i)[31] == 0.0f);
    }
}

TEST_CASE("cosine ingestion normalizes rows and rejects zero vectors") {
    std::mt19937_64 rng(19);
    VectorSet vs(16, 16, MetricKind::cosine);
    auto v = random_vec(rng, 16, 3.0f);
    vs.add(v);
    CHECK(static_cast<double>(vec_norm(vs.row(0), 16)) == doctest::Approx(1.0).epsilon(1e-5));
    // direction preserved
    double vn = norm_oracle(v.data(), 16);
    for (size_t j = 0; j < 16; ++j)
        CHECK(static_cast<double>(vs.row(0)[j]) ==
              doctest::Approx(v[j] / vn).epsilon(1e-4));

    std::vector<float> zero(16, 0.0f);
    CHECK_THROWS_AS(vs.add(zero), std::invalid_argument);
}

TEST_CASE("euclidean ingestion caches the exact row norm") {
    std::mt19937_64 rng(23);
    VectorSet vs(40, 40);
    auto v = random_vec(rng, 40);
    vs.add(v);
    CHECK(static_cast<double>(vs.norm(0)) ==
          doctest::Approx(norm_oracle(v.data(), 40)).epsilon(1e-5));
}

TEST_CASE("add_raw round-trips padded rows bit exactly") {
    std::mt19937_64 rng(29);
    VectorSet src(12, 16, MetricKind::cosine);
    src.add(random_vec(rng, 12));

    VectorSet dst(12, 16, MetricKind::cosine);
    dst.add_raw(src.row(0), src.norm(0));
    for (size_t j = 0; j < 16; ++j) CHECK(dst.row(0)[j] == src.row(0)[j]);
    CHECK(dst.norm(0) == src.norm(0));
}

TEST_CASE("fvecs written by an independent writer loads correctly") {
    std::mt19937_64 rng(31);
    std::vector<std::vector<float>> rows;
    for (int i = 0; i < 7; ++i) rows.push_back(random_vec(rng, 20));
    TmpFile tmp("pag_test_load.fvecs");
    write_fvecs_raw(tmp.path, rows);

    VectorSet vs = load_vectors(tmp.path, VecFormat::fvecs);
    REQUIRE(vs.count() == 7);
    REQUIRE(vs.dim() == 20);
    for (size_t i = 0; i < 7; ++i)
        for (size_t j = 0; j < 20; ++j) CHECK(vs.row(i)[j] == rows[i][j]);
}

TEST_CASE("save_fvecs output is readable by an independent reader") {
    std::mt19937_64 rng(37);
    VectorSet vs(9, 9);
    std::vector<std::vector<float>> rows;
    for (int i = 0; i < 4; ++i) {
        rows.push_back(random_vec(rng, 9));
        vs.add(rows.back());
    }
    TmpFile tmp("pag_test_save.fvecs");
    save_fvecs(tmp.path, vs);

    FILE* f = std::fopen(tmp.path.c_str(), "rb");
    REQUIRE(f != nullptr);
    for (int i = 0; i < 4; ++i) {
        int32_t d = 0;
        REQUIRE(std::fread(&d, sizeof(d), 1, f) == 1);
        CHECK(d == 9);
        float buf[9];
        REQUIRE(std::fread(buf, sizeof(float), 9, f) == 9);
        for (int j = 0; j < 9; ++j) CHECK(buf[j] == rows[i][j]);
    }
    // exactly four records
    char extra;
    CHECK(std::fread(&extra, 1, 1, f) == 0);
    std::fclose(f);
}

TEST_CASE("bvecs records load as floats") {
    TmpFile tmp("pag_test_load.bvecs");
    FILE* f = std::fopen(tmp.path.c_str(), "wb");
    REQUIRE(f != nullptr);
    int32_t d = 4;
    uint8_t a[4] = {0, 1, 128, 255};
    uint8_t b[4] = {7, 7, 7, 7};
    std::fwrite(&d, sizeof(d), 1, f);
    std::fwrite(a, 1, 4, f);
    std::fwrite(&d, sizeof(d), 1, f);
    std::fwrite(b, 1, 4, f);
    std::fclose(f);

    VectorSet vs = load_vectors(tmp.path, VecFormat::bvecs);
    REQUIRE(vs.count() == 2);
    CHECK(vs.row(0)[0] == 0.0f);
    CHECK(vs.row(0)[2] == 128.0f);
    CHECK(vs.row(0)[3] == 255.0f);
    CHECK(vs.row(1)[1] == 7.0f);
}

TEST_CASE("malformed and empty vector files raise descriptive errors") {
    TmpFile empty("pag_test_empty.fvecs");
    std::fclose(std::fopen(empty.path.c_str(), "wb"));
    CHECK_THROWS_AS(load_vectors(empty.path, VecFormat::fvecs), std::runtime_error);

    // second record truncated mid-payload
    TmpFile bad("pag_test_bad.fvecs");
    FILE* f = std::fopen(bad.path.c_str(), "wb");
    int32_t d = 3;
    float row[3] = {1, 2, 3};
    std::fwrite(&d, sizeof(d), 1, f);
    std::fwrite(row, sizeof(float), 3, f);
    std::fwrite(&d, sizeof(d), 1, f);
    std::fwrite(row, sizeof(float), 1, f);  // short
    std::fclose(f);
    try {
        load_vectors(bad.path, VecFormat::fvecs);
        FAIL("expected a runtime_error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);  // record index
    }

    // dimension mismatch between records
    TmpFile mix("pag_test_mix.fvecs");
    f = std::fopen(mix.path.c_str(), "wb");
    std::fwrite(&d, sizeof(d), 1, f);
    std::fwrite(row, sizeof(float), 3, f);
    int32_t d2 = 2;
    std::fwrite(&d2, sizeof(d2), 1, f);
    std::fwrite(row, sizeof(float), 2, f);
    std::fclose(f);
    CHECK_THROWS_AS(load_vectors(mix.path, VecFormat::fvecs), std::runtime_error);

    CHECK_THROWS_AS(load_vectors("/nonexistent/path.fvecs", VecFormat::fvecs),
                    std::runtime_error);
}

TEST_CASE("ivecs round trip") {
    std::vector<std::vector<int32_t>> rows = {{1, 2, 3}, {}, {42}};
    TmpFile tmp("pag_test.ivecs");
    save_ivecs(tmp.path, rows);
    auto back = load_ivecs(tmp.path);
    CHECK(back == rows);
}

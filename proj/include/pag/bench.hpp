#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pag/builder.hpp"
#include "pag/routing.hpp"
#include "pag/vecstore.hpp"

namespace pag {

/// Exact top-K* per query by exhaustive scan, ties broken by node id.
struct GroundTruth {
    uint32_t k_star = 0;
    std::vector<std::vector<Candidate>> rows;  // one sorted row per query
};

GroundTruth ground_truth(const VectorSet& base, const VectorSet& queries, uint32_t k_star,
                         unsigned threads = 1);

/// |result[0..K) ∩ truth[0..K)| / K, counting any id distance-tied with the
/// K-th true neighbor as correct.
double recall_at_k(std::span<const uint32_t> result_ids, const std::vector<Candidate>& truth_row,
                   uint32_t K);

enum class SyntheticKind { gaussian, clustered };

/// gaussian: i.i.d. standard normal. clustered: 50 unit-dispersion Gaussian
/// centers with per-point spread 0.1 (a hard-dataset stand-in).
VectorSet gen_synthetic(SyntheticKind kind, size_t n, uint32_t d, uint64_t seed,
                        MetricKind metric = MetricKind::euclidean);

struct RunConfig {
    std::string dataset_path;  // empty = synthetic
    std::string query_path;
    SyntheticKind kind = SyntheticKind::gaussian;
    size_t n = 10000;
    uint32_t d = 128;
    size_t n_queries = 100;
    MetricKind metric = MetricKind::euclidean;
    BuildParams build;
    std::vector<uint32_t> efs_list{200};
    std::vector<uint32_t> k_list{10};
    bool prt = true;
    bool tfb = true;
    bool pes = true;
    unsigned threads = 1;
    std::string out_csv;
    uint64_t seed = 42;
};

struct BenchRow {
    uint32_t efS = 0;
    uint32_t K = 0;
    double mean_recall = 0;
    double qps = 0;
    double mean_exact_dist = 0;
    double mean_gamma = 0;
    double build_seconds = 0;
    size_t adjacency_bytes = 0;
};

/// Builds (or loads) per the config, runs the efS x K sweep single-threaded,
/// and returns one row per operating point. Writes CSV when out_csv is set.
std::vector<BenchRow> run_benchmark(const RunConfig& cfg);

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows,
                     const RunConfig& cfg);

/// Per-query stats row: query_id,K,efS,recall,exact_dist_count,test_count,
/// gamma,latency_ns (recall is -1 without ground truth).
std::string stats_csv_header();
std::string stats_csv_row(size_t query_id, uint32_t K, uint32_t efS, double recall,
                          const SearchStats& stats, uint64_t latency_ns);

struct TheoremBucket {
    double cos_beta_mid = 0;
    size_t samples = 0;
    double mean_cos_theta = 0;    // observed
    double expected_cos_theta = 0;  // cos(alpha) * bucket mean cos(beta)
    double standard_error = 0;
    bool mean_ok = false;
};

struct TheoremLReport {
    uint32_t L = 0;
    std::vector<TheoremBucket> buckets;
    size_t skipped_buckets = 0;
    double residual_variance = 0;  // var(cos_theta - cos_alpha * cos_beta)
    bool all_means_ok = false;
};

struct TheoremReport {
    double alpha_deg = 0;
    std::vector<TheoremLReport> per_l;
    /// var at each L divided by var at the previous (smaller) L, < 0.8 expected
    std::vector<double> variance_ratios;
    bool variance_shrinks = false;
};

/// Monte Carlo validation of the conditional-mean and variance-scaling
/// behavior of the projection estimator at a controlled angle alpha.
TheoremReport validate_theorem(uint32_t d, const std::vector<uint32_t>& L_list, size_t trials,
                               double alpha_deg, uint64_t seed);

}  // namespace pag

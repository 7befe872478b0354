#include "pag/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace pag {

GroundTruth ground_truth(const VectorSet& base, const VectorSet& queries, uint32_t k_star,
                         unsigned threads) {
    if (base.padded_dim() != queries.padded_dim() || base.dim() != queries.dim())
        throw std::invalid_argument("base/query dimension mismatch");
    const size_t n = base.count();
    const size_t nq = queries.count();
    const uint32_t k = std::min<uint32_t>(k_star, static_cast<uint32_t>(n));

    GroundTruth gt;
    gt.k_star = k;
    gt.rows.resize(nq);

    auto scan = [&](size_t qi) {
        std::vector<Candidate> all(n);
        const float* q = queries.row(qi);
        for (size_t i = 0; i < n; ++i)
            all[i] = {static_cast<uint32_t>(i), sq_dist(base.row(i), q, base.padded_dim())};
        std::partial_sort(all.begin(), all.begin() + k, all.end(), candidate_less);
        all.resize(k);
        gt.rows[qi] = std::move(all);
    };

    if (threads <= 1) {
        for (size_t qi = 0; qi < nq; ++qi) scan(qi);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                size_t qi;
                while ((qi = next.fetch_add(1)) < nq) scan(qi);
            });
        for (auto& th : pool) th.join();
    }
    return gt;
}

double recall_at_k(std::span<const uint32_t> result_ids, const std::vector<Candidate>& truth_row,
                   uint32_t K) {
    const uint32_t k = std::min<uint32_t>(K, static_cast<uint32_t>(truth_row.size()));
    if (k == 0) return 0.0;
    const float tie_sq = truth_row[k - 1].sq;
    std::unordered_map<uint32_t, float> truth_sq;
    truth_sq.reserve(truth_row.size());
    for (const auto& c : truth_row) truth_sq.emplace(c.id, c.sq);

    size_t hits = 0;
    size_t limit = std::min<size_t>(K, result_ids.size());
    for (size_t i = 0; i < limit; ++i) {
        auto it = truth_sq.find(result_ids[i]);
        if (it != truth_sq.end() && it->second <= tie_sq) ++hits;
    }
    return static_cast<double>(hits) / K;
}

VectorSet gen_synthetic(SyntheticKind kind, size_t n, uint32_t d, uint64_t seed,
                        MetricKind metric) {
    if (n == 0 || d == 0) throw std::invalid_argument("n, d must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    VectorSet vs(d, d, metric);
    vs.reserve(n);
    std::vector<float> v(d);
    if (kind == SyntheticKind::gaussian) {
        for (size_t i = 0; i < n; ++i) {
            for (auto& x : v) x = gauss(rng);
            vs.add(v);
        }
    } else {
        constexpr size_t kClusters = 50;
        std::vector<std::vector<float>> centers(kClusters, std::vector<float>(d));
        for (auto& c : centers)
            for (auto& x : c) x = gauss(rng);
        std::uniform_int_distribution<size_t> pick(0, kClusters - 1);
        const float spread = 0.1f;
        for (size_t i = 0; i < n; ++i) {
            const auto& c = centers[pick(rng)];
            for (uint32_t k = 0; k < d; ++k) v[k] = c[k] + spread * gauss(rng);
            vs.add(v);
        }
    }
    return vs;
}

namespace {

const char* metric_name(MetricKind m) {
    return m == MetricKind::cosine ? "cosine" : "euclidean";
}

}  // namespace

std::string stats_csv_header() {
    return "query_id,K,efS,recall,exact_dist_count,test_count,gamma,latency_ns";
}

std::string stats_csv_row(size_t query_id, uint32_t K, uint32_t efS, double recall,
                          const SearchStats& stats, uint64_t latency_ns) {
    std::ostringstream os;
    os << query_id << ',' << K << ',' << efS << ',' << recall << ',' << stats.exact_dist_count
       << ',' << stats.test_count << ',' << stats.gamma() << ',' << latency_ns;
    return os.str();
}

std::vector<BenchRow> run_benchmark(const RunConfig& cfg) {
    for (uint32_t K : cfg.k_list)
        for (uint32_t efS : cfg.efs_list)
            if (K > efS)
                throw std::invalid_argument("config contradiction: K > efS");

    VectorSet base = cfg.dataset_path.empty()
                         ? gen_synthetic(cfg.kind, cfg.n, cfg.d, cfg.seed, cfg.metric)
                         : load_vectors(cfg.dataset_path, VecFormat::fvecs, cfg.metric);
    VectorSet queries = cfg.query_path.empty()
                            ? gen_synthetic(cfg.kind, cfg.n_queries,
                                            static_cast<uint32_t>(base.dim()), cfg.seed + 1,
                                            cfg.metric)
                            : load_vectors(cfg.query_path, VecFormat::fvecs, cfg.metric);

    uint32_t max_k = *std::max_element(cfg.k_list.begin(), cfg.k_list.end());
    GroundTruth gt = ground_truth(base, queries, max_k, cfg.threads);

    BuildParams bp = cfg.build;
    bp.enable_pes = cfg.pes;
    auto t0 = std::chrono::steady_clock::now();
    PagIndex index = build(std::move(base), bp, cfg.threads);
    double build_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    size_t adjacency_bytes = static_cast<size_t>(index.size()) * index.max_degree() *
                             (sizeof(uint32_t) + sizeof(EdgeScalars) + index.code_bytes());

    std::vector<BenchRow> rows;
    TfbState state;
    std::vector<float> qraw(index.vectors().dim());
    for (uint32_t K : cfg.k_list) {
        for (uint32_t efS : cfg.efs_list) {
            SearchParams sp;
            sp.K = K;
            sp.efS = efS;
            sp.use_prt = cfg.prt;
            sp.use_tfb = cfg.tfb;

            // one untimed warm sweep, then the timed single-thread sweep
            for (int rep = 0; rep < 2; ++rep) {
                double recall_sum = 0, gamma_sum = 0, exact_sum = 0;
                auto sweep0 = std::chrono::steady_clock::now();
                for (size_t qi = 0; qi < queries.count(); ++qi) {
                    std::memcpy(qraw.data(), queries.row(qi), qraw.size() * sizeof(float));
                    SearchResult res = search(index, qraw, sp, state);
                    std::vector<uint32_t> ids(res.results.size());
                    for (size_t i = 0; i < ids.size(); ++i) ids[i] = res.results[i].id;
                    recall_sum += recall_at_k(ids, gt.rows[qi], K);
                    gamma_sum += res.stats.gamma();
                    exact_sum += static_cast<double>(res.stats.exact_dist_count);
                }
                if (rep == 0) continue;
                double elapsed =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - sweep0)
                        .count();
                BenchRow row;
                row.efS = efS;
                row.K = K;
                row.mean_recall = recall_sum / queries.count();
                row.qps = queries.count() / elapsed;
                row.mean_exact_dist = exact_sum / queries.count();
                row.mean_gamma = gamma_sum / queries.count();
                row.build_seconds = build_seconds;
                row.adjacency_bytes = adjacency_bytes;
                rows.push_back(row);
            }
        }
    }
    if (!cfg.out_csv.empty()) write_bench_csv(cfg.out_csv, rows, cfg);
    return rows;
}

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows,
                     const RunConfig& cfg) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open CSV for writing: " + path);
    f << "# metric=" << metric_name(cfg.metric)
      << " prt=" << cfg.prt << " tfb=" << cfg.tfb << " pes=" << cfg.pes
      << " tie_policy=distance-tied-ids-count-as-correct queries-normalized-under-cosine\n";
    f << "efS,K,mean_recall,qps,mean_exact_dist,mean_gamma,build_seconds,adjacency_bytes\n";
    for (const auto& r : rows)
        f << r.efS << ',' << r.K << ',' << r.mean_recall << ',' << r.qps << ','
          << r.mean_exact_dist << ',' << r.mean_gamma << ',' << r.build_seconds << ','
          << r.adjacency_bytes << '\n';
}

TheoremReport validate_theorem(uint32_t d, const std::vector<uint32_t>& L_list, size_t trials,
                               double alpha_deg, uint64_t seed) {
    if (trials < 10000) throw std::invalid_argument("need >= 10,000 trials per configuration");
    TheoremReport report;
    report.alpha_deg = alpha_deg;
    const double cos_alpha = std::cos(alpha_deg * M_PI / 180.0);

    for (uint32_t L : L_list) {
        if (d % L != 0) throw std::invalid_argument("d must be divisible by every L");
        std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * L));
        std::normal_distribution<double> gauss(0.0, 1.0);

        std::vector<float> edge(d), query(d);
        std::vector<double> e(d), o(d);
        std::vector<double> cos_betas, cos_thetas;
        cos_betas.reserve(trials);
        cos_thetas.reserve(trials);

        std::vector<float> origin(d, 0.0f);
        for (size_t t = 0; t < trials; ++t) {
            // unit edge direction and an orthogonal unit direction
            double en = 0;
            for (uint32_t k = 0; k < d; ++k) {
                e[k] = gauss(rng);
                en += e[k] * e[k];
            }
            en = std::sqrt(en);
            for (uint32_t k = 0; k < d; ++k) e[k] /= en;
            double dot = 0, on = 0;
            for (uint32_t k = 0; k < d; ++k) o[k] = gauss(rng);
            for (uint32_t k = 0; k < d; ++k) dot += o[k] * e[k];
            for (uint32_t k = 0; k < d; ++k) o[k] -= dot * e[k];
            for (uint32_t k = 0; k < d; ++k) on += o[k] * o[k];
            on = std::sqrt(on);
            const double sin_alpha = std::sin(alpha_deg * M_PI / 180.0);
            for (uint32_t k = 0; k < d; ++k) {
                edge[k] = static_cast<float>(e[k]);
                query[k] = static_cast<float>(cos_alpha * e[k] + sin_alpha * o[k] / on);
            }

            ReferenceSet refs = build_reference_set(d, L, 16, seed + t * 2654435761ull);
            EdgeMeta meta = encode_edge(origin.data(), edge.data(), refs);
            ProjectionTable table = build_projection_table(query.data(), refs);
            float cos_theta = estimate_cos_theta(table, meta, 1.0f);
            cos_betas.push_back(meta.cos_beta);
            cos_thetas.push_back(cos_theta);
        }

        TheoremLReport lr;
        lr.L = L;
        // bucket by measured cos(beta)
        const double bw = 0.01;
        double lo = *std::min_element(cos_betas.begin(), cos_betas.end());
        double hi = *std::max_element(cos_betas.begin(), cos_betas.end());
        size_t n_buckets = static_cast<size_t>((hi - lo) / bw) + 1;
        std::vector<std::vector<size_t>> buckets(n_buckets);
        for (size_t t = 0; t < trials; ++t) {
            size_t bi = std::min(n_buckets - 1,
                                 static_cast<size_t>((cos_betas[t] - lo) / bw));
            buckets[bi].push_back(t);
        }
        constexpr size_t kMinBucket = 200;
        lr.all_means_ok = true;
        double resid_sum = 0, resid_sq = 0;
        size_t resid_n = 0;
        for (size_t bi = 0; bi < n_buckets; ++bi) {
            if (buckets[bi].size() < kMinBucket) {
                ++lr.skipped_buckets;
                continue;
            }
            TheoremBucket b;
            b.samples = buckets[bi].size();
            double sum_t = 0, sum_b = 0, sum_t2 = 0;
            for (size_t t : buckets[bi]) {
                sum_t += cos_thetas[t];
                sum_b += cos_betas[t];
                sum_t2 += cos_thetas[t] * cos_thetas[t];
            }
            b.mean_cos_theta = sum_t / b.samples;
            double mean_b = sum_b / b.samples;
            b.cos_beta_mid = mean_b;
            b.expected_cos_theta = cos_alpha * mean_b;
            double var = (sum_t2 - sum_t * sum_t / b.samples) / (b.samples - 1);
            b.standard_error = std::sqrt(std::max(var, 0.0) / b.samples);
            b.mean_ok =
                std::abs(b.mean_cos_theta - b.expected_cos_theta) <= 3.0 * b.standard_error;
            lr.all_means_ok = lr.all_means_ok && b.mean_ok;
            lr.buckets.push_back(b);
        }
        for (size_t t = 0; t < trials; ++t) {
            double r = cos_thetas[t] - cos_alpha * cos_betas[t];
            resid_sum += r;
            resid_sq += r * r;
            ++resid_n;
        }
        lr.residual_variance =
            (resid_sq - resid_sum * resid_sum / resid_n) / (resid_n - 1);
        report.per_l.push_back(std::move(lr));
    }

    report.variance_shrinks = true;
    // At alpha = 0 the estimate equals cos(beta) identically, so the residual
    // is zero in exact arithmetic and both variances sit at the float rounding
    // floor; a ratio of rounding noise carries no signal and is skipped.
    constexpr double kNoiseFloor = 1e-12;
    for (size_t i = 1; i < report.per_l.size(); ++i) {
        double va = report.per_l[i - 1].residual_variance;
        double vb = report.per_l[i].residual_variance;
        if (va < kNoiseFloor && vb < kNoiseFloor) {
            report.variance_ratios.push_back(0.0);
            continue;
        }
        double ratio = vb / va;
        report.variance_ratios.push_back(ratio);
        if (ratio >= 0.8) report.variance_shrinks = false;
    }
    return report;
}

}  // namespace pag

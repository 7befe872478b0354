// pag: command-line harness around the index library. Subcommands cover
// dataset generation, offline builds, searches, benchmark sweeps, brute-force
// ground truth, estimator validation, and an online-insertion workload.
// Every output file is CSV with a header row; flags can also be supplied via
// an ini-style key=value config file (--config).

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pag/bench.hpp"
#include "pag/builder.hpp"
#include "pag/routing.hpp"
#include "pag/vecstore.hpp"

using namespace pag;
using clock_type = std::chrono::steady_clock;

namespace {

MetricKind parse_metric(const std::string& s) {
    if (s == "euclidean") return MetricKind::euclidean;
    if (s == "cosine") return MetricKind::cosine;
    throw CLI::ValidationError("metric", "must be 'euclidean' or 'cosine'");
}

VecFormat parse_format(const std::string& path, const std::string& forced) {
    if (forced == "fvecs") return VecFormat::fvecs;
    if (forced == "bvecs") return VecFormat::bvecs;
    if (!forced.empty()) throw CLI::ValidationError("format", "must be 'fvecs' or 'bvecs'");
    if (path.size() >= 6 && path.compare(path.size() - 6, 6, ".bvecs") == 0)
        return VecFormat::bvecs;
    return VecFormat::fvecs;
}

SyntheticKind parse_kind(const std::string& s) {
    if (s == "gaussian") return SyntheticKind::gaussian;
    if (s == "clustered") return SyntheticKind::clustered;
    throw CLI::ValidationError("kind", "must be 'gaussian' or 'clustered'");
}

struct BuildFlags {
    uint32_t M = 16, efc = 200, L = 0, m = 16, b_build = 32;
    uint64_t seed = 42;
    bool no_pes = false;

    BuildParams params() const {
        BuildParams bp;
        bp.M = M;
        bp.efC = efc;
        bp.L = L;
        bp.m = m;
        bp.b_build = b_build;
        bp.seed = seed;
        bp.enable_pes = !no_pes;
        return bp;
    }
};

void add_build_flags(CLI::App* cmd, BuildFlags& bf) {
    cmd->add_option("--max-degree,-M", bf.M, "adjacency cap is 2M")->capture_default_str();
    cmd->add_option("--efc", bf.efc, "construction visit budget")->capture_default_str();
    cmd->add_option("--subspaces,-L", bf.L, "projection subspaces (0 = auto from d)")
        ->capture_default_str();
    cmd->add_option("--refs-per-subspace,-m", bf.m, "references per subspace (<= 16)")
        ->capture_default_str();
    cmd->add_option("--b-build", bf.b_build, "construction working-set size")
        ->capture_default_str();
    cmd->add_option("--seed", bf.seed, "build RNG seed")->capture_default_str();
    cmd->add_flag("--no-pes", bf.no_pes, "disable deferred edge supplementation");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"projection-augmented graph index: build, search, benchmark"};
    app.require_subcommand(1);
    app.fallthrough();
    // keys live in a section named after the subcommand, e.g. [bench]\n n=10000
    app.set_config("--config", "", "ini-style key=value config file");

    // ---- gen ----------------------------------------------------------
    auto* gen = app.add_subcommand("gen", "generate a synthetic fvecs dataset");
    std::string gen_out, gen_kind = "gaussian";
    size_t gen_n = 10000;
    uint32_t gen_d = 128;
    uint64_t gen_seed = 42;
    gen->add_option("--out", gen_out, "output fvecs path")->required();
    gen->add_option("--kind", gen_kind, "gaussian | clustered")->capture_default_str();
    gen->add_option("--n", gen_n, "vector count")->capture_default_str();
    gen->add_option("--d", gen_d, "dimension")->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();

    // ---- build --------------------------------------------------------
    auto* bld = app.add_subcommand("build", "build an index from a vector file");
    std::string bld_data, bld_out, bld_metric = "euclidean", bld_format;
    unsigned bld_threads = 1;
    BuildFlags bld_flags;
    bld->add_option("--data", bld_data, "input fvecs/bvecs path")->required();
    bld->add_option("--out", bld_out, "output index path")->required();
    bld->add_option("--metric", bld_metric, "euclidean | cosine")->capture_default_str();
    bld->add_option("--format", bld_format, "fvecs | bvecs (default: by extension)");
    bld->add_option("--threads", bld_threads, "build threads")->capture_default_str();
    add_build_flags(bld, bld_flags);

    // ---- search -------------------------------------------------------
    auto* srch = app.add_subcommand("search", "run queries against a saved index");
    std::string srch_index, srch_queries, srch_gt, srch_out, srch_format;
    uint32_t srch_k = 10, srch_efs = 100;
    bool srch_no_prt = false, srch_no_tfb = false;
    srch->add_option("--index", srch_index, "index path")->required();
    srch->add_option("--queries", srch_queries, "query fvecs/bvecs path")->required();
    srch->add_option("--format", srch_format, "query file format (default: by extension)");
    srch->add_option("--k", srch_k, "neighbors to return")->capture_default_str();
    srch->add_option("--efs", srch_efs, "visit budget / result-list capacity")
        ->capture_default_str();
    srch->add_option("--ground-truth", srch_gt, "ivecs truth file for recall");
    srch->add_option("--out", srch_out, "per-query stats CSV (default: stdout)");
    srch->add_flag("--no-prt", srch_no_prt, "disable the routing test");
    srch->add_flag("--no-tfb", srch_no_tfb, "single-round search with b = efS");

    // ---- ground-truth ---------------------------------------------------
    auto* gt = app.add_subcommand("ground-truth", "exhaustive top-K* per query");
    std::string gt_data, gt_queries, gt_out, gt_metric = "euclidean", gt_format;
    uint32_t gt_k = 100;
    unsigned gt_threads = 1;
    gt->add_option("--data", gt_data, "base fvecs/bvecs path")->required();
    gt->add_option("--queries", gt_queries, "query fvecs/bvecs path")->required();
    gt->add_option("--out", gt_out, "output ivecs path")->required();
    gt->add_option("--k", gt_k, "neighbors per query (clamped to n)")->capture_default_str();
    gt->add_option("--metric", gt_metric, "euclidean | cosine")->capture_default_str();
    gt->add_option("--format", gt_format, "fvecs | bvecs (default: by extension)");
    gt->add_option("--threads", gt_threads)->capture_default_str();

    // ---- bench ----------------------------------------------------------
    auto* bench = app.add_subcommand("bench", "build + efS x K recall/QPS sweep");
    RunConfig cfg;
    std::string bench_metric = "euclidean", bench_kind = "gaussian";
    BuildFlags bench_flags;
    bool bench_no_prt = false, bench_no_tfb = false;
    bench->add_option("--data", cfg.dataset_path, "base vectors (empty = synthetic)");
    bench->add_option("--queries", cfg.query_path, "query vectors (empty = synthetic)");
    bench->add_option("--kind", bench_kind, "synthetic distribution")->capture_default_str();
    bench->add_option("--n", cfg.n, "synthetic base size")->capture_default_str();
    bench->add_option("--d", cfg.d, "synthetic dimension")->capture_default_str();
    bench->add_option("--n-queries", cfg.n_queries)->capture_default_str();
    bench->add_option("--metric", bench_metric)->capture_default_str();
    bench->add_option("--efs", cfg.efs_list, "efS sweep values")->capture_default_str();
    bench->add_option("--k", cfg.k_list, "K sweep values")->capture_default_str();
    bench->add_option("--threads", cfg.threads, "build/ground-truth threads")
        ->capture_default_str();
    bench->add_option("--out", cfg.out_csv, "summary CSV path");
    bench->add_option("--data-seed", cfg.seed, "synthetic data seed")->capture_default_str();
    bench->add_flag("--no-prt", bench_no_prt, "disable the routing test");
    bench->add_flag("--no-tfb", bench_no_tfb, "single-round search");
    add_build_flags(bench, bench_flags);  // includes --no-pes

    // ---- validate-theorem ------------------------------------------------
    auto* vt = app.add_subcommand("validate-theorem",
                                  "Monte Carlo check of the projection estimator");
    uint32_t vt_d = 256;
    std::vector<uint32_t> vt_l = {8, 16, 32};
    size_t vt_trials = 10000;
    double vt_alpha = 60.0;
    uint64_t vt_seed = 42;
    std::string vt_out;
    vt->add_option("--d", vt_d)->capture_default_str();
    vt->add_option("--subspaces,-L", vt_l, "subspace counts to compare")->capture_default_str();
    vt->add_option("--trials", vt_trials, ">= 10000")->capture_default_str();
    vt->add_option("--alpha", vt_alpha, "query-edge angle in degrees")->capture_default_str();
    vt->add_option("--seed", vt_seed)->capture_default_str();
    vt->add_option("--out", vt_out, "bucket CSV (default: stdout)");

    // ---- insert-bench -----------------------------------------------------
    auto* ib = app.add_subcommand("insert-bench",
                                  "online insertion workload: batched inserts "
                                  "interleaved with query batches");
    size_t ib_n = 10000, ib_inserts = 20000, ib_queries = 1000;
    uint32_t ib_d = 128, ib_k = 10, ib_efs = 100, ib_batches = 20;
    uint64_t ib_seed = 42;
    std::string ib_out, ib_kind = "gaussian";
    BuildFlags ib_flags;
    ib->add_option("--n", ib_n, "initial offline base size")->capture_default_str();
    ib->add_option("--inserts", ib_inserts, "total online inserts")->capture_default_str();
    ib->add_option("--batches", ib_batches, "insert batches (queries run between)")
        ->capture_default_str();
    ib->add_option("--n-queries", ib_queries, "queries per interleaved batch")
        ->capture_default_str();
    ib->add_option("--d", ib_d)->capture_default_str();
    ib->add_option("--k", ib_k)->capture_default_str();
    ib->add_option("--efs", ib_efs)->capture_default_str();
    ib->add_option("--kind", ib_kind, "synthetic distribution")->capture_default_str();
    ib->add_option("--data-seed", ib_seed)->capture_default_str();
    ib->add_option("--out", ib_out, "per-batch CSV (default: stdout)");
    add_build_flags(ib, ib_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            VectorSet vs = gen_synthetic(parse_kind(gen_kind), gen_n, gen_d, gen_seed);
            save_fvecs(gen_out, vs);
            std::printf("wrote %zu x %u vectors to %s\n", vs.count(), gen_d, gen_out.c_str());
        }

        if (*bld) {
            VectorSet vs = load_vectors(bld_data, parse_format(bld_data, bld_format),
                                        parse_metric(bld_metric));
            std::printf("loaded %zu x %zu vectors\n", vs.count(), vs.dim());
            auto t0 = clock_type::now();
            PagIndex index = build(std::move(vs), bld_flags.params(), bld_threads);
            double s = std::chrono::duration<double>(clock_type::now() - t0).count();
            save_index(index, bld_out);
            size_t edges = 0;
            for (uint32_t u = 0; u < index.size(); ++u) edges += index.degree(u);
            std::printf("built in %.1fs: %u nodes, %zu edges, saved to %s\n", s, index.size(),
                        edges, bld_out.c_str());
        }

        if (*srch) {
            PagIndex index = load_index(srch_index);
            VectorSet queries = load_vectors(srch_queries,
                                             parse_format(srch_queries, srch_format),
                                             index.vectors().metric());
            std::vector<std::vector<int32_t>> truth;
            if (!srch_gt.empty()) truth = load_ivecs(srch_gt);

            SearchParams sp;
            sp.K = srch_k;
            sp.efS = srch_efs;
            sp.use_prt = !srch_no_prt;
            sp.use_tfb = !srch_no_tfb;

            std::ofstream file;
            if (!srch_out.empty()) file.open(srch_out);
            std::ostream& out = srch_out.empty() ? std::cout : file;
            out << stats_csv_header() << "\n";

            TfbState st;
            std::vector<float> q(queries.dim());
            const uint32_t d = static_cast<uint32_t>(queries.dim());
            double recall_sum = 0;
            size_t with_truth = 0;
            for (size_t qi = 0; qi < queries.count(); ++qi) {
                std::copy(queries.row(qi), queries.row(qi) + d, q.begin());
                auto t0 = clock_type::now();
                auto res = search(index, q, sp, st);
                uint64_t ns = static_cast<uint64_t>(
                    std::chrono::duration<double, std::nano>(clock_type::now() - t0).count());
                double recall = -1.0;
                if (qi < truth.size()) {
                    size_t hits = 0;
                    size_t kk = std::min<size_t>(sp.K, truth[qi].size());
                    for (const auto& c : res.results)
                        for (size_t t = 0; t < kk; ++t)
                            if (static_cast<int32_t>(c.id) == truth[qi][t]) { ++hits; break; }
                    recall = kk ? static_cast<double>(hits) / static_cast<double>(kk) : 0.0;
                    recall_sum += recall;
                    ++with_truth;
                }
                out << stats_csv_row(qi, sp.K, sp.efS, recall, res.stats, ns) << "\n";
            }
            if (with_truth)
                std::fprintf(stderr, "mean recall@%u = %.4f over %zu queries\n", sp.K,
                             recall_sum / static_cast<double>(with_truth), with_truth);
        }

        if (*gt) {
            MetricKind metric = parse_metric(gt_metric);
            VectorSet base = load_vectors(gt_data, parse_format(gt_data, gt_format), metric);
            VectorSet queries =
                load_vectors(gt_queries, parse_format(gt_queries, gt_format), metric);
            GroundTruth truth = ground_truth(base, queries, gt_k, gt_threads);
            std::vector<std::vector<int32_t>> rows;
            rows.reserve(truth.rows.size());
            for (const auto& r : truth.rows) {
                std::vector<int32_t> ids;
                ids.reserve(r.size());
                for (const auto& c : r) ids.push_back(static_cast<int32_t>(c.id));
                rows.push_back(std::move(ids));
            }
            save_ivecs(gt_out, rows);
            std::printf("wrote %zu truth rows (k*=%u) to %s\n", rows.size(), truth.k_star,
                        gt_out.c_str());
        }

        if (*bench) {
            cfg.kind = parse_kind(bench_kind);
            cfg.metric = parse_metric(bench_metric);
            cfg.build = bench_flags.params();
            cfg.prt = !bench_no_prt;
            cfg.tfb = !bench_no_tfb;
            cfg.pes = !bench_flags.no_pes;
            auto rows = run_benchmark(cfg);
            std::printf("efS,K,recall,qps,mean_exact_dist,mean_gamma,build_s,adjacency_bytes\n");
            for (const auto& r : rows)
                std::printf("%u,%u,%.4f,%.1f,%.1f,%.4f,%.2f,%zu\n", r.efS, r.K, r.mean_recall,
                            r.qps, r.mean_exact_dist, r.mean_gamma, r.build_seconds,
                            r.adjacency_bytes);
        }

        if (*vt) {
            auto report = validate_theorem(vt_d, vt_l, vt_trials, vt_alpha, vt_seed);
            std::ofstream file;
            if (!vt_out.empty()) file.open(vt_out);
            std::ostream& out = vt_out.empty() ? std::cout : file;
            out << "L,cos_beta_mid,samples,mean_cos_theta,expected_cos_theta,standard_error,"
                   "mean_ok\n";
            for (const auto& lr : report.per_l)
                for (const auto& b : lr.buckets)
                    out << lr.L << ',' << b.cos_beta_mid << ',' << b.samples << ','
                        << b.mean_cos_theta << ',' << b.expected_cos_theta << ','
                        << b.standard_error << ',' << (b.mean_ok ? 1 : 0) << "\n";
            for (size_t i = 0; i + 1 < vt_l.size(); ++i)
                std::fprintf(stderr, "var(L=%u)/var(L=%u) = %.4f\n", vt_l[i + 1], vt_l[i],
                             report.variance_ratios[i]);
            std::fprintf(stderr, "variance shrinks: %s\n",
                         report.variance_shrinks ? "yes" : "no");
        }

        if (*ib) {
            SyntheticKind kind = parse_kind(ib_kind);
            VectorSet base = gen_synthetic(kind, ib_n, ib_d, ib_seed);
            VectorSet extra = gen_synthetic(kind, ib_inserts, ib_d, ib_seed + 1);
            VectorSet queries = gen_synthetic(kind, ib_queries, ib_d, ib_seed + 2);

            PagIndex index = build(std::move(base), ib_flags.params());
            index.reserve(ib_n + ib_inserts);

            std::ofstream file;
            if (!ib_out.empty()) file.open(ib_out);
            std::ostream& out = ib_out.empty() ? std::cout : file;
            out << "batch,n_indexed,insert_qps,search_qps,recall\n";

            SearchParams sp;
            sp.K = ib_k;
            sp.efS = ib_efs;
            TfbState st;
            PesSet pes;
            std::vector<float> buf(ib_d);
            const size_t per_batch = ib_inserts / ib_batches;

            for (uint32_t bidx = 0; bidx < ib_batches; ++bidx) {
                auto t0 = clock_type::now();
                for (size_t i = bidx * per_batch; i < (bidx + 1) * per_batch; ++i) {
                    std::copy(extra.row(i), extra.row(i) + ib_d, buf.begin());
                    insert_online(index, buf, pes);
                }
                double ins_s = std::chrono::duration<double>(clock_type::now() - t0).count();

                // exact truth against the current contents, then a query batch
                GroundTruth truth = ground_truth(index.vectors(), queries, ib_k);
                double recall = 0;
                t0 = clock_type::now();
                for (size_t qi = 0; qi < queries.count(); ++qi) {
                    std::copy(queries.row(qi), queries.row(qi) + ib_d, buf.begin());
                    auto res = search(index, buf, sp, st);
                    std::vector<uint32_t> ids;
                    for (const auto& c : res.results) ids.push_back(c.id);
                    recall += recall_at_k(ids, truth.rows[qi], ib_k);
                }
                double q_s = std::chrono::duration<double>(clock_type::now() - t0).count();
                out << bidx << ',' << index.size() << ','
                    << static_cast<double>(per_batch) / ins_s << ','
                    << static_cast<double>(queries.count()) / q_s << ','
                    << recall / static_cast<double>(queries.count()) << "\n";
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

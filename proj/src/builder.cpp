#include "pag/builder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <thread>

#include "pag/routing.hpp"

namespace pag {

namespace {
constexpr uint64_t kIndexMagic = 0x5041474944583031ull;  // "PAGIDX01"
constexpr uint32_t kIndexVersion = 1;

uint64_t edge_key(uint32_t u, uint32_t v) {
    return (static_cast<uint64_t>(u) << 32) | v;
}
}  // namespace

void PesSet::add(uint32_t u, uint32_t v) {
    if (u == v) return;
    std::lock_guard<std::mutex> g(mu_);
    if (keys_.insert(edge_key(u, v)).second) entries_.emplace_back(u, v);
}

size_t PesSet::size() const {
    std::lock_guard<std::mutex> g(mu_);
    return entries_.size();
}

std::vector<std::pair<uint32_t, uint32_t>> PesSet::take_all() {
    std::lock_guard<std::mutex> g(mu_);
    keys_.clear();
    return std::exchange(entries_, {});
}

PagIndex::PagIndex(VectorSet&& vectors, BuildParams params)
    : vectors_(std::move(vectors)), params_(params) {
    if (params_.L == 0) params_.L = default_subspace_count(static_cast<uint32_t>(vectors_.dim()));
    vectors_.repad(params_.L);
    refs_ = build_reference_set(static_cast<uint32_t>(vectors_.padded_dim()), params_.L,
                                params_.m, params_.seed);
    alloc(std::max<size_t>(vectors_.count(), 1));
}

PagIndex::PagIndex(PagIndex&& other) noexcept
    : vectors_(std::move(other.vectors_)),
      refs_(std::move(other.refs_)),
      params_(other.params_),
      entry_nodes_(std::move(other.entry_nodes_)),
      node_capacity_(other.node_capacity_),
      targets_(std::move(other.targets_)),
      scalars_(std::move(other.scalars_)),
      codes_(std::move(other.codes_)),
      degree_(std::move(other.degree_)),
      locks_(std::move(other.locks_)) {
    online_since_flush_.store(other.online_since_flush_.load(std::memory_order_relaxed),
                              std::memory_order_relaxed);
    other.node_capacity_ = 0;
}

void PagIndex::alloc(size_t rows) {
    if (rows <= node_capacity_) return;
    targets_.resize(rows * max_degree(), 0);
    scalars_.resize(rows * max_degree(), EdgeScalars{0, 0, 0});
    codes_.resize(rows * max_degree() * code_bytes(), 0);
    auto fresh_deg = std::make_unique<std::atomic<uint32_t>[]>(rows);
    for (size_t i = 0; i < rows; ++i)
        fresh_deg[i].store(i < node_capacity_ ? degree_[i].load() : 0u,
                           std::memory_order_relaxed);
    degree_ = std::move(fresh_deg);
    locks_ = std::make_unique<std::mutex[]>(rows);
    node_capacity_ = rows;
}

void PagIndex::reserve(size_t rows) {
    vectors_.reserve(rows);
    alloc(rows);
}

bool PagIndex::has_edge(uint32_t u, uint32_t v) const {
    uint32_t deg = degree(u);
    const uint32_t* tg = targets(u);
    for (uint32_t j = 0; j < deg; ++j)
        if (tg[j] == v) return true;
    return false;
}

void PagIndex::rebuild_neighbors(uint32_t u, std::span<const Candidate> kept) {
    const uint32_t cap = max_degree();
    if (kept.size() > cap) throw std::logic_error("adjacency over degree cap");
    const size_t cb = code_bytes();
    const uint32_t old_deg = degree_[u].load(std::memory_order_relaxed);
    const uint32_t* old_tg = targets(u);

    // stash the old edges so metas survive an in-place rewrite
    std::vector<uint32_t> prev_tg(old_tg, old_tg + old_deg);
    std::vector<EdgeScalars> prev_sc(scalars(u), scalars(u) + old_deg);
    std::vector<uint8_t> prev_codes(codes_.begin() + static_cast<size_t>(u) * cap * cb,
                                    codes_.begin() + (static_cast<size_t>(u) * cap + old_deg) * cb);

    uint32_t* tg = targets_.data() + static_cast<size_t>(u) * cap;
    EdgeScalars* sc = scalars_.data() + static_cast<size_t>(u) * cap;
    uint8_t* cd = codes_.data() + static_cast<size_t>(u) * cap * cb;

    for (size_t j = 0; j < kept.size(); ++j) {
        uint32_t w = kept[j].id;
        if (w == u) throw std::logic_error("self-loop in adjacency");
        tg[j] = w;
        auto it = std::find(prev_tg.begin(), prev_tg.end(), w);
        if (it != prev_tg.end()) {
            size_t p = static_cast<size_t>(it - prev_tg.begin());
            sc[j] = prev_sc[p];
            std::memcpy(cd + j * cb, prev_codes.data() + p * cb, cb);
        } else {
            encode_edge_into(vectors_.row(u), vectors_.row(w), refs_, cd + j * cb,
                             &sc[j].cos_beta, &sc[j].edge_norm, &sc[j].base_offset);
        }
    }
    degree_[u].store(static_cast<uint32_t>(kept.size()), std::memory_order_release);
}

void PagIndex::append_edge(uint32_t u, uint32_t w) {
    const uint32_t cap = max_degree();
    uint32_t deg = degree_[u].load(std::memory_order_relaxed);
    if (deg >= cap) throw std::logic_error("append past degree cap");
    if (w == u) throw std::logic_error("self-loop in adjacency");
    const size_t cb = code_bytes();
    uint32_t* tg = targets_.data() + static_cast<size_t>(u) * cap;
    EdgeScalars* sc = scalars_.data() + static_cast<size_t>(u) * cap;
    uint8_t* cd = codes_.data() + (static_cast<size_t>(u) * cap + deg) * cb;
    encode_edge_into(vectors_.row(u), vectors_.row(w), refs_, cd, &sc[deg].cos_beta,
                     &sc[deg].edge_norm, &sc[deg].base_offset);
    tg[deg] = w;
    degree_[u].store(deg + 1, std::memory_order_release);
}

void PagIndex::restore_edge(uint32_t u, uint32_t target, const uint8_t* codes,
                            EdgeScalars sc) {
    const uint32_t cap = max_degree();
    uint32_t deg = degree_[u].load(std::memory_order_relaxed);
    if (deg >= cap) throw std::logic_error("restore past degree cap");
    const size_t cb = code_bytes();
    targets_[static_cast<size_t>(u) * cap + deg] = target;
    scalars_[static_cast<size_t>(u) * cap + deg] = sc;
    std::memcpy(codes_.data() + (static_cast<size_t>(u) * cap + deg) * cb, codes, cb);
    degree_[u].store(deg + 1, std::memory_order_release);
}

uint32_t PagIndex::append_vector(std::span<const float> x) {
    if (vectors_.count() == node_capacity_) {
        size_t grown = node_capacity_ + node_capacity_ / 2 + 1;
        vectors_.reserve(grown);
        alloc(grown);
    }
    return vectors_.add(x);
}

uint32_t PagIndex::pes_flush_interval() const {
    if (params_.pes_flush_interval) return params_.pes_flush_interval;
    return std::max<uint32_t>(1000, size() / 100);
}

std::vector<Candidate> robust_prune(const VectorSet& vs,
                                    std::span<const Candidate> candidates_sorted,
                                    uint32_t M_cap) {
    std::vector<Candidate> kept;
    kept.reserve(std::min<size_t>(M_cap, candidates_sorted.size()));
    const size_t pd = vs.padded_dim();
    for (const Candidate& c : candidates_sorted) {
        bool ok = true;
        for (const Candidate& w : kept) {
            if (sq_dist(vs.row(w.id), vs.row(c.id), pd) <= c.sq) {
                ok = false;
                break;
            }
        }
        if (ok) {
            kept.push_back(c);
            if (kept.size() >= M_cap) break;
        }
    }
    return kept;
}

namespace {

// Reverse edge u->v guarded by RobustPrune over u's current targets plus v.
// Below the cap the existing list is kept and v appended when it survives;
// at the cap the whole list is re-pruned.
void add_reverse_edge(PagIndex& index, uint32_t u, uint32_t v, float sq_uv) {
    std::lock_guard<std::mutex> g(index.node_lock(u));
    if (index.has_edge(u, v)) return;
    const uint32_t deg = index.degree(u);
    const uint32_t* tg = index.targets(u);
    const EdgeScalars* sc = index.scalars(u);

    std::vector<Candidate> cand;
    cand.reserve(deg + 1);
    for (uint32_t j = 0; j < deg; ++j)
        cand.push_back({tg[j], sc[j].edge_norm * sc[j].edge_norm});
    cand.push_back({v, sq_uv});
    std::sort(cand.begin(), cand.end(), candidate_less);

    auto kept = robust_prune(index.vectors(), cand, index.max_degree());
    bool v_kept = std::any_of(kept.begin(), kept.end(),
                              [&](const Candidate& c) { return c.id == v; });
    if (!v_kept) return;
    if (deg < index.max_degree())
        index.append_edge(u, v);
    else
        index.rebuild_neighbors(u, kept);
}

void insert_with_state(PagIndex& index, uint32_t v, PesSet& pes, TfbState& state) {
    const BuildParams& bp = index.params();
    SearchParams sp;
    sp.K = bp.efC;
    sp.efS = bp.efC;
    sp.b_override = bp.b_build;
    sp.collect_pes = bp.enable_pes;

    SearchResult res = search_padded(index, index.vectors().row(v), sp, state);

    std::vector<Candidate> cand;
    cand.reserve(res.results.size());
    for (const Candidate& c : res.results)
        if (c.id != v && c.sq > 0.0f) cand.push_back(c);

    auto kept = robust_prune(index.vectors(), cand, index.max_degree());
    {
        std::lock_guard<std::mutex> g(index.node_lock(v));
        index.rebuild_neighbors(v, kept);
    }
    for (const Candidate& u : kept) add_reverse_edge(index, u.id, v, u.sq);
    for (uint32_t u : res.pes_rejected)
        if (u != v) pes.add(u, v);
}

}  // namespace

void insert(PagIndex& index, uint32_t v, PesSet& pes) {
    TfbState state;
    insert_with_state(index, v, pes, state);
}

size_t flush_pes_set(PagIndex& index, PesSet& pes) {
    auto entries = pes.take_all();
    const size_t pd = index.vectors().padded_dim();
    size_t added = 0;
    for (auto [u, v] : entries) {
        if (u == v || v >= index.size() || u >= index.size()) continue;
        std::lock_guard<std::mutex> g(index.node_lock(u));
        if (index.has_edge(u, v)) continue;
        if (index.degree(u) >= index.max_degree()) continue;  // supplement only, never evict
        float sq_uv = sq_dist(index.vectors().row(u), index.vectors().row(v), pd);
        if (sq_uv == 0.0f) continue;
        bool shortcut = false;
        const uint32_t deg = index.degree(u);
        const uint32_t* tg = index.targets(u);
        const EdgeScalars* sc = index.scalars(u);
        for (uint32_t j = 0; j < deg; ++j) {
            // Eq.-1 membership (||w-v|| <= ||v-u||) plus the prune condition
            // (||w-u|| <= ||v-u||), both on exact distances
            if (sc[j].edge_norm * sc[j].edge_norm <= sq_uv &&
                sq_dist(index.vectors().row(tg[j]), index.vectors().row(v), pd) <= sq_uv) {
                shortcut = true;
                break;
            }
        }
        if (shortcut) continue;
        index.append_edge(u, v);
        ++added;
    }
    return added;
}

PagIndex build(VectorSet&& vectors, BuildParams params, unsigned threads) {
    const size_t n = vectors.count();
    if (n < params.b_build) throw std::invalid_argument("dataset smaller than b_build");

    PagIndex index(std::move(vectors), params);
    const VectorSet& vs = index.vectors();
    const size_t pd = vs.padded_dim();

    // entry nodes: the b_build vectors nearest the dataset centroid
    std::vector<double> centroid_d(pd, 0.0);
    for (size_t i = 0; i < n; ++i) {
        const float* r = vs.row(i);
        for (size_t k = 0; k < pd; ++k) centroid_d[k] += r[k];
    }
    std::vector<float> centroid(pd);
    for (size_t k = 0; k < pd; ++k) centroid[k] = static_cast<float>(centroid_d[k] / n);

    std::vector<Candidate> by_centroid(n);
    for (size_t i = 0; i < n; ++i)
        by_centroid[i] = {static_cast<uint32_t>(i), sq_dist(vs.row(i), centroid.data(), pd)};
    const uint32_t b = index.params().b_build;
    std::partial_sort(by_centroid.begin(), by_centroid.begin() + b, by_centroid.end(),
                      candidate_less);
    std::vector<uint32_t> entries(b);
    for (uint32_t i = 0; i < b; ++i) entries[i] = by_centroid[i].id;
    index.set_entry_nodes(entries);

    // complete clique over the entry nodes (pruned only if it would
    // exceed the degree cap); zero-length edges are skipped
    for (uint32_t e : entries) {
        std::vector<Candidate> cand;
        for (uint32_t o : entries) {
            if (o == e) continue;
            float sq = sq_dist(vs.row(e), vs.row(o), pd);
            if (sq > 0.0f) cand.push_back({o, sq});
        }
        std::sort(cand.begin(), cand.end(), candidate_less);
        if (cand.size() > index.max_degree())
            index.rebuild_neighbors(e, robust_prune(vs, cand, index.max_degree()));
        else
            index.rebuild_neighbors(e, cand);
    }

    std::vector<uint32_t> rest;
    rest.reserve(n - b);
    std::vector<bool> is_entry(n, false);
    for (uint32_t e : entries) is_entry[e] = true;
    for (uint32_t i = 0; i < n; ++i)
        if (!is_entry[i]) rest.push_back(i);

    PesSet pes;
    if (threads <= 1) {
        TfbState state;
        for (uint32_t v : rest) insert_with_state(index, v, pes, state);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                TfbState state;
                while (true) {
                    size_t i = next.fetch_add(1);
                    if (i >= rest.size()) break;
                    insert_with_state(index, rest[i], pes, state);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    if (index.params().enable_pes) flush_pes_set(index, pes);
    return index;
}

uint32_t insert_online(PagIndex& index, std::span<const float> x, PesSet& pes) {
    uint32_t v = index.append_vector(x);
    insert(index, v, pes);
    uint32_t since = index.online_counter().fetch_add(1) + 1;
    if (since >= index.pes_flush_interval()) {
        index.online_counter().store(0);
        flush_pes_set(index, pes);
    }
    return v;
}

namespace {

void write_bytes(std::FILE* f, const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw std::runtime_error("index write failed");
}

void read_bytes(std::FILE* f, void* p, size_t n) {
    if (std::fread(p, 1, n, f) != n) throw std::runtime_error("index read failed");
}

template <typename T>
void write_pod(std::FILE* f, const T& v) {
    write_bytes(f, &v, sizeof(T));
}

template <typename T>
T read_pod(std::FILE* f) {
    T v;
    read_bytes(f, &v, sizeof(T));
    return v;
}

}  // namespace

void save_index(const PagIndex& index, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    const VectorSet& vs = index.vectors();
    const BuildParams& bp = index.params();
    try {
        write_pod(f, kIndexMagic);
        write_pod(f, kIndexVersion);
        write_pod<uint64_t>(f, index.size());
        write_pod<uint32_t>(f, static_cast<uint32_t>(vs.dim()));
        write_pod<uint32_t>(f, static_cast<uint32_t>(vs.padded_dim()));
        write_pod<uint32_t>(f, bp.L);
        write_pod<uint32_t>(f, bp.m);
        write_pod<uint32_t>(f, bp.M);
        write_pod<uint32_t>(f, bp.efC);
        write_pod<uint32_t>(f, bp.b_build);
        write_pod<uint32_t>(f, bp.pes_flush_interval);
        write_pod<uint64_t>(f, bp.seed);
        write_pod<uint8_t>(f, static_cast<uint8_t>(vs.metric()));
        write_pod<uint8_t>(f, bp.enable_pes ? 1 : 0);
        write_pod<uint32_t>(f, static_cast<uint32_t>(index.entry_nodes().size()));
        write_bytes(f, index.entry_nodes().data(),
                    index.entry_nodes().size() * sizeof(uint32_t));
        const size_t cb = index.code_bytes();
        for (uint32_t u = 0; u < index.size(); ++u) {
            uint32_t deg = index.degree(u);
            write_pod(f, deg);
            for (uint32_t j = 0; j < deg; ++j) {
                write_pod(f, index.targets(u)[j]);
                write_bytes(f, index.edge_codes(u, j), cb);
                write_pod(f, index.scalars(u)[j].cos_beta);
                write_pod(f, index.scalars(u)[j].edge_norm);
                write_pod(f, index.scalars(u)[j].base_offset);
            }
        }
        for (uint32_t i = 0; i < index.size(); ++i)
            write_bytes(f, vs.row(i), vs.padded_dim() * sizeof(float));
        for (uint32_t i = 0; i < index.size(); ++i) write_pod(f, vs.norm(i));
    } catch (...) {
        std::fclose(f);
        throw;
    }
    std::fclose(f);
}

PagIndex load_index(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open index: " + path);
    try {
        if (read_pod<uint64_t>(f) != kIndexMagic) throw std::runtime_error("bad index magic");
        if (read_pod<uint32_t>(f) != kIndexVersion)
            throw std::runtime_error("unsupported index version");
        uint64_t n = read_pod<uint64_t>(f);
        uint32_t dim = read_pod<uint32_t>(f);
        uint32_t padded = read_pod<uint32_t>(f);
        BuildParams bp;
        bp.L = read_pod<uint32_t>(f);
        bp.m = read_pod<uint32_t>(f);
        bp.M = read_pod<uint32_t>(f);
        bp.efC = read_pod<uint32_t>(f);
        bp.b_build = read_pod<uint32_t>(f);
        bp.pes_flush_interval = read_pod<uint32_t>(f);
        bp.seed = read_pod<uint64_t>(f);
        MetricKind metric = static_cast<MetricKind>(read_pod<uint8_t>(f));
        bp.enable_pes = read_pod<uint8_t>(f) != 0;
        uint32_t n_entries = read_pod<uint32_t>(f);
        std::vector<uint32_t> entries(n_entries);
        read_bytes(f, entries.data(), n_entries * sizeof(uint32_t));

        VectorSet vs(dim, padded, metric);
        PagIndex index(std::move(vs), bp);
        if (index.vectors().padded_dim() != padded)
            throw std::runtime_error("padded_dim mismatch on load");
        index.reserve(n);
        index.set_entry_nodes(std::move(entries));

        const size_t cb = index.code_bytes();
        std::vector<uint8_t> codes(cb);
        for (uint64_t u = 0; u < n; ++u) {
            uint32_t deg = read_pod<uint32_t>(f);
            if (deg > index.max_degree()) throw std::runtime_error("degree over cap in file");
            for (uint32_t j = 0; j < deg; ++j) {
                uint32_t target = read_pod<uint32_t>(f);
                read_bytes(f, codes.data(), cb);
                EdgeScalars sc;
                sc.cos_beta = read_pod<float>(f);
                sc.edge_norm = read_pod<float>(f);
                sc.base_offset = read_pod<float>(f);
                index.restore_edge(static_cast<uint32_t>(u), target, codes.data(), sc);
            }
        }
        std::vector<float> rows(n * static_cast<size_t>(padded));
        read_bytes(f, rows.data(), rows.size() * sizeof(float));
        std::vector<float> norms(n);
        read_bytes(f, norms.data(), norms.size() * sizeof(float));
        for (uint64_t i = 0; i < n; ++i)
            index.vectors_.add_raw(rows.data() + i * padded, norms[i]);
        std::fclose(f);
        return index;
    } catch (...) {
        std::fclose(f);
        throw;
    }
}

}  // namespace pag

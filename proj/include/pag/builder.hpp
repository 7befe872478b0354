#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pag/projection.hpp"
#include "pag/vecstore.hpp"

namespace pag {

struct Candidate {
    uint32_t id;
    float sq;  // squared distance to the pivot/query
};

inline bool candidate_less(const Candidate& a, const Candidate& b) {
    return a.sq < b.sq || (a.sq == b.sq && a.id < b.id);
}

struct BuildParams {
    uint32_t M = 16;                  // adjacency lists are capped at 2M
    uint32_t efC = 200;               // construction visit budget
    uint32_t L = 0;                   // subspaces; 0 picks the dimension default
    uint32_t m = 16;                  // references per subspace, 4-bit codes
    uint32_t b_build = 32;            // working-set size during construction
    uint64_t seed = 42;
    uint32_t pes_flush_interval = 0;  // 0 = max(1000, n/100)
    bool enable_pes = true;           // ablation: skip PES collection and flushing
};

struct EdgeScalars {
    float cos_beta;
    float edge_norm;
    float base_offset;
};

/// Deduplicated table of directed candidate edges rejected by PES, awaiting
/// RobustPrune verification.
class PesSet {
public:
    void add(uint32_t u, uint32_t v);
    size_t size() const;
    std::vector<std::pair<uint32_t, uint32_t>> take_all();

private:
    mutable std::mutex mu_;
    std::unordered_set<uint64_t> keys_;
    std::vector<std::pair<uint32_t, uint32_t>> entries_;
};

/// Single-layer similarity graph over a VectorSet with per-edge inference
/// records. Adjacency lists live in fixed-stride arrays; each node's degree
/// is published with release semantics so concurrent searches see either the
/// pre-link or post-link list.
class PagIndex {
public:
    PagIndex(VectorSet&& vectors, BuildParams params);
    PagIndex(PagIndex&& other) noexcept;
    PagIndex& operator=(PagIndex&&) = delete;
    PagIndex(const PagIndex&) = delete;
    PagIndex& operator=(const PagIndex&) = delete;

    uint32_t size() const { return static_cast<uint32_t>(vectors_.count()); }
    uint32_t max_degree() const { return 2 * params_.M; }
    size_t code_bytes() const { return refs_.code_bytes(); }

    uint32_t degree(uint32_t u) const {
        return degree_[u].load(std::memory_order_acquire);
    }
    const uint32_t* targets(uint32_t u) const {
        return targets_.data() + static_cast<size_t>(u) * max_degree();
    }
    const EdgeScalars* scalars(uint32_t u) const {
        return scalars_.data() + static_cast<size_t>(u) * max_degree();
    }
    const uint8_t* edge_codes(uint32_t u, uint32_t j) const {
        return codes_.data() + (static_cast<size_t>(u) * max_degree() + j) * code_bytes();
    }
    bool has_edge(uint32_t u, uint32_t v) const;

    const VectorSet& vectors() const { return vectors_; }
    const ReferenceSet& refs() const { return refs_; }
    const BuildParams& params() const { return params_; }
    const std::vector<uint32_t>& entry_nodes() const { return entry_nodes_; }

    std::mutex& node_lock(uint32_t u) { return locks_[u]; }

    /// Replaces u's adjacency with `kept` (distances to u). Reuses stored
    /// EdgeMeta for targets already present, encodes the rest.
    void rebuild_neighbors(uint32_t u, std::span<const Candidate> kept);

    /// Appends one edge u->w (degree must be below cap). dist to u is
    /// recomputed during encoding.
    void append_edge(uint32_t u, uint32_t w);

    /// Appends a raw vector row (dim components), growing storage if needed.
    /// Growth is not safe against concurrent searches; reserve() up front.
    uint32_t append_vector(std::span<const float> x);
    void reserve(size_t rows);

    uint32_t pes_flush_interval() const;
    std::atomic<uint32_t>& online_counter() { return online_since_flush_; }

    // construction-time internals
    void set_entry_nodes(std::vector<uint32_t> ids) { entry_nodes_ = std::move(ids); }
    /// Deserialization path: appends a stored edge verbatim (codes + scalars).
    void restore_edge(uint32_t u, uint32_t target, const uint8_t* codes, EdgeScalars sc);

private:
    friend PagIndex load_index(const std::string&);
    void alloc(size_t rows);

    VectorSet vectors_;
    ReferenceSet refs_;
    BuildParams params_;
    std::vector<uint32_t> entry_nodes_;

    size_t node_capacity_ = 0;
    std::vector<uint32_t> targets_;
    std::vector<EdgeScalars> scalars_;
    std::vector<uint8_t> codes_;
    std::unique_ptr<std::atomic<uint32_t>[]> degree_;
    std::unique_ptr<std::mutex[]> locks_;
    std::atomic<uint32_t> online_since_flush_{0};
};

/// RobustPrune with pruning ratio 1: scans candidates nearest-first and keeps
/// u unless an already-kept w satisfies ||w-u|| <= ||v-u||. Candidates carry
/// exact squared distances to the pivot and must be sorted ascending.
std::vector<Candidate> robust_prune(const VectorSet& vs,
                                    std::span<const Candidate> candidates_sorted,
                                    uint32_t M_cap);

/// Inserts node v (vector already ingested) into the graph: PRT-TFB search,
/// forward prune, guarded reverse edges, PES accumulation.
void insert(PagIndex& index, uint32_t v, PesSet& pes);

/// Re-verifies every deferred PES candidate edge with exact distances and
/// links the survivors. Returns the number of edges added.
size_t flush_pes_set(PagIndex& index, PesSet& pes);

/// Full offline build: entry-node selection, complete entry clique,
/// sequential (or parallel) insertion, one final PES flush.
PagIndex build(VectorSet&& vectors, BuildParams params, unsigned threads = 1);

/// Online insertion: atomic vector publish, insert, periodic PES flush.
uint32_t insert_online(PagIndex& index, std::span<const float> x, PesSet& pes);

void save_index(const PagIndex& index, const std::string& path);
PagIndex load_index(const std::string& path);

}  // namespace pag

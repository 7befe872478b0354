#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "pag/builder.hpp"
#include "pag/projection.hpp"

namespace pag {

struct SearchParams {
    uint32_t K = 10;
    uint32_t efS = 100;       // result-list capacity / visit budget
    uint32_t b_override = 0;  // construction passes b_build; 0 = max(10, K)
    bool use_prt = true;      // ablation: false degenerates to exact expansion
    bool use_tfb = true;      // ablation: false = one round with b = efS
    bool collect_pes = false;

    uint32_t b() const { return b_override ? b_override : std::max(10u, K); }
};

struct SearchStats {
    uint64_t exact_dist_count = 0;
    uint64_t test_count = 0;
    uint64_t pass_count = 0;
    uint64_t visited_count = 0;

    double gamma() const {
        return test_count ? static_cast<double>(pass_count) / static_cast<double>(test_count)
                          : 0.0;
    }
};

/// PRT admission threshold (law of cosines): the cosine of the angle between
/// w-u and v-u required for w to beat the current z_max. Inputs are true
/// (non-squared) norms. The returned value may lie outside [-1, 1]; callers
/// apply prt_test's clamp policy.
inline float prt_threshold(float edge_norm, float dist_uv, float dist_zmax_v) {
    return (edge_norm * edge_norm + dist_uv * dist_uv - dist_zmax_v * dist_zmax_v) /
           (2.0f * dist_uv * edge_norm);
}

/// PRT: passes when cos_theta / cos_beta - tau >= 0. tau above 1 + 1e-6 fails
/// without evaluating the quotient; tau <= -1 always passes.
inline bool prt_test(float cos_theta, float cos_beta, float tau) {
    if (tau >= 1.0f + 1e-6f) return false;
    if (tau <= -1.0f) return true;
    return cos_theta / cos_beta - tau >= 0.0f;
}

/// Per-edge PES margin; PES(u, v) is the max over u's out-edges, with the
/// empty max defined as -inf (always rejected).
inline float pes_margin(float cos_theta, float cos_beta, float delta) {
    return cos_theta / cos_beta - delta;
}

/// Round-based TFB search state: result list R_L, working set W, and the two
/// rings R_F (false positives) and R_T (ejected), all reusable across queries
/// via epoch-stamped visit marks.
class TfbState {
public:
    struct WorkEntry {
        uint32_t id;
        float sq;
        bool visited;
    };

    /// Bounded FIFO ring of capacity b; a push onto a full ring overwrites
    /// the oldest entry.
    class Ring {
    public:
        void reset(uint32_t cap) {
            cap_ = cap;
            buf_.assign(cap, Candidate{0, 0});
            head_ = size_ = 0;
        }
        void push(Candidate c) {
            buf_[(head_ + size_) % cap_] = c;
            if (size_ < cap_) {
                ++size_;
            } else {
                head_ = (head_ + 1) % cap_;  // overwrite oldest
            }
        }
        size_t size() const { return size_; }
        uint32_t capacity() const { return cap_; }
        Candidate at(size_t i) const { return buf_[(head_ + i) % cap_]; }
        void clear() { head_ = size_ = 0; }

    private:
        uint32_t cap_ = 0;
        std::vector<Candidate> buf_;
        size_t head_ = 0, size_ = 0;
    };

    void reset(size_t n_nodes, uint32_t b, uint32_t cap_R);

    uint32_t b() const { return b_; }
    uint32_t cap_R() const { return cap_R_; }
    uint32_t round() const { return round_; }

    bool marked(uint32_t id) const { return marks_[id] == epoch_; }
    void mark(uint32_t id) { marks_[id] = epoch_; }

    const std::vector<WorkEntry>& working() const { return working_; }
    std::vector<WorkEntry>& working() { return working_; }
    const Ring& ring_f() const { return ring_f_; }
    const Ring& ring_t() const { return ring_t_; }
    const std::vector<Candidate>& result() const { return result_; }

    /// Max squared distance over current working entries (-inf when empty).
    float zmax_sq() const { return zmax_sq_; }
    /// Admission radius: +inf while the working set is below capacity.
    float admission_sq() const {
        return working_.size() < b_ ? std::numeric_limits<float>::infinity() : zmax_sq_;
    }
    float admission_dist() const {
        return working_.size() < b_ ? std::numeric_limits<float>::infinity() : zmax_dist_;
    }

    /// Seeds one entry node (exact distance already computed and marked).
    void seed(uint32_t id, float sq);
    /// Admits a node whose exact distance beat the admission radius; ejects
    /// the old z_max to ring_t when full.
    void admit(uint32_t id, float sq);
    void push_false_positive(uint32_t id, float sq) { ring_f_.push({id, sq}); }

    /// Index of the nearest unvisited working entry, or npos.
    static constexpr size_t npos = static_cast<size_t>(-1);
    size_t next_unvisited() const;

    /// Flushes working into the result list, merges and redistributes the
    /// rings, starts the next round. Returns false when the merge is empty
    /// (graph exhausted).
    bool end_round();

    /// Bounded insert into the result list (capacity cap_R, sorted by
    /// (sq, id) ascending).
    void push_result(Candidate c);

    /// Throws std::logic_error on any violated TFB invariant.
    void validate() const;

    ProjectionTable table;    // query-local projection table
    std::vector<float> qbuf;  // padded (and possibly normalized) query

private:
    void recompute_zmax();

    uint32_t b_ = 0, cap_R_ = 0, round_ = 0;
    std::vector<WorkEntry> working_;
    Ring ring_f_, ring_t_;
    std::vector<Candidate> result_;
    float zmax_sq_ = 0, zmax_dist_ = 0;
    size_t zmax_idx_ = 0;
    std::vector<uint32_t> marks_;
    uint32_t epoch_ = 0;
    std::vector<Candidate> merge_buf_;
};

struct ExpandOutcome {
    bool pes_rejected = false;
};

/// Expands one unvisited working entry: PRT-TFB over its out-edges, exact
/// distances for passers, optional PES margin tracking. q is the padded
/// query (state.qbuf during a search).
ExpandOutcome expand_node(size_t work_idx, TfbState& state, const PagIndex& index,
                          const float* q, const SearchParams& params, SearchStats& stats);

struct SearchResult {
    std::vector<Candidate> results;  // K nearest, squared distances, ascending
    SearchStats stats;
    std::vector<uint32_t> pes_rejected;  // expanded nodes with negative PES max
};

/// Algorithm-2 search over a built index. Deterministic given
/// (index, q, params). q carries dim() raw components.
SearchResult search(const PagIndex& index, std::span<const float> q,
                    const SearchParams& params, TfbState& state);
SearchResult search(const PagIndex& index, std::span<const float> q,
                    const SearchParams& params);

/// Same engine over an already padded (and normalized, under cosine) query.
SearchResult search_padded(const PagIndex& index, const float* padded_q,
                           const SearchParams& params, TfbState& state);

}  // namespace pag

#include "pag/routing.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

#include "pag/vecstore.hpp"

namespace pag {

void TfbState::reset(size_t n_nodes, uint32_t b, uint32_t cap_R) {
    b_ = b;
    cap_R_ = cap_R;
    round_ = 0;
    working_.clear();
    working_.reserve(b);
    ring_f_.reset(b);
    ring_t_.reset(b);
    result_.clear();
    result_.reserve(cap_R);
    zmax_sq_ = zmax_dist_ = 0;
    zmax_idx_ = 0;
    if (marks_.size() < n_nodes) marks_.resize(n_nodes, 0);
    if (epoch_ == std::numeric_limits<uint32_t>::max()) {
        std::fill(marks_.begin(), marks_.end(), 0);
        epoch_ = 0;
    }
    ++epoch_;
}

void TfbState::recompute_zmax() {
    if (working_.empty()) {
        zmax_sq_ = zmax_dist_ = 0;
        zmax_idx_ = 0;
        return;
    }
    size_t best = 0;
    for (size_t i = 1; i < working_.size(); ++i)
        if (working_[i].sq > working_[best].sq) best = i;
    zmax_idx_ = best;
    zmax_sq_ = working_[best].sq;
    zmax_dist_ = std::sqrt(zmax_sq_);
}

void TfbState::seed(uint32_t id, float sq) {
    working_.push_back({id, sq, false});
    if (sq > zmax_sq_ || working_.size() == 1) {
        zmax_idx_ = working_.size() - 1;
        zmax_sq_ = sq;
        zmax_dist_ = std::sqrt(sq);
    }
}

void TfbState::admit(uint32_t id, float sq) {
    if (working_.size() < b_) {
        working_.push_back({id, sq, false});
        if (sq > zmax_sq_ || working_.size() == 1) {
            zmax_idx_ = working_.size() - 1;
            zmax_sq_ = sq;
            zmax_dist_ = std::sqrt(sq);
        }
        return;
    }
    WorkEntry& slot = working_[zmax_idx_];
    ring_t_.push({slot.id, slot.sq});
    slot = {id, sq, false};
    recompute_zmax();
}

size_t TfbState::next_unvisited() const {
    size_t best = npos;
    for (size_t i = 0; i < working_.size(); ++i) {
        if (working_[i].visited) continue;
        if (best == npos || working_[i].sq < working_[best].sq ||
            (working_[i].sq == working_[best].sq && working_[i].id < working_[best].id))
            best = i;
    }
    return best;
}

void TfbState::push_result(Candidate c) {
    auto pos = std::lower_bound(result_.begin(), result_.end(), c, candidate_less);
    if (result_.size() >= cap_R_) {
        if (pos == result_.end()) return;  // farther than everything kept
        result_.pop_back();
        pos = std::lower_bound(result_.begin(), result_.end(), c, candidate_less);
    }
    result_.insert(pos, c);
}

bool TfbState::end_round() {
    for (const auto& e : working_) push_result({e.id, e.sq});
    working_.clear();

    merge_buf_.clear();
    for (size_t i = 0; i < ring_f_.size(); ++i) merge_buf_.push_back(ring_f_.at(i));
    for (size_t i = 0; i < ring_t_.size(); ++i) merge_buf_.push_back(ring_t_.at(i));
    ring_f_.clear();
    ring_t_.clear();
    std::sort(merge_buf_.begin(), merge_buf_.end(), candidate_less);

    ++round_;
    if (merge_buf_.empty()) {
        zmax_sq_ = zmax_dist_ = 0;
        return false;
    }
    size_t refill = std::min<size_t>(b_, merge_buf_.size());
    for (size_t i = 0; i < refill; ++i)
        working_.push_back({merge_buf_[i].id, merge_buf_[i].sq, false});
    for (size_t i = refill; i < merge_buf_.size(); ++i) ring_t_.push(merge_buf_[i]);
    recompute_zmax();
    return true;
}

void TfbState::validate() const {
    if (ring_f_.capacity() != b_ || ring_t_.capacity() != b_)
        throw std::logic_error("TFB: ring capacity != b");
    if (working_.size() > b_) throw std::logic_error("TFB: working set over capacity");
    if (result_.size() > cap_R_) throw std::logic_error("TFB: result list over capacity");
    if (!working_.empty()) {
        float mx = working_[0].sq;
        for (const auto& e : working_) mx = std::max(mx, e.sq);
        if (mx != zmax_sq_) throw std::logic_error("TFB: stale z_max");
    }
    std::unordered_set<uint32_t> seen;
    auto check_unique = [&](uint32_t id) {
        if (!seen.insert(id).second) throw std::logic_error("TFB: duplicate node residence");
    };
    for (const auto& e : working_) check_unique(e.id);
    for (size_t i = 0; i < ring_f_.size(); ++i) check_unique(ring_f_.at(i).id);
    for (size_t i = 0; i < ring_t_.size(); ++i) check_unique(ring_t_.at(i).id);
    for (const auto& c : result_) check_unique(c.id);
    for (size_t i = 1; i < result_.size(); ++i)
        if (candidate_less(result_[i], result_[i - 1]))
            throw std::logic_error("TFB: result list out of order");
}

ExpandOutcome expand_node(size_t work_idx, TfbState& state, const PagIndex& index,
                          const float* q, const SearchParams& params, SearchStats& stats) {
    TfbState::WorkEntry& entry = state.working()[work_idx];
    entry.visited = true;
    ++stats.visited_count;
    const uint32_t u = entry.id;
    const float dist_uq = std::sqrt(entry.sq);
    const bool exact_mode = (dist_uq == 0.0f) || !params.use_prt;
    const bool track_pes = params.collect_pes && dist_uq > 0.0f;
    const size_t padded = index.vectors().padded_dim();

    const uint32_t deg = index.degree(u);
    const uint32_t* tg = index.targets(u);
    const EdgeScalars* sc = index.scalars(u);

    float pes_max = -std::numeric_limits<float>::infinity();
    for (uint32_t j = 0; j < deg; ++j) {
        const uint32_t w = tg[j];
        const EdgeScalars& s = sc[j];
        float quot = 0;
        bool have_quot = false;
        if (!state.marked(w)) {
            ++stats.test_count;
            bool pass;
            if (exact_mode) {
                pass = true;
            } else {
                float tau = prt_threshold(s.edge_norm, dist_uq, state.admission_dist());
                if (tau >= 1.0f + 1e-6f) {
                    pass = false;
                } else if (tau <= -1.0f) {
                    pass = true;
                } else {
                    quot = estimate_cos_theta(state.table, index.edge_codes(u, j),
                                              s.base_offset, dist_uq) /
                           s.cos_beta;
                    have_quot = true;
                    pass = quot >= tau;
                }
            }
            if (pass) {
                ++stats.pass_count;
                float sq = sq_dist(index.vectors().row(w), q, padded);
                ++stats.exact_dist_count;
                state.mark(w);
                if (sq < state.admission_sq())
                    state.admit(w, sq);
                else
                    state.push_false_positive(w, sq);
            }
        }
        if (track_pes) {
            if (!have_quot)
                quot = estimate_cos_theta(state.table, index.edge_codes(u, j), s.base_offset,
                                          dist_uq) /
                       s.cos_beta;
            // cos_theta/cos_beta is shared with PRT; only the per-edge shift
            // tau - delta differs, so the margin reuses the quotient
            float delta = s.edge_norm / (2.0f * dist_uq);
            pes_max = std::max(pes_max, quot - delta);
        }
    }
    ExpandOutcome out;
    out.pes_rejected = track_pes && pes_max < 0.0f;
    return out;
}

SearchResult search_padded(const PagIndex& index, const float* padded_q,
                           const SearchParams& params, TfbState& state) {
    if (index.size() == 0) throw std::runtime_error("search on empty index");
    if (params.K > params.efS) throw std::invalid_argument("K > efS");

    const uint32_t n = index.size();
    const uint32_t b = params.use_tfb ? params.b() : std::max(params.efS, params.b());
    const uint32_t r_max = params.use_tfb ? (params.efS + b - 1) / b : 1;
    state.reset(n, b, params.efS);

    SearchResult out;
    build_projection_table(padded_q, index.refs(), state.table);

    const size_t padded = index.vectors().padded_dim();
    for (uint32_t id : index.entry_nodes()) {
        if (state.working().size() >= b) break;
        if (id >= n || state.marked(id)) continue;
        float sq = sq_dist(index.vectors().row(id), padded_q, padded);
        ++out.stats.exact_dist_count;
        state.mark(id);
        state.seed(id, sq);
    }

    for (uint32_t r = 0; r < r_max; ++r) {
        size_t i;
        while ((i = state.next_unvisited()) != TfbState::npos) {
            uint32_t u = state.working()[i].id;
            ExpandOutcome oc = expand_node(i, state, index, padded_q, params, out.stats);
            if (oc.pes_rejected) out.pes_rejected.push_back(u);
        }
        // the last round's working set is flushed below; ring contents never
        // reach the result list
        if (r + 1 == r_max || !state.end_round()) break;
    }
    // residual refill after the last round was never expanded; it still holds
    // exact distances and belongs in the answer
    for (const auto& e : state.working()) state.push_result({e.id, e.sq});

    size_t k = std::min<size_t>(params.K, state.result().size());
    out.results.assign(state.result().begin(), state.result().begin() + k);
    return out;
}

SearchResult search(const PagIndex& index, std::span<const float> q,
                    const SearchParams& params, TfbState& state) {
    const VectorSet& vs = index.vectors();
    if (q.size() != vs.dim()) throw std::invalid_argument("query dimension mismatch");
    state.qbuf.assign(vs.padded_dim(), 0.0f);
    std::memcpy(state.qbuf.data(), q.data(), q.size() * sizeof(float));
    if (vs.metric() == MetricKind::cosine) {
        float nrm = vec_norm(state.qbuf.data(), vs.padded_dim());
        if (nrm == 0.0f) throw std::invalid_argument("zero query under cosine metric");
        for (auto& x : state.qbuf) x /= nrm;
    }
    return search_padded(index, state.qbuf.data(), params, state);
}

SearchResult search(const PagIndex& index, std::span<const float> q,
                    const SearchParams& params) {
    TfbState state;
    return search(index, q, params, state);
}

}  // namespace pag

// Sequence layouts and attention masks for pre-training and fine-tuning.
#pragma once

#include <vector>

#include "moto/nn/transformer.hpp"

namespace moto {

enum class Role : std::uint8_t { text, vis, motion, action_query, pad };

inline int segment_index(Role r) { return int(r); }  // 5 segment embeddings

struct SequenceLayout {
    int text_len = 0, vis_len = 0;
    int k = 0;  // motion tokens per chunk
    int t = 0;  // transitions
    int n = 0;  // action queries per transition (0 = pre-training)
    bool include_motion = true;         // false for dm/scratch ablations
    std::vector<Role> roles;            // per sequence position
    std::vector<int> stream_index;      // index within the position's own positional stream
    std::vector<int> timestep;          // transition index; -1 for prompt positions

    int size() const { return int(roles.size()); }
    int motion_count() const { return include_motion ? k * t : 0; }

    std::vector<int> positions_with(Role r) const {
        std::vector<int> out;
        for (int p = 0; p < size(); ++p)
            if (roles[std::size_t(p)] == r) out.push_back(p);
        return out;
    }

    // Prompt text positions flagged padded get Role::pad (segment only; they
    // stay attendable, ordinary prompt positions in every mask rule).
    static SequenceLayout pretrain(int text_len, int vis_len, int k, int t,
                                   const std::vector<bool>* text_pad = nullptr) {
        return build(text_len, vis_len, k, t, 0, true, text_pad);
    }

    static SequenceLayout finetune(int text_len, int vis_len, int k, int t, int n,
                                   const std::vector<bool>* text_pad = nullptr) {
        if (n < 1) throw ModelError("finetune layout needs N >= 1");
        return build(text_len, vis_len, k, t, n, true, text_pad);
    }

    static SequenceLayout action_only(int text_len, int vis_len, int t, int n,
                                      const std::vector<bool>* text_pad = nullptr) {
        if (n < 1) throw ModelError("action_only layout needs N >= 1");
        return build(text_len, vis_len, 0, t, n, false, text_pad);
    }

private:
    static SequenceLayout build(int text_len, int vis_len, int k, int t, int n,
                                bool include_motion, const std::vector<bool>* text_pad) {
        if (t < 1) throw ModelError("layout needs at least one transition");
        if (include_motion && k < 1) throw ModelError("layout needs K >= 1");
        SequenceLayout lo;
        lo.text_len = text_len;
        lo.vis_len = vis_len;
        lo.k = include_motion ? k : 0;
        lo.t = t;
        lo.n = n;
        lo.include_motion = include_motion;
        for (int i = 0; i < text_len; ++i) {
            bool padded = text_pad && (*text_pad)[std::size_t(i)];
            lo.roles.push_back(padded ? Role::pad : Role::text);
            lo.stream_index.push_back(i);
            lo.timestep.push_back(-1);
        }
        for (int i = 0; i < vis_len; ++i) {
            lo.roles.push_back(Role::vis);
            lo.stream_index.push_back(i);
            lo.timestep.push_back(-1);
        }
        for (int tau = 0; tau < t; ++tau) {
            if (include_motion)
                for (int i = 0; i < k; ++i) {
                    lo.roles.push_back(Role::motion);
                    lo.stream_index.push_back(tau * k + i);
                    lo.timestep.push_back(tau);
                }
            for (int i = 0; i < n; ++i) {
                lo.roles.push_back(Role::action_query);
                lo.stream_index.push_back(tau * n + i);
                lo.timestep.push_back(tau);
            }
        }
        return lo;
    }
};

// Fine-tuning attention rules on top of causality (q may attend k iff k <= q):
//   rule A: motion rows never attend to action_query columns;
//   rule B: action queries attend causally (prompt, earlier chunks, themselves);
//   rule C: when motion_dropout, action_query rows are blocked from every
//           motion column. Prompt (text/vis/pad) positions stay untouched.
inline MaskMat build_finetune_mask(const SequenceLayout& layout, bool motion_dropout) {
    if (layout.n < 1)
        throw ModelError("build_finetune_mask needs N >= 1; use a causal mask for pre-training");
    int s = layout.size();
    MaskMat m(s, s);
    for (int q = 0; q < s; ++q)
        for (int kcol = 0; kcol < s; ++kcol) {
            bool ok = kcol <= q;
            Role rq = layout.roles[std::size_t(q)], rk = layout.roles[std::size_t(kcol)];
            if (rq == Role::motion && rk == Role::action_query) ok = false;
            if (motion_dropout && rq == Role::action_query && rk == Role::motion) ok = false;
            m(q, kcol) = ok ? 1 : 0;
        }
    return m;
}

}  // namespace moto

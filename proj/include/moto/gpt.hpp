// Moto-GPT: decoder-only transformer over [text | vis | motion (| action
// queries)] with per-role positional streams, segment embeddings, and a
// zero-initialized motion head (uniform logits at init).
#pragma once

#include "moto/config.hpp"
#include "moto/frozen.hpp"
#include "moto/layout.hpp"
#include "moto/nn/transformer.hpp"

namespace moto {

class MotoGpt {
public:
    MotoGpt(const ExperimentConfig& cfg, std::uint64_t param_seed)
        : dim_(cfg.gpt.hidden),
          v_(cfg.tokenizer.codebook_size),
          k_(cfg.tokenizer.num_queries),
          max_t_(cfg.gpt.max_transitions),
          n_(cfg.finetune.n_actions_per_transition),
          text_len_(cfg.frozen.max_prompt_len),
          feat_dim_(cfg.frozen.feature_dim) {
        vis_len_ = (cfg.frame.height / cfg.frame.patch) * (cfg.frame.width / cfg.frame.patch);
        Rng rng(param_seed);
        Rng r1 = rng.child(1);
        motion_embed_ = &store.add("gpt.motion_embed", v_ + 2, dim_);  // +BOS +PAD
        fill_normal(motion_embed_->value, r1, 0.02);
        Rng r2 = rng.child(2);
        text_proj_ = nn::Linear::create(store, "gpt.text_proj", feat_dim_, dim_, r2);
        vis_proj_ = nn::Linear::create(store, "gpt.vis_proj", feat_dim_, dim_, r2);
        Rng r3 = rng.child(3);
        action_query_ = &store.add("gpt.action_query", n_, dim_);
        fill_normal(action_query_->value, r3, 0.02);
        Rng r4 = rng.child(4);
        pos_text_ = &store.add("gpt.pos_text", text_len_, dim_);
        pos_vis_ = &store.add("gpt.pos_vis", vis_len_, dim_);
        pos_motion_ = &store.add("gpt.pos_motion", max_t_ * k_, dim_);
        pos_action_ = &store.add("gpt.pos_action", max_t_ * n_, dim_);
        segment_ = &store.add("gpt.segment", 5, dim_);
        for (nn::Param* p : {pos_text_, pos_vis_, pos_motion_, pos_action_, segment_})
            fill_normal(p->value, r4, 0.02);
        Rng r5 = rng.child(5);
        stack_ = nn::TransformerStack::create(store, "gpt.stack", cfg.gpt.layers, dim_,
                                              cfg.gpt.heads, r5);
        Rng r6 = rng.child(6);
        motion_head_ = nn::Linear::create(store, "gpt.motion_head", dim_, v_, r6);
        motion_head_.W->value.setZero();  // uniform logits until trained
        motion_head_.b->value.setZero();
    }

    static constexpr int kBosOffset = 0;  // BOS id = V + kBosOffset
    int bos_id() const { return v_; }
    int pad_id() const { return v_ + 1; }
    int dim() const { return dim_; }
    int vocab() const { return v_; }
    int chunk_k() const { return k_; }
    int max_transitions() const { return max_t_; }
    int n_queries() const { return n_; }
    int text_len() const { return text_len_; }
    int vis_len() const { return vis_len_; }

    struct Cache {
        Mat text_feat, vis_feat;  // raw frozen features (projection inputs)
        SequenceLayout layout;
        std::vector<int> motion_inputs;
        Mat x;
        nn::TransformerStack::Cache stackc;
        Mat h;  // S x dim hidden states
    };

    // motion_inputs: one token id per motion position (codes, BOS, or PAD).
    Mat forward(const TextFeatureSeq& text, const PatchFeatureMap& vis,
                const std::vector<int>& motion_inputs, const SequenceLayout& layout,
                const MaskMat& mask, Cache& c) const {
        if (text.features.rows() != text_len_ || text.features.cols() != feat_dim_)
            throw ModelError("gpt: text feature shape mismatch");
        if (vis.features.rows() != vis_len_ || vis.features.cols() != feat_dim_)
            throw ModelError("gpt: vis feature shape mismatch");
        if (int(motion_inputs.size()) != layout.motion_count())
            throw ModelError("gpt: motion_inputs length mismatch");
        if (layout.t > max_t_) throw ModelError("gpt: layout exceeds max transitions");
        if (layout.include_motion && layout.k != k_)
            throw ModelError("gpt: layout K mismatch");
        if (layout.n > 0 && layout.n != n_) throw ModelError("gpt: layout N mismatch");
        for (int id : motion_inputs)
            if (id < 0 || id > pad_id()) throw ModelError("gpt: motion input id out of range");

        c.text_feat = text.features;
        c.vis_feat = vis.features;
        c.layout = layout;
        c.motion_inputs = motion_inputs;

        int s = layout.size();
        Mat text_rows = text_proj_.forward(text.features);  // L_l x dim
        Mat vis_rows = vis_proj_.forward(vis.features);     // L_v x dim
        Mat x(s, dim_);
        int mi = 0;
        for (int p = 0; p < s; ++p) {
            Role r = layout.roles[std::size_t(p)];
            int si = layout.stream_index[std::size_t(p)];
            Mat::RowXpr row = x.row(p);
            switch (r) {
                case Role::text:
                case Role::pad:
                    row = text_rows.row(si) + pos_text_->value.row(si);
                    break;
                case Role::vis:
                    row = vis_rows.row(si) + pos_vis_->value.row(si);
                    break;
                case Role::motion:
                    row = motion_embed_->value.row(motion_inputs[std::size_t(mi)]) +
                          pos_motion_->value.row(si);
                    ++mi;
                    break;
                case Role::action_query:
                    row = action_query_->value.row(si % n_) + pos_action_->value.row(si);
                    break;
            }
            row += segment_->value.row(segment_index(r));
        }
        c.x = x;
        c.h = stack_.forward(x, mask, c.stackc);
        return c.h;
    }

    // Logits for every motion position, M x V (teacher-forced predictions).
    Mat motion_logits(const Mat& h, const SequenceLayout& layout) const {
        auto pos = layout.positions_with(Role::motion);
        Mat hm(Eigen::Index(pos.size()), dim_);
        for (std::size_t i = 0; i < pos.size(); ++i) hm.row(Eigen::Index(i)) = h.row(pos[i]);
        return motion_head_.forward(hm);
    }

    // Backprop: g_h is dL/d(hidden states); g_motion_logits (M x V, may be
    // empty) adds the motion-head path. Accumulates into the store.
    void backward(Mat g_h, const Mat& g_motion_logits, const Cache& c) {
        const SequenceLayout& layout = c.layout;
        if (g_motion_logits.size() > 0) {
            auto pos = layout.positions_with(Role::motion);
            Mat hm(Eigen::Index(pos.size()), dim_);
            for (std::size_t i = 0; i < pos.size(); ++i)
                hm.row(Eigen::Index(i)) = c.h.row(pos[i]);
            Mat g_hm = motion_head_.backward(hm, g_motion_logits);
            for (std::size_t i = 0; i < pos.size(); ++i)
                g_h.row(pos[i]) += g_hm.row(Eigen::Index(i));
        }
        Mat g_x = stack_.backward(g_h, c.stackc);

        Mat g_text = Mat::Zero(text_len_, dim_);
        Mat g_vis = Mat::Zero(vis_len_, dim_);
        int mi = 0;
        for (int p = 0; p < layout.size(); ++p) {
            Role r = layout.roles[std::size_t(p)];
            int si = layout.stream_index[std::size_t(p)];
            Mat::RowXpr g = g_x.row(p);
            switch (r) {
                case Role::text:
                case Role::pad:
                    g_text.row(si) += g;
                    pos_text_->grad.row(si) += g;
                    break;
                case Role::vis:
                    g_vis.row(si) += g;
                    pos_vis_->grad.row(si) += g;
                    break;
                case Role::motion:
                    motion_embed_->grad.row(c.motion_inputs[std::size_t(mi)]) += g;
                    pos_motion_->grad.row(si) += g;
                    ++mi;
                    break;
                case Role::action_query:
                    action_query_->grad.row(si % n_) += g;
                    pos_action_->grad.row(si) += g;
                    break;
            }
            segment_->grad.row(segment_index(r)) += g;
        }
        text_proj_.backward(c.text_feat, g_text);  // frozen features: input grads dropped
        vis_proj_.backward(c.vis_feat, g_vis);
    }

    const nn::Linear& motion_head() const { return motion_head_; }
    nn::Linear& motion_head() { return motion_head_; }

    nn::ParamStore store;

private:
    int dim_, v_, k_, max_t_, n_, text_len_, feat_dim_, vis_len_ = 0;
    nn::Param* motion_embed_ = nullptr;
    nn::Linear text_proj_, vis_proj_;
    nn::Param* action_query_ = nullptr;
    nn::Param* pos_text_ = nullptr;
    nn::Param* pos_vis_ = nullptr;
    nn::Param* pos_motion_ = nullptr;
    nn::Param* pos_action_ = nullptr;
    nn::Param* segment_ = nullptr;
    nn::TransformerStack stack_;
    nn::Linear motion_head_;
};

}  // namespace moto

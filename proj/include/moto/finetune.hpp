// Co-fine-tuning into an action policy: action queries, mask rules A-C,
// Smooth-L1 + BCE action losses (Eq. 2), the combined objective (Eq. 3),
// and placeholder / generate-first inference.
#pragma once

#include "moto/gpt_infer.hpp"

namespace moto {

inline double smooth_l1(double r, double delta) {
    double a = std::abs(r);
    return a <= delta ? 0.5 * r * r / delta : a - 0.5 * delta;
}
inline double smooth_l1_grad(double r, double delta) {
    return std::abs(r) <= delta ? r / delta : (r > 0 ? 1.0 : -1.0);
}

inline double bce_with_logit(double logit, double target) {
    // max(x,0) - x*t + log(1 + exp(-|x|)): stable for large |x|
    return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}
inline double bce_with_logit_grad(double logit, double target) {
    return 1.0 / (1.0 + std::exp(-logit)) - target;
}

struct ActionHead {
    nn::Linear fc1, fc2;  // dim -> hidden -> 4 (dx, dy, drot, grip logit)

    struct Cache {
        Mat q_in, h1, act, out;
    };

    static ActionHead create(nn::ParamStore& store, const std::string& prefix, int dim,
                             int hidden, Rng& rng) {
        ActionHead h;
        h.fc1 = nn::Linear::create(store, prefix + ".fc1", dim, hidden, rng);
        h.fc2 = nn::Linear::create(store, prefix + ".fc2", hidden, 4, rng);
        return h;
    }

    // q_states: Q x dim action-query hidden states -> Q x 4 raw outputs.
    Mat forward(const Mat& q_states, Cache& c) const {
        c.q_in = q_states;
        c.h1 = fc1.forward(q_states);
        c.act = nn::gelu(c.h1);
        c.out = fc2.forward(c.act);
        return c.out;
    }

    Mat backward(const Mat& g_out, const Cache& c) const {
        Mat g_act = fc2.backward(c.act, g_out);
        Mat g_h1 = nn::gelu_backward(c.h1, g_act);
        return fc1.backward(c.q_in, g_h1);
    }

    static ActionVector to_action(const Mat& raw_row) {
        ActionVector a;
        a.delta_pos[0] = std::tanh(raw_row(0, 0));
        a.delta_pos[1] = std::tanh(raw_row(0, 1));
        a.delta_rot = std::tanh(raw_row(0, 2));
        a.grip = raw_row(0, 3) >= 0.0 ? 1 : 0;  // probability 0.5 threshold
        return a;
    }
};

struct FinetuneLossReport {
    double l_motion = 0.0;
    double l_pos = 0.0, l_rot = 0.0, l_grip = 0.0;
    double l_action = 0.0;  // l_pos + l_rot + l_grip (Eq. 2)
    double l_total = 0.0;   // w_m * l_motion + w_a * l_action (Eq. 3, weights 1)
};

struct FinetunePlan {
    std::string mode;            // full | iml | dm | scratch
    bool include_motion = true;  // motion slots present in the layout
    bool motion_gradients = true;
};

inline FinetunePlan plan_for_mode(const std::string& mode) {
    if (mode == "full") return {mode, true, true};
    if (mode == "iml") return {mode, true, false};   // motion in input, loss detached
    if (mode == "dm") return {mode, false, false};   // motion removed entirely
    if (mode == "scratch") return {mode, false, false};  // dm layout, random init
    throw ConfigError("unknown ablation mode: " + mode);
}

struct FinetuneExample {
    Instruction instruction;
    VideoClip window;                   // L+1 frames, prompt = window frame 0
    std::vector<ActionVector> actions;  // N * L
};

// Random training window: length uniform in [1, min(max_t, T)], start uniform.
inline FinetuneExample sample_window(const Episode& ep, int n_per_transition, int max_t,
                                     Rng& rng) {
    int t_ep = ep.clip.transitions();
    int max_len = std::min(max_t, t_ep);
    int len = 1 + int(rng.index(std::size_t(max_len)));
    int start = int(rng.index(std::size_t(t_ep - len + 1)));
    FinetuneExample ex;
    ex.instruction = ep.instruction;
    ex.window.source_stride = ep.clip.source_stride;
    for (int f = start; f <= start + len; ++f)
        ex.window.frames.push_back(ep.clip.frames[std::size_t(f)]);
    for (int i = start * n_per_transition; i < (start + len) * n_per_transition; ++i)
        ex.actions.push_back(ep.actions[std::size_t(i)]);
    return ex;
}

namespace detail {

struct ActionLossTerms {
    double l_pos = 0.0, l_rot = 0.0, l_grip = 0.0;
};

// Per-slot losses averaged over Q rows; writes d(loss)/d(raw outputs).
inline ActionLossTerms action_losses(const Mat& raw, const std::vector<ActionVector>& targets,
                                     double delta, Mat* g_raw, double scale) {
    Eigen::Index q = raw.rows();
    if (std::size_t(q) != targets.size())
        throw ModelError("action loss: query/target count mismatch");
    ActionLossTerms terms;
    if (g_raw) *g_raw = Mat::Zero(q, 4);
    for (Eigen::Index i = 0; i < q; ++i) {
        const ActionVector& tgt = targets[std::size_t(i)];
        double t3[3] = {tgt.delta_pos[0], tgt.delta_pos[1], tgt.delta_rot};
        for (int j = 0; j < 3; ++j) {
            double pred = std::tanh(raw(i, j));
            double r = pred - t3[j];
            double l = smooth_l1(r, delta) / double(q);
            if (j < 2)
                terms.l_pos += l;
            else
                terms.l_rot += l;
            if (g_raw)
                (*g_raw)(i, j) = scale * smooth_l1_grad(r, delta) * (1.0 - pred * pred) /
                                 double(q);
        }
        terms.l_grip += bce_with_logit(raw(i, 3), tgt.grip) / double(q);
        if (g_raw)
            (*g_raw)(i, 3) = scale * bce_with_logit_grad(raw(i, 3), tgt.grip) / double(q);
    }
    return terms;
}

}  // namespace detail

// One fine-tuning element: forward, both losses, gradients per the plan.
// batch_scale multiplies every gradient (1/B). dropout pre-drawn by the caller.
inline FinetuneLossReport finetune_element(MotoGpt& gpt, ActionHead& head,
                                           const MotionTokenizer& tokenizer,
                                           const FinetuneExample& ex, const FinetunePlan& plan,
                                           bool motion_dropout, const ExperimentConfig& cfg,
                                           bool accumulate, double batch_scale) {
    const FrozenFeatureExtractor& frozen = tokenizer.frozen();
    int n = cfg.finetune.n_actions_per_transition;
    int len = ex.window.transitions();
    if (int(ex.actions.size()) != n * len)
        throw DataError("finetune element: missing action labels (need N*T)");

    TextFeatureSeq text = frozen.embed_instruction(ex.instruction);
    PatchFeatureMap vis = frozen.extract_patch_features(ex.window.frames[0]);

    SequenceLayout layout;
    std::vector<int> motion_inputs;
    std::vector<int> targets;
    if (plan.include_motion) {
        layout = SequenceLayout::finetune(gpt.text_len(), gpt.vis_len(), gpt.chunk_k(), len, n,
                                          &text.pad_mask);
        auto chunks = tokenizer.tokenize_clip(ex.window);
        for (const auto& ch : chunks)
            targets.insert(targets.end(), ch.codes.begin(), ch.codes.end());
        motion_inputs.push_back(gpt.bos_id());
        motion_inputs.insert(motion_inputs.end(), targets.begin(), targets.end() - 1);
    } else {
        layout = SequenceLayout::action_only(gpt.text_len(), gpt.vis_len(), len, n,
                                             &text.pad_mask);
        motion_dropout = false;
    }
    MaskMat mask = build_finetune_mask(layout, motion_dropout);

    MotoGpt::Cache c;
    Mat h = gpt.forward(text, vis, motion_inputs, layout, mask, c);

    FinetuneLossReport rep;
    Mat g_logits;  // stays empty unless motion gradients flow
    if (plan.include_motion) {
        Mat logits = gpt.motion_logits(h, layout);
        rep.l_motion = nn::softmax_cross_entropy(
            logits, targets, plan.motion_gradients && accumulate ? &g_logits : nullptr,
            batch_scale * cfg.finetune.motion_loss_weight);
    }

    auto q_pos = layout.positions_with(Role::action_query);
    Mat q_states(Eigen::Index(q_pos.size()), gpt.dim());
    for (std::size_t i = 0; i < q_pos.size(); ++i)
        q_states.row(Eigen::Index(i)) = h.row(q_pos[i]);
    ActionHead::Cache hc;
    Mat raw = head.forward(q_states, hc);
    Mat g_raw;
    auto terms = detail::action_losses(raw, ex.actions, cfg.finetune.smooth_l1_delta,
                                       accumulate ? &g_raw : nullptr,
                                       batch_scale * cfg.finetune.action_loss_weight);
    rep.l_pos = terms.l_pos;
    rep.l_rot = terms.l_rot;
    rep.l_grip = terms.l_grip;
    rep.l_action = rep.l_pos + rep.l_rot + rep.l_grip;
    rep.l_total = cfg.finetune.motion_loss_weight * rep.l_motion +
                  cfg.finetune.action_loss_weight * rep.l_action;

    if (accumulate) {
        Mat g_q = head.backward(g_raw, hc);
        Mat g_h = Mat::Zero(h.rows(), h.cols());
        for (std::size_t i = 0; i < q_pos.size(); ++i)
            g_h.row(q_pos[i]) += g_q.row(Eigen::Index(i));
        gpt.backward(std::move(g_h), g_logits, c);
    }
    return rep;
}

// Per-element Bernoulli motion dropout, batch-averaged losses, one AdamW step.
inline FinetuneLossReport finetune_step(MotoGpt& gpt, ActionHead& head,
                                        const MotionTokenizer& tokenizer,
                                        const std::vector<FinetuneExample>& batch,
                                        const FinetunePlan& plan, const ExperimentConfig& cfg,
                                        Rng& dropout_rng, nn::AdamW& opt) {
    if (batch.empty()) throw ModelError("finetune_step: empty batch");
    gpt.store.zero_grads();
    FinetuneLossReport mean;
    double scale = 1.0 / double(batch.size());
    for (const auto& ex : batch) {
        bool dropout =
            plan.include_motion && dropout_rng.bernoulli(cfg.finetune.motion_dropout_prob);
        FinetuneLossReport r =
            finetune_element(gpt, head, tokenizer, ex, plan, dropout, cfg, true, scale);
        mean.l_motion += scale * r.l_motion;
        mean.l_pos += scale * r.l_pos;
        mean.l_rot += scale * r.l_rot;
        mean.l_grip += scale * r.l_grip;
    }
    mean.l_action = mean.l_pos + mean.l_rot + mean.l_grip;
    mean.l_total = cfg.finetune.motion_loss_weight * mean.l_motion +
                   cfg.finetune.action_loss_weight * mean.l_action;
    if (!std::isfinite(mean.l_total)) throw ModelError("finetune_step: non-finite loss");
    opt.step();
    return mean;
}

enum class InferMode { placeholder, generate_first };

inline InferMode infer_mode_from_string(const std::string& s) {
    if (s == "placeholder") return InferMode::placeholder;
    if (s == "generate-first") return InferMode::generate_first;
    throw ConfigError("unknown inference mode: " + s);
}

// Raw N x 4 action-head outputs for one frame with explicit motion-slot
// contents and dropout flag (the equivalence tests poke this directly).
inline Mat action_outputs_raw(MotoGpt& gpt, ActionHead& head, const MotionTokenizer& tokenizer,
                              const Instruction& instruction, const Frame& current,
                              const std::vector<int>& motion_inputs, bool motion_dropout,
                              bool include_motion) {
    const FrozenFeatureExtractor& frozen = tokenizer.frozen();
    TextFeatureSeq text = frozen.embed_instruction(instruction);
    PatchFeatureMap vis = frozen.extract_patch_features(current);
    int n = gpt.n_queries();
    SequenceLayout layout =
        include_motion
            ? SequenceLayout::finetune(gpt.text_len(), gpt.vis_len(), gpt.chunk_k(), 1, n,
                                       &text.pad_mask)
            : SequenceLayout::action_only(gpt.text_len(), gpt.vis_len(), 1, n, &text.pad_mask);
    MaskMat mask = build_finetune_mask(layout, motion_dropout);
    MotoGpt::Cache c;
    Mat h = gpt.forward(text, vis, motion_inputs, layout, mask, c);
    auto q_pos = layout.positions_with(Role::action_query);
    Mat q_states(Eigen::Index(q_pos.size()), gpt.dim());
    for (std::size_t i = 0; i < q_pos.size(); ++i)
        q_states.row(Eigen::Index(i)) = h.row(q_pos[i]);
    ActionHead::Cache hc;
    return head.forward(q_states, hc);
}

// Placeholder: PAD tokens fill the current chunk's motion slots and rule C
// blocks them. Generate-first: decode the chunk greedily, then attend to it.
inline std::vector<ActionVector> infer_actions(MotoGpt& gpt, ActionHead& head,
                                               const MotionTokenizer& tokenizer,
                                               const Instruction& instruction,
                                               const Frame& current, InferMode mode,
                                               const FinetunePlan& plan) {
    Mat raw;
    if (!plan.include_motion) {
        raw = action_outputs_raw(gpt, head, tokenizer, instruction, current, {}, false, false);
    } else if (mode == InferMode::placeholder) {
        std::vector<int> inputs(std::size_t(gpt.chunk_k()), gpt.pad_id());
        raw = action_outputs_raw(gpt, head, tokenizer, instruction, current, inputs, true,
                                 true);
    } else {
        auto chunks = generate_chunks(gpt, tokenizer, instruction, current, 1,
                                      Sampling::greedy());
        std::vector<int> inputs;
        inputs.push_back(gpt.bos_id());
        for (int i = 0; i + 1 < gpt.chunk_k(); ++i)
            inputs.push_back(chunks[0].codes[std::size_t(i)]);
        raw = action_outputs_raw(gpt, head, tokenizer, instruction, current, inputs, false,
                                 true);
    }
    std::vector<ActionVector> out;
    for (Eigen::Index i = 0; i < raw.rows(); ++i)
        out.push_back(ActionHead::to_action(Mat(raw.row(i))));
    return out;
}

}  // namespace moto

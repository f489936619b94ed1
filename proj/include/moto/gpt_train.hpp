// Pre-training sequence assembly, the next-motion-token objective, and
// teacher-forced trajectory scoring.
#pragma once

#include "moto/gpt.hpp"
#include "moto/nn/adamw.hpp"
#include "moto/tokenizer.hpp"

namespace moto {

struct PretrainSequence {
    TextFeatureSeq text;
    PatchFeatureMap vis;
    SequenceLayout layout;
    std::vector<int> motion_inputs;  // BOS + shifted targets
    std::vector<int> targets;        // M ground-truth codes
    MaskMat mask;                    // strict causal
};

inline PretrainSequence build_pretrain_sequence(const Instruction& instruction,
                                                const VideoClip& clip,
                                                const MotionTokenizer& tokenizer,
                                                const MotoGpt& gpt) {
    int t = clip.transitions();
    if (t < 1) throw ModelError("pretrain sequence needs at least one transition");
    if (t > gpt.max_transitions())
        throw ModelError("clip has " + std::to_string(t) +
                         " transitions, exceeding gpt.max_transitions");
    PretrainSequence seq;
    seq.text = tokenizer.frozen().embed_instruction(instruction);
    seq.vis = tokenizer.frozen().extract_patch_features(clip.frames[0]);
    auto chunks = tokenizer.tokenize_clip(clip);
    for (const auto& ch : chunks)
        seq.targets.insert(seq.targets.end(), ch.codes.begin(), ch.codes.end());
    seq.motion_inputs.push_back(gpt.bos_id());
    seq.motion_inputs.insert(seq.motion_inputs.end(), seq.targets.begin(),
                             seq.targets.end() - 1);
    seq.layout = SequenceLayout::pretrain(gpt.text_len(), gpt.vis_len(), gpt.chunk_k(), t,
                                          &seq.text.pad_mask);
    seq.mask = nn::causal_mask(seq.layout.size());
    return seq;
}

// Forward + CE over motion positions; backprops with weight 1/batch_size when
// accumulate is true. Returns the per-token mean NLL of this sequence.
inline double gpt_sequence_loss(MotoGpt& gpt, const PretrainSequence& seq, bool accumulate,
                                double batch_scale) {
    MotoGpt::Cache c;
    Mat h = gpt.forward(seq.text, seq.vis, seq.motion_inputs, seq.layout, seq.mask, c);
    Mat logits = gpt.motion_logits(h, seq.layout);
    Mat g_logits;
    double nll = nn::softmax_cross_entropy(logits, seq.targets,
                                           accumulate ? &g_logits : nullptr, batch_scale);
    if (accumulate) {
        Mat g_h = Mat::Zero(h.rows(), h.cols());
        gpt.backward(std::move(g_h), g_logits, c);
    }
    return nll;
}

// L_motion = -(1/(M*B)) sum log P(m_i | l, v, m_<i). Returns the batch mean.
inline double pretrain_step(MotoGpt& gpt, const std::vector<PretrainSequence>& batch,
                            nn::AdamW& opt) {
    if (batch.empty()) throw ModelError("pretrain_step: empty batch");
    gpt.store.zero_grads();
    double loss = 0.0;
    double scale = 1.0 / double(batch.size());
    for (const auto& seq : batch) loss += scale * gpt_sequence_loss(gpt, seq, true, scale);
    if (!std::isfinite(loss)) throw ModelError("pretrain_step: non-finite loss");
    opt.step();
    return loss;
}

struct TrajectoryScore {
    std::vector<double> per_token_logls;  // length M
    std::vector<double> per_step_logls;   // length T, mean over each chunk's K tokens
    double total_logl = 0.0;              // sum of per-token logls
};

inline TrajectoryScore score_trajectory(MotoGpt& gpt, const MotionTokenizer& tokenizer,
                                        const Instruction& instruction, const VideoClip& clip) {
    PretrainSequence seq = build_pretrain_sequence(instruction, clip, tokenizer, gpt);
    MotoGpt::Cache c;
    Mat h = gpt.forward(seq.text, seq.vis, seq.motion_inputs, seq.layout, seq.mask, c);
    Mat logits = gpt.motion_logits(h, seq.layout);
    TrajectoryScore score;
    int k = gpt.chunk_k();
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        double lse = nn::stable_log_sum_exp(logits.row(i));
        score.per_token_logls.push_back(logits(i, seq.targets[std::size_t(i)]) - lse);
    }
    for (std::size_t start = 0; start + std::size_t(k) <= score.per_token_logls.size();
         start += std::size_t(k)) {
        double s = 0;
        for (int j = 0; j < k; ++j) s += score.per_token_logls[start + std::size_t(j)];
        score.per_step_logls.push_back(s / double(k));
    }
    for (double v : score.per_token_logls) score.total_logl += v;
    return score;
}

}  // namespace moto

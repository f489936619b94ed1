// Autoregressive chunk generation and video rollout.
#pragma once

#include "moto/gpt_train.hpp"

namespace moto {

struct Sampling {
    enum class Mode { greedy, temperature };
    Mode mode = Mode::greedy;
    double temperature = 1.0;
    int top_k = 0;  // 0 = no filtering

    static Sampling greedy() { return {}; }
    static Sampling with_temperature(double tau, int top_k = 0) {
        if (tau <= 0) throw ConfigError("sampling temperature must be > 0");
        return {Mode::temperature, tau, top_k};
    }
};

inline int sample_from_logits(const Mat& row, const Sampling& s, Rng* rng) {
    if (s.mode == Sampling::Mode::greedy) {
        int best = 0;
        for (Eigen::Index j = 1; j < row.cols(); ++j)
            if (row(0, j) > row(0, best)) best = int(j);  // ties keep lowest index
        return best;
    }
    if (!rng) throw ModelError("temperature sampling needs an rng");
    Mat scaled = row / s.temperature;
    if (s.top_k > 0 && s.top_k < int(row.cols())) {
        std::vector<double> vals(scaled.data(), scaled.data() + scaled.cols());
        std::vector<double> sorted = vals;
        std::nth_element(sorted.begin(), sorted.end() - s.top_k, sorted.end());
        double cutoff = sorted[sorted.size() - std::size_t(s.top_k)];
        // keep the top_k largest; on ties at the cutoff keep lowest indices
        int kept = 0;
        for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
            if (scaled(0, j) > cutoff || (scaled(0, j) == cutoff && kept < s.top_k))
                ++kept;
            else
                scaled(0, j) = -std::numeric_limits<double>::infinity();
        }
    }
    double lse = nn::stable_log_sum_exp(scaled);
    double u = rng->uniform();
    double acc = 0.0;
    for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
        acc += std::exp(scaled(0, j) - lse);
        if (u < acc) return int(j);
    }
    return int(scaled.cols()) - 1;
}

// Greedy is deterministic; PAD fills the not-yet-generated slots (causally
// invisible to the position being decoded).
inline std::vector<MotionTokenChunk> generate_chunks(MotoGpt& gpt,
                                                     const MotionTokenizer& tokenizer,
                                                     const Instruction& instruction,
                                                     const Frame& initial_frame, int t,
                                                     const Sampling& sampling,
                                                     Rng* rng = nullptr) {
    if (t < 1 || t > gpt.max_transitions())
        throw ModelError("generate_chunks: t out of range");
    const FrozenFeatureExtractor& frozen = tokenizer.frozen();
    TextFeatureSeq text = frozen.embed_instruction(instruction);
    PatchFeatureMap vis = frozen.extract_patch_features(initial_frame);
    SequenceLayout layout =
        SequenceLayout::pretrain(gpt.text_len(), gpt.vis_len(), gpt.chunk_k(), t,
                                 &text.pad_mask);
    MaskMat mask = nn::causal_mask(layout.size());
    int m = gpt.chunk_k() * t;
    std::vector<int> inputs(std::size_t(m), gpt.pad_id());
    inputs[0] = gpt.bos_id();
    std::vector<int> codes;
    auto motion_positions = layout.positions_with(Role::motion);
    for (int i = 0; i < m; ++i) {
        MotoGpt::Cache c;
        Mat h = gpt.forward(text, vis, inputs, layout, mask, c);
        Mat logits = gpt.motion_head().forward(Mat(h.row(motion_positions[std::size_t(i)])));
        int code = sample_from_logits(logits, sampling, rng);
        codes.push_back(code);
        if (i + 1 < m) inputs[std::size_t(i) + 1] = code;
    }
    std::vector<MotionTokenChunk> chunks;
    for (int tau = 0; tau < t; ++tau) {
        MotionTokenChunk ch;
        for (int j = 0; j < gpt.chunk_k(); ++j)
            ch.codes.push_back(codes[std::size_t(tau * gpt.chunk_k() + j)]);
        chunks.push_back(ch);
    }
    return chunks;
}

// Generate chunks from the initial frame, then decode frames iteratively,
// feeding each decoded frame back as the next conditioning frame.
inline VideoClip rollout_video(MotoGpt& gpt, const MotionTokenizer& tokenizer,
                               const Instruction& instruction, const Frame& initial_frame,
                               int t, const Sampling& sampling, Rng* rng = nullptr) {
    auto chunks = generate_chunks(gpt, tokenizer, instruction, initial_frame, t, sampling, rng);
    VideoClip clip;
    clip.source_stride = 1;
    clip.frames.push_back(initial_frame);
    for (const auto& ch : chunks) {
        Frame next = tokenizer.decode_next_frame(clip.frames.back(),
                                                 tokenizer.codes_to_embeddings(ch));
        clip.frames.push_back(next);
    }
    return clip;
}

}  // namespace moto

// Training loops shared by the CLI and the acceptance suite: tokenizer
// optimization, motion-token pre-training, and policy fine-tuning. Each loop
// is a deterministic function of (model init, dataset, train config, seed).
#pragma once

#include "moto/dataset.hpp"
#include "moto/finetune.hpp"
#include "moto/gpt_train.hpp"
#include "moto/tokenizer.hpp"

namespace moto {

inline nn::AdamWConfig adamw_from(const TrainConfig& tc) {
    nn::AdamWConfig a;
    a.lr = tc.lr;
    a.weight_decay = tc.weight_decay;
    a.warmup_steps = tc.warmup_steps;
    a.total_steps = tc.steps;
    a.min_lr_frac = tc.min_lr_frac;
    a.grad_clip = tc.grad_clip;
    return a;
}

using StepLogger = std::function<void(const nlohmann::json&)>;

// --- motion tokenizer ------------------------------------------------------

struct TransitionRef {
    const Episode* ep = nullptr;
    int t = 0;
};

inline std::vector<TransitionRef> collect_transitions(const std::vector<Episode>& episodes) {
    std::vector<TransitionRef> out;
    for (const auto& ep : episodes)
        for (int t = 0; t < ep.clip.transitions(); ++t) out.push_back({&ep, t});
    return out;
}

inline TokenizerLossReport train_tokenizer_loop(MotionTokenizer& model,
                                                const std::vector<Episode>& episodes,
                                                const TrainConfig& tc, std::uint64_t data_seed,
                                                const StepLogger& log = {}) {
    auto trans = collect_transitions(episodes);
    if (trans.empty()) throw DataError("train_tokenizer: no frame pairs");
    nn::AdamW opt(model.store, adamw_from(tc));
    Rng rng(data_seed);
    TokenizerLossReport mean;
    for (int step = 0; step < tc.steps; ++step) {
        model.store.zero_grads();
        mean = {};
        double scale = 1.0 / double(tc.batch);
        for (int b = 0; b < tc.batch; ++b) {
            const auto& tr = trans[std::size_t(rng.index(int(trans.size())))];
            const auto& frames = tr.ep->clip.frames;
            TokenizerLossReport r = model.pair_forward_backward(
                frames[std::size_t(tr.t)], frames[std::size_t(tr.t) + 1], scale, false);
            mean.recon_mse += scale * r.recon_mse;
            mean.vq_loss += scale * r.vq_loss;
            mean.commit_loss += scale * r.commit_loss;
            mean.total += scale * r.total;
        }
        if (!std::isfinite(mean.total)) throw ModelError("train_tokenizer: non-finite loss");
        double gnorm = opt.step();
        if (log)
            log({{"step", step},
                 {"loss", mean.total},
                 {"recon_mse", mean.recon_mse},
                 {"vq_loss", mean.vq_loss},
                 {"commit_loss", mean.commit_loss},
                 {"lr", opt.lr_at(step)},
                 {"grad_norm", gnorm}});
    }
    return mean;
}

// Usage/perplexity measured over every transition of `episodes`.
inline CodebookStats measure_codebook_usage(MotionTokenizer& model,
                                            const std::vector<Episode>& episodes) {
    model.quantizer.reset_usage();
    for (const auto& ep : episodes)
        for (int t = 0; t < ep.clip.transitions(); ++t) {
            Mat z = model.encode_motion(ep.clip.frames[std::size_t(t)],
                                        ep.clip.frames[std::size_t(t) + 1]);
            model.quantizer.quantize_tracked(z);
        }
    return codebook_stats_from_counts(model.quantizer.usage_counts);
}

// --- motion-token pre-training --------------------------------------------

// Clips are tokenized once up front; the GPT then trains on fixed sequences.
inline std::vector<PretrainSequence> build_pretrain_corpus(const MotionTokenizer& tokenizer,
                                                           const MotoGpt& gpt,
                                                           const std::vector<Episode>& episodes) {
    std::vector<PretrainSequence> out;
    out.reserve(episodes.size());
    for (const auto& ep : episodes)
        out.push_back(build_pretrain_sequence(ep.instruction, ep.clip, tokenizer, gpt));
    return out;
}

inline double pretrain_loop(MotoGpt& gpt, const std::vector<PretrainSequence>& corpus,
                            const TrainConfig& tc, std::uint64_t data_seed,
                            const StepLogger& log = {}) {
    if (corpus.empty()) throw DataError("pretrain: empty corpus");
    nn::AdamW opt(gpt.store, adamw_from(tc));
    Rng rng(data_seed);
    double loss = 0.0;
    long long tokens_seen = 0;
    for (int step = 0; step < tc.steps; ++step) {
        std::vector<PretrainSequence> batch;
        for (int b = 0; b < tc.batch; ++b) {
            const auto& seq = corpus[std::size_t(rng.index(int(corpus.size())))];
            batch.push_back(seq);
            tokens_seen += static_cast<long long>(seq.targets.size());
        }
        loss = pretrain_step(gpt, batch, opt);
        if (log)
            log({{"step", step},
                 {"loss", loss},
                 {"lr", opt.lr_at(step)},
                 {"tokens_seen", tokens_seen}});
    }
    return loss;
}

// --- policy fine-tuning ----------------------------------------------------

inline FinetuneLossReport finetune_loop(MotoGpt& gpt, ActionHead& head,
                                        const MotionTokenizer& tokenizer,
                                        const std::vector<Episode>& episodes,
                                        const FinetunePlan& plan, const ExperimentConfig& cfg,
                                        const TrainConfig& tc, std::uint64_t data_seed,
                                        const StepLogger& log = {}) {
    if (episodes.empty()) throw DataError("finetune: empty dataset");
    for (const auto& ep : episodes)
        if (ep.actions.empty()) throw DataError("finetune: episode lacks action labels");
    nn::AdamW opt(gpt.store, adamw_from(tc));
    Rng rng(data_seed);
    Rng window_rng = rng.child(1), dropout_rng = rng.child(2);
    FinetuneLossReport rep;
    for (int step = 0; step < tc.steps; ++step) {
        std::vector<FinetuneExample> batch;
        for (int b = 0; b < tc.batch; ++b) {
            const auto& ep = episodes[std::size_t(window_rng.index(int(episodes.size())))];
            batch.push_back(sample_window(ep, cfg.finetune.n_actions_per_transition,
                                          gpt.max_transitions(), window_rng));
        }
        rep = finetune_step(gpt, head, tokenizer, batch, plan, cfg, dropout_rng, opt);
        if (log)
            log({{"step", step},
                 {"loss", rep.l_total},
                 {"l_motion", rep.l_motion},
                 {"l_pos", rep.l_pos},
                 {"l_rot", rep.l_rot},
                 {"l_grip", rep.l_grip},
                 {"lr", opt.lr_at(step)}});
    }
    return rep;
}

}  // namespace moto

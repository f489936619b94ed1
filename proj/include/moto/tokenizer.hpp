// Latent Motion Tokenizer: M-Former encoder over [queries | prev | next]
// patch features, VQ bottleneck, and a frame decoder that reconstructs the
// next frame from the previous frame plus the quantized motion embedding.
#pragma once

#include "moto/config.hpp"
#include "moto/frozen.hpp"
#include "moto/nn/transformer.hpp"
#include "moto/quantizer.hpp"

namespace moto {

struct MFormer {
    int k = 0, dim = 0, d_code = 0, patches = 0;
    nn::Param* queries = nullptr;    // K x D
    nn::Param* slot_prev = nullptr;  // 1 x D, added to every prev-frame row
    nn::Param* slot_next = nullptr;  // 1 x D, breaks prev/next permutation symmetry
    nn::TransformerStack stack;
    nn::Linear out_proj;  // D -> d_code

    struct Cache {
        Mat x;
        nn::TransformerStack::Cache stackc;
        Mat h_top;  // first K rows of the stack output
    };

    static MFormer create(nn::ParamStore& store, const std::string& prefix, int k, int dim,
                          int d_code, int layers, int heads, int patches, Rng& rng) {
        MFormer m;
        m.k = k;
        m.dim = dim;
        m.d_code = d_code;
        m.patches = patches;
        m.queries = &store.add(prefix + ".queries", k, dim);
        fill_normal(m.queries->value, rng, 0.02);
        m.slot_prev = &store.add(prefix + ".slot_prev", 1, dim);
        fill_normal(m.slot_prev->value, rng, 0.02);
        m.slot_next = &store.add(prefix + ".slot_next", 1, dim);
        fill_normal(m.slot_next->value, rng, 0.02);
        m.stack = nn::TransformerStack::create(store, prefix + ".stack", layers, dim, heads, rng);
        m.out_proj = nn::Linear::create(store, prefix + ".out_proj", dim, d_code, rng);
        return m;
    }

    // prev_feat/next_feat: P x D frozen patch features (no gradient receivers).
    Mat forward(const Mat& prev_feat, const Mat& next_feat, Cache& c) const {
        if (prev_feat.rows() != patches || next_feat.rows() != patches ||
            prev_feat.cols() != dim || next_feat.cols() != dim)
            throw ModelError("mformer: patch feature shape mismatch");
        Mat x(k + 2 * patches, dim);
        x.topRows(k) = queries->value;
        x.middleRows(k, patches) = prev_feat.rowwise() + slot_prev->value.row(0);
        x.bottomRows(patches) = next_feat.rowwise() + slot_next->value.row(0);
        c.x = x;
        MaskMat mask = nn::full_mask(x.rows());
        Mat h = stack.forward(x, mask, c.stackc);
        c.h_top = h.topRows(k);
        return out_proj.forward(c.h_top);
    }

    void backward(const Mat& g_z, const Cache& c) const {
        Mat g_h = Mat::Zero(k + 2 * patches, dim);
        g_h.topRows(k) = out_proj.backward(c.h_top, g_z);
        Mat g_x = stack.backward(g_h, c.stackc);
        queries->grad += g_x.topRows(k);
        slot_prev->grad.row(0) += g_x.middleRows(k, patches).colwise().sum();
        slot_next->grad.row(0) += g_x.bottomRows(patches).colwise().sum();
        // frozen patch features: gradients intentionally dropped
    }
};

struct FrameDecoder {
    int dim = 0, patch_dim = 0, patches = 0, cond_in = 0;
    nn::Linear patch_embed;            // patch_dim -> D (trainable, unlike the frozen encoder)
    nn::Param* pos = nullptr;          // P x D learned positions
    nn::Linear cond_fc1, cond_fc2;     // K*d_code -> D -> D condition MLP
    nn::TransformerStack stack;
    nn::Linear head;                   // D -> patch_dim pixel logits

    struct Cache {
        Mat patches_in;
        Mat cond_flat, cond_h1, cond_act, cond_vec;
        Mat x;
        nn::TransformerStack::Cache stackc;
        Mat h;
        Mat pred;  // post-sigmoid
    };

    static FrameDecoder create(nn::ParamStore& store, const std::string& prefix, int dim,
                               int patch_dim, int patches, int cond_in, int layers, int heads,
                               Rng& rng) {
        FrameDecoder d;
        d.dim = dim;
        d.patch_dim = patch_dim;
        d.patches = patches;
        d.cond_in = cond_in;
        d.patch_embed = nn::Linear::create(store, prefix + ".patch_embed", patch_dim, dim, rng);
        d.pos = &store.add(prefix + ".pos", patches, dim);
        fill_normal(d.pos->value, rng, 0.02);
        d.cond_fc1 = nn::Linear::create(store, prefix + ".cond_fc1", cond_in, dim, rng);
        d.cond_fc2 = nn::Linear::create(store, prefix + ".cond_fc2", dim, dim, rng);
        d.stack = nn::TransformerStack::create(store, prefix + ".stack", layers, dim, heads, rng);
        d.head = nn::Linear::create(store, prefix + ".head", dim, patch_dim, rng);
        return d;
    }

    // prev_patches: P x patch_dim raw pixels; zq_flat: 1 x K*d_code.
    // Returns P x patch_dim predictions in (0,1).
    Mat forward(const Mat& prev_patches, const Mat& zq_flat, Cache& c) const {
        if (prev_patches.rows() != patches || prev_patches.cols() != patch_dim)
            throw ModelError("decoder: patch shape mismatch");
        if (zq_flat.rows() != 1 || zq_flat.cols() != cond_in)
            throw ModelError("decoder: condition shape mismatch");
        c.patches_in = prev_patches;
        c.cond_flat = zq_flat;
        c.cond_h1 = cond_fc1.forward(zq_flat);
        c.cond_act = nn::gelu(c.cond_h1);
        c.cond_vec = cond_fc2.forward(c.cond_act);  // 1 x D
        Mat x = patch_embed.forward(prev_patches) + pos->value;
        x.rowwise() += c.cond_vec.row(0);
        c.x = x;
        MaskMat mask = nn::full_mask(patches);
        c.h = stack.forward(x, mask, c.stackc);
        Mat logits = head.forward(c.h);
        c.pred = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
        return c.pred;
    }

    // Returns gradient w.r.t. zq_flat (1 x K*d_code).
    Mat backward(const Mat& g_pred, const Cache& c) const {
        Mat g_logits =
            (g_pred.array() * c.pred.array() * (1.0 - c.pred.array())).matrix();
        Mat g_h = head.backward(c.h, g_logits);
        Mat g_x = stack.backward(g_h, c.stackc);
        pos->grad += g_x;
        patch_embed.backward(c.patches_in, g_x);  // input grads are pixels; dropped
        Mat g_cond = g_x.colwise().sum();         // 1 x D, broadcast transpose
        Mat g_act = cond_fc2.backward(c.cond_act, g_cond);
        Mat g_h1 = nn::gelu_backward(c.cond_h1, g_act);
        return cond_fc1.backward(c.cond_flat, g_h1);
    }
};

struct TokenizerLossReport {
    double recon_mse = 0.0;
    double vq_loss = 0.0;
    double commit_loss = 0.0;
    double total = 0.0;  // recon + vq + beta * commit
};

class MotionTokenizer {
public:
    MotionTokenizer(const ExperimentConfig& cfg, const FrozenFeatureExtractor& frozen,
                    std::uint64_t param_seed)
        : frozen_(&frozen), beta_(cfg.tokenizer.beta), patch_(cfg.frame.patch) {
        if (cfg.tokenizer.hidden != cfg.frozen.feature_dim)
            throw ConfigError(
                "tokenizer.hidden must equal frozen.feature_dim (self-attention over "
                "concatenated features)");
        k_ = cfg.tokenizer.num_queries;
        d_code_ = cfg.tokenizer.code_dim;
        patch_dim_ = cfg.frame.patch * cfg.frame.patch * cfg.frame.channels;
        Rng rng(param_seed);
        Rng mf_rng = rng.child(1), q_rng = rng.child(2), dec_rng = rng.child(3);
        mformer = MFormer::create(store, "mformer", k_, cfg.tokenizer.hidden, d_code_,
                                  cfg.tokenizer.mformer_layers, cfg.tokenizer.heads,
                                  frozen.num_patches(), mf_rng);
        quantizer = VectorQuantizer::create(store, "quantizer.codebook",
                                            cfg.tokenizer.codebook_size, d_code_, q_rng);
        decoder = FrameDecoder::create(store, "decoder", cfg.tokenizer.hidden, patch_dim_,
                                       frozen.num_patches(), k_ * d_code_,
                                       cfg.tokenizer.decoder_layers, cfg.tokenizer.heads,
                                       dec_rng);
    }

    int num_queries() const { return k_; }
    int code_dim() const { return d_code_; }
    int vocab() const { return quantizer.vocab(); }
    double beta() const { return beta_; }
    const FrozenFeatureExtractor& frozen() const { return *frozen_; }

    // K x d_code continuous motion features (pre-quantization).
    Mat encode_motion(const Frame& prev, const Frame& next) const {
        if (!prev.same_dims(next)) throw ModelError("encode_motion: frame dims differ");
        MFormer::Cache c;
        return mformer.forward(frozen_->extract_patch_features(prev).features,
                               frozen_->extract_patch_features(next).features, c);
    }

    Frame decode_next_frame(const Frame& prev, const Mat& zq) const {
        if (zq.rows() != k_ || zq.cols() != d_code_)
            throw ModelError("decode_next_frame: chunk embedding shape mismatch");
        FrameDecoder::Cache c;
        Mat flat = flatten_rows(zq);
        Mat pred = decoder.forward(patchify(prev, patch_), flat, c);
        return unpatchify(pred, prev.height, prev.width, prev.channels, patch_);
    }

    std::vector<MotionTokenChunk> tokenize_clip(const VideoClip& clip) const {
        clip.validate();
        std::vector<MotionTokenChunk> out;
        for (int t = 0; t + 1 < int(clip.frames.size()); ++t) {
            Mat z = encode_motion(clip.frames[std::size_t(t)], clip.frames[std::size_t(t) + 1]);
            out.push_back(quantizer.quantize(z).chunk);
        }
        return out;
    }

    Mat codes_to_embeddings(const MotionTokenChunk& chunk) const {
        chunk.validate(k_, vocab());
        Mat out(k_, d_code_);
        for (int i = 0; i < k_; ++i)
            out.row(i) = quantizer.codebook->value.row(chunk.codes[std::size_t(i)]);
        return out;
    }

    static Mat flatten_rows(const Mat& m) {  // K x d -> 1 x K*d, row-major
        Mat flat(1, m.rows() * m.cols());
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            flat.block(0, i * m.cols(), 1, m.cols()) = m.row(i);
        return flat;
    }
    static Mat unflatten_rows(const Mat& flat, Eigen::Index rows, Eigen::Index cols) {
        Mat m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            m.row(i) = flat.block(0, i * cols, 1, cols);
        return m;
    }

    // One pair's forward+backward. Gradients accumulate into store with weight
    // loss_scale (callers average over a batch by passing 1/batch). Exposes the
    // straight-through pair (g_z from recon path == g_zq) when requested.
    TokenizerLossReport pair_forward_backward(const Frame& prev, const Frame& next,
                                              double loss_scale, bool track_usage,
                                              Mat* out_g_z_recon = nullptr,
                                              Mat* out_g_zq = nullptr) {
        MFormer::Cache mc;
        Mat z = mformer.forward(frozen_->extract_patch_features(prev).features,
                                frozen_->extract_patch_features(next).features, mc);
        QuantizeResult q = track_usage ? quantizer.quantize_tracked(z) : quantizer.quantize(z);
        FrameDecoder::Cache dc;
        Mat target = patchify(next, patch_);
        Mat pred = decoder.forward(patchify(prev, patch_), flatten_rows(q.z_q), dc);
        double denom = double(pred.rows()) * double(pred.cols());
        TokenizerLossReport rep;
        rep.recon_mse = (pred - target).squaredNorm() / denom;
        rep.vq_loss = q.vq_loss;
        rep.commit_loss = q.commit_loss;
        rep.total = rep.recon_mse + rep.vq_loss + beta_ * rep.commit_loss;

        Mat g_pred = loss_scale * 2.0 / denom * (pred - target);
        Mat g_zq_flat = decoder.backward(g_pred, dc);
        Mat g_zq = unflatten_rows(g_zq_flat, k_, d_code_);
        Mat g_z = quantizer.backward(z, q, g_zq, beta_, loss_scale);
        mformer.backward(g_z, mc);
        if (out_g_zq) *out_g_zq = g_zq;
        if (out_g_z_recon) *out_g_z_recon = g_zq;  // straight-through: identical array
        return rep;
    }

    nn::ParamStore store;
    MFormer mformer;
    VectorQuantizer quantizer;
    FrameDecoder decoder;

private:
    const FrozenFeatureExtractor* frozen_;
    double beta_;
    int k_ = 0, d_code_ = 0, patch_ = 0, patch_dim_ = 0;
};

}  // namespace moto

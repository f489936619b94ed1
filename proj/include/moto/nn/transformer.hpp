// Pre-LN transformer block and a simple stack with a final layernorm.
#pragma once

#include <vector>

#include "moto/nn/attention.hpp"

namespace moto::nn {

struct TransformerBlock {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    Linear fc1, fc2;  // MLP: dim -> 4*dim -> dim

    struct Cache {
        Mat x_in;
        LayerNorm::Cache ln1c, ln2c;
        Mat ln1_out, ln2_out;
        MultiHeadAttention::Cache attnc;
        Mat mid;       // x + attn
        Mat fc1_out;   // pre-GELU
        Mat act;       // post-GELU
    };

    static TransformerBlock create(ParamStore& store, const std::string& prefix, int dim,
                                   int heads, Rng& rng) {
        TransformerBlock b;
        b.ln1 = LayerNorm::create(store, prefix + ".ln1", dim);
        b.ln2 = LayerNorm::create(store, prefix + ".ln2", dim);
        b.attn = MultiHeadAttention::create(store, prefix + ".attn", dim, heads, rng);
        b.fc1 = Linear::create(store, prefix + ".mlp.fc1", dim, 4 * dim, rng);
        b.fc2 = Linear::create(store, prefix + ".mlp.fc2", 4 * dim, dim, rng);
        return b;
    }

    Mat forward(const Mat& x, const MaskMat& mask, Cache& c) const {
        c.x_in = x;
        c.ln1_out = ln1.forward(x, c.ln1c);
        Mat mid = x + attn.forward(c.ln1_out, mask, c.attnc);
        c.mid = mid;
        c.ln2_out = ln2.forward(mid, c.ln2c);
        c.fc1_out = fc1.forward(c.ln2_out);
        c.act = gelu(c.fc1_out);
        return mid + fc2.forward(c.act);
    }

    Mat backward(const Mat& gy, const Cache& c) const {
        Mat gact = fc2.backward(c.act, gy);
        Mat gfc1 = gelu_backward(c.fc1_out, gact);
        Mat gln2 = fc1.backward(c.ln2_out, gfc1);
        Mat gmid = gy + ln2.backward(gln2, c.ln2c);
        Mat gattn = attn.backward(gmid, c.attnc);
        return gmid + ln1.backward(gattn, c.ln1c);
    }
};

// N blocks followed by a final layernorm.
struct TransformerStack {
    std::vector<TransformerBlock> blocks;
    LayerNorm final_ln;

    struct Cache {
        std::vector<TransformerBlock::Cache> blockc;
        LayerNorm::Cache finalc;
    };

    static TransformerStack create(ParamStore& store, const std::string& prefix, int layers,
                                   int dim, int heads, Rng& rng) {
        TransformerStack s;
        for (int i = 0; i < layers; ++i)
            s.blocks.push_back(
                TransformerBlock::create(store, prefix + ".block" + std::to_string(i), dim, heads, rng));
        s.final_ln = LayerNorm::create(store, prefix + ".final_ln", dim);
        return s;
    }

    Mat forward(const Mat& x, const MaskMat& mask, Cache& c) const {
        c.blockc.resize(blocks.size());
        Mat h = x;
        for (std::size_t i = 0; i < blocks.size(); ++i) h = blocks[i].forward(h, mask, c.blockc[i]);
        return final_ln.forward(h, c.finalc);
    }

    Mat backward(const Mat& gy, const Cache& c) const {
        Mat g = final_ln.backward(gy, c.finalc);
        for (std::size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(g, c.blockc[i]);
        return g;
    }
};

inline MaskMat full_mask(Eigen::Index s) { return MaskMat::Ones(s, s); }

inline MaskMat causal_mask(Eigen::Index s) {
    MaskMat m = MaskMat::Zero(s, s);
    for (Eigen::Index i = 0; i < s; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) m(i, j) = 1;
    return m;
}

}  // namespace moto::nn

// Multi-head self-attention with an arbitrary boolean attention mask.
// Disallowed (q, k) pairs receive -inf scores, so their softmax weight is
// exactly zero and masked-out content cannot leak into the output.
#pragma once

#include <limits>
#include <vector>

#include "moto/nn/ops.hpp"

namespace moto::nn {

struct MultiHeadAttention {
    int dim = 0;
    int heads = 0;
    int head_dim = 0;
    Linear wqkv;  // dim -> 3*dim
    Linear wo;    // dim -> dim

    struct Cache {
        Mat x;
        Mat qkv;                 // S x 3*dim
        std::vector<Mat> probs;  // per head, S x S
        Mat concat;              // S x dim (pre-output-projection)
    };

    static MultiHeadAttention create(ParamStore& store, const std::string& prefix, int dim,
                                     int heads, Rng& rng) {
        require(dim % heads == 0, "attention: dim must be divisible by heads");
        MultiHeadAttention a;
        a.dim = dim;
        a.heads = heads;
        a.head_dim = dim / heads;
        a.wqkv = Linear::create(store, prefix + ".qkv", dim, 3 * dim, rng);
        a.wo = Linear::create(store, prefix + ".out", dim, dim, rng);
        return a;
    }

    Mat forward(const Mat& x, const MaskMat& mask, Cache& c) const {
        const auto S = x.rows();
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(head_dim));
        c.x = x;
        c.qkv = wqkv.forward(x);
        c.probs.assign(static_cast<std::size_t>(heads), Mat());
        c.concat.resize(S, dim);
        for (int h = 0; h < heads; ++h) {
            const auto q = c.qkv.middleCols(h * head_dim, head_dim);
            const auto k = c.qkv.middleCols(dim + h * head_dim, head_dim);
            const auto v = c.qkv.middleCols(2 * dim + h * head_dim, head_dim);
            Mat scores = (q * k.transpose()) * inv_sqrt_dh;
            for (Eigen::Index i = 0; i < S; ++i)
                for (Eigen::Index j = 0; j < S; ++j)
                    if (!mask(i, j)) scores(i, j) = -std::numeric_limits<double>::infinity();
            softmax_rows_inplace(scores);
            c.probs[static_cast<std::size_t>(h)] = scores;
            c.concat.middleCols(h * head_dim, head_dim).noalias() = scores * v;
        }
        return wo.forward(c.concat);
    }

    Mat backward(const Mat& gy, const Cache& c) const {
        const auto S = c.x.rows();
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(head_dim));
        Mat gconcat = wo.backward(c.concat, gy);
        Mat gqkv = Mat::Zero(S, 3 * dim);
        for (int h = 0; h < heads; ++h) {
            const auto q = c.qkv.middleCols(h * head_dim, head_dim);
            const auto k = c.qkv.middleCols(dim + h * head_dim, head_dim);
            const auto v = c.qkv.middleCols(2 * dim + h * head_dim, head_dim);
            const Mat& p = c.probs[static_cast<std::size_t>(h)];
            const auto gout_h = gconcat.middleCols(h * head_dim, head_dim);
            Mat gp = gout_h * v.transpose();
            gqkv.middleCols(2 * dim + h * head_dim, head_dim).noalias() = p.transpose() * gout_h;
            // softmax backward: gs = p .* (gp - rowsum(gp .* p))
            Mat gs(S, S);
            for (Eigen::Index i = 0; i < S; ++i) {
                const double dot = gp.row(i).cwiseProduct(p.row(i)).sum();
                gs.row(i) = p.row(i).cwiseProduct((gp.row(i).array() - dot).matrix());
            }
            gs *= inv_sqrt_dh;
            gqkv.middleCols(h * head_dim, head_dim).noalias() = gs * k;
            gqkv.middleCols(dim + h * head_dim, head_dim).noalias() = gs.transpose() * q;
        }
        return wqkv.backward(c.x, gqkv);
    }
};

}  // namespace moto::nn

// Differentiable building blocks: linear, layernorm, GELU, softmax losses.
// Forward passes keep whatever the matching backward needs in small cache
// structs owned by the caller.
#pragma once

#include <cmath>
#include <numbers>

#include "moto/nn/params.hpp"

namespace moto::nn {

// ---------------------------------------------------------------------------
// Linear: y = x * W^T + b     (x: S x in, W: out x in, b: 1 x out)
// ---------------------------------------------------------------------------
struct Linear {
    Param* W = nullptr;
    Param* b = nullptr;

    static Linear create(ParamStore& store, const std::string& prefix, Eigen::Index in,
                         Eigen::Index out, Rng& rng, double init_std = 0.02) {
        Linear l;
        l.W = &store.add(prefix + ".w", out, in);
        l.b = &store.add(prefix + ".b", 1, out);
        fill_normal(l.W->value, rng, init_std);
        return l;
    }

    Mat forward(const Mat& x) const {
        Mat y = x * W->value.transpose();
        y.rowwise() += b->value.row(0);
        return y;
    }

    // Accumulates parameter grads, returns grad wrt x.
    Mat backward(const Mat& x, const Mat& gy) const {
        W->grad.noalias() += gy.transpose() * x;
        b->grad.row(0) += gy.colwise().sum();
        return gy * W->value;
    }
};

// ---------------------------------------------------------------------------
// LayerNorm over the last dimension (per row), gamma/beta trainable.
// ---------------------------------------------------------------------------
struct LayerNorm {
    Param* gamma = nullptr;
    Param* beta = nullptr;
    double eps = 1e-5;

    struct Cache {
        Mat xhat;      // normalized input
        Vec inv_std;   // per-row 1/sqrt(var+eps)
    };

    static LayerNorm create(ParamStore& store, const std::string& prefix, Eigen::Index dim) {
        LayerNorm ln;
        ln.gamma = &store.add(prefix + ".gamma", 1, dim);
        ln.beta = &store.add(prefix + ".beta", 1, dim);
        ln.gamma->value.setOnes();
        return ln;
    }

    Mat forward(const Mat& x, Cache& c) const {
        const auto S = x.rows();
        const auto D = x.cols();
        c.xhat.resize(S, D);
        c.inv_std.resize(S);
        Mat y(S, D);
        for (Eigen::Index i = 0; i < S; ++i) {
            const double mu = x.row(i).mean();
            const double var = (x.row(i).array() - mu).square().mean();
            const double inv = 1.0 / std::sqrt(var + eps);
            c.inv_std(i) = inv;
            c.xhat.row(i) = (x.row(i).array() - mu) * inv;
            y.row(i) = c.xhat.row(i).cwiseProduct(gamma->value.row(0)) + beta->value.row(0);
        }
        return y;
    }

    Mat backward(const Mat& gy, const Cache& c) const {
        const auto S = gy.rows();
        const auto D = gy.cols();
        Mat gx(S, D);
        for (Eigen::Index i = 0; i < S; ++i) {
            Eigen::RowVectorXd gxhat = gy.row(i).cwiseProduct(gamma->value.row(0));
            const double m1 = gxhat.mean();
            const double m2 = gxhat.cwiseProduct(c.xhat.row(i)).mean();
            gx.row(i) =
                (gxhat.array() - m1 - c.xhat.row(i).array() * m2) * c.inv_std(i);
            gamma->grad.row(0) += gy.row(i).cwiseProduct(c.xhat.row(i));
            beta->grad.row(0) += gy.row(i);
        }
        return gx;
    }
};

// ---------------------------------------------------------------------------
// GELU (exact erf form).
// ---------------------------------------------------------------------------
inline Mat gelu(const Mat& x) {
    return x.unaryExpr([](double v) {
        return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
    });
}

inline Mat gelu_backward(const Mat& x, const Mat& gy) {
    static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Mat gx(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = x.reshaped()(i);
        const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        gx.reshaped()(i) = gy.reshaped()(i) * (cdf + v * pdf);
    }
    return gx;
}

// ---------------------------------------------------------------------------
// Row-wise softmax; masked entries (allowed == 0) get probability zero.
// ---------------------------------------------------------------------------
inline void softmax_rows_inplace(Mat& scores) {
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const double mx = scores.row(i).maxCoeff();
        scores.row(i) = (scores.row(i).array() - mx).exp();
        scores.row(i) /= scores.row(i).sum();
    }
}

inline double stable_log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
    const double mx = v.maxCoeff();
    return mx + std::log((v.array() - mx).exp().sum());
}

// Cross entropy of logits rows against integer targets; returns mean NLL and
// writes d(meanNLL)/d(logits) into glogits (same shape), scaled by `scale`.
inline double softmax_cross_entropy(const Mat& logits, const std::vector<int>& targets,
                                    Mat* glogits, double scale = 1.0) {
    const auto S = logits.rows();
    require(static_cast<std::size_t>(S) == targets.size(), "cross entropy: target count mismatch");
    if (glogits) glogits->setZero(S, logits.cols());
    double nll = 0.0;
    for (Eigen::Index i = 0; i < S; ++i) {
        const double lse = stable_log_sum_exp(logits.row(i));
        nll += lse - logits(i, targets[i]);
        if (glogits) {
            Eigen::RowVectorXd p = (logits.row(i).array() - lse).exp();
            glogits->row(i) = p * (scale / static_cast<double>(S));
            (*glogits)(i, targets[i]) -= scale / static_cast<double>(S);
        }
    }
    return nll / static_cast<double>(S);
}

}  // namespace moto::nn

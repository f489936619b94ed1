// VQ codebook: nearest-neighbor assignment (lowest-index tie-break),
// vq/commitment losses, straight-through gradients, usage diagnostics.
#pragma once

#include <vector>

#include "moto/nn/params.hpp"

namespace moto {

struct MotionTokenChunk {
    std::vector<int> codes;  // length K, each in [0, V)

    void validate(int k, int v) const {
        if (int(codes.size()) != k) throw ModelError("chunk length != K");
        for (int c : codes)
            if (c < 0 || c >= v) throw ModelError("code out of range");
    }
};

struct QuantizeResult {
    MotionTokenChunk chunk;
    Mat z_q;  // rows replaced by selected codebook vectors
    double vq_loss = 0.0;      // mean over K*d of ||sg(z) - e||^2
    double commit_loss = 0.0;  // mean over K*d of ||z - sg(e)||^2
};

inline int nearest_code(const Mat& row, const Mat& codebook) {
    int best = 0;
    double best_d = (codebook.row(0) - row.row(0)).squaredNorm();
    for (Eigen::Index j = 1; j < codebook.rows(); ++j) {
        double d = (codebook.row(j) - row.row(0)).squaredNorm();
        if (d < best_d) {  // strict: ties keep the lowest index
            best_d = d;
            best = int(j);
        }
    }
    return best;
}

class VectorQuantizer {
public:
    nn::Param* codebook = nullptr;  // V x d_code
    std::vector<long long> usage_counts;

    static VectorQuantizer create(nn::ParamStore& store, const std::string& name, int v,
                                  int d_code, Rng& rng) {
        VectorQuantizer q;
        q.codebook = &store.add(name, v, d_code);
        double lim = 1.0 / double(v);
        fill_uniform(q.codebook->value, rng, -lim, lim);
        q.usage_counts.assign(std::size_t(v), 0);
        return q;
    }

    int vocab() const { return int(codebook->value.rows()); }
    int code_dim() const { return int(codebook->value.cols()); }

    QuantizeResult quantize(const Mat& z) const {
        if (z.cols() != codebook->value.cols())
            throw ModelError("quantize: latent dim mismatch");
        if (has_non_finite(z)) throw ModelError("quantize: non-finite input");
        QuantizeResult r;
        r.z_q = Mat(z.rows(), z.cols());
        double sq = 0.0;
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            int c = nearest_code(z.row(i), codebook->value);
            r.chunk.codes.push_back(c);
            r.z_q.row(i) = codebook->value.row(c);
            sq += (z.row(i) - codebook->value.row(c)).squaredNorm();
        }
        double denom = double(z.rows()) * double(z.cols());
        r.vq_loss = sq / denom;      // identical forward values; they differ
        r.commit_loss = sq / denom;  // only in which side the gradient reaches
        return r;
    }

    QuantizeResult quantize_tracked(const Mat& z) {
        QuantizeResult r = quantize(z);
        for (int c : r.chunk.codes) ++usage_counts[std::size_t(c)];
        return r;
    }

    void reset_usage() { usage_counts.assign(std::size_t(vocab()), 0); }

    // Backward for loss_scale * (recon(z_q) + vq_loss + beta * commit_loss):
    // g_zq is d(recon)/d(z_q) (already scaled); straight-through copies it to z.
    // The vq term reaches only the codebook; the commitment term only z.
    Mat backward(const Mat& z, const QuantizeResult& r, const Mat& g_zq, double beta,
                 double loss_scale) {
        double denom = double(z.rows()) * double(z.cols());
        Mat g_z = g_zq;  // straight-through
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            int c = r.chunk.codes[std::size_t(i)];
            Mat diff = z.row(i) - codebook->value.row(c);
            g_z.row(i) += loss_scale * beta * 2.0 / denom * diff;
            codebook->grad.row(c) -= loss_scale * 2.0 / denom * diff;
        }
        return g_z;
    }
};

// perplexity = exp(entropy of the empirical code distribution)
struct CodebookStats {
    std::vector<long long> histogram;
    double perplexity = 0.0;
    int dead_codes = 0;
};

inline CodebookStats codebook_stats_from_counts(const std::vector<long long>& counts) {
    CodebookStats s;
    s.histogram = counts;
    long long total = 0;
    for (long long c : counts) total += c;
    double entropy = 0.0;
    for (long long c : counts) {
        if (c == 0) {
            ++s.dead_codes;
            continue;
        }
        double p = double(c) / double(total);
        entropy -= p * std::log(p);
    }
    s.perplexity = total > 0 ? std::exp(entropy) : 0.0;
    return s;
}

}  // namespace moto

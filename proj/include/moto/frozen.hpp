// Frozen stand-ins for the pretrained vision/text encoders: a fixed seeded
// linear patch projection + sinusoidal 2D positions, and a fixed embedding
// table for instruction tokens. Nothing here ever receives gradients.
#pragma once

#include <zlib.h>

#include "moto/config.hpp"
#include "moto/frame.hpp"
#include "moto/rng.hpp"
#include "moto/vocab.hpp"

namespace moto {

struct PatchFeatureMap {
    Mat features;  // P x D
    int grid_rows = 0, grid_cols = 0;
};

struct TextFeatureSeq {
    Mat features;                // L x D
    std::vector<bool> pad_mask;  // true at padding positions
};

class FrozenFeatureExtractor {
public:
    FrozenFeatureExtractor(const ExperimentConfig& cfg, const Vocab& vocab)
        : patch_(cfg.frame.patch),
          dim_(cfg.frozen.feature_dim),
          max_prompt_(cfg.frozen.max_prompt_len),
          vocab_size_(vocab.size()) {
        int patch_dim = cfg.frame.patch * cfg.frame.patch * cfg.frame.channels;
        grid_rows_ = cfg.frame.height / cfg.frame.patch;
        grid_cols_ = cfg.frame.width / cfg.frame.patch;

        Rng root(cfg.frozen.seed);
        Rng proj_rng = root.child(1);
        proj_ = Mat(dim_, patch_dim);
        fill_normal(proj_, proj_rng, 1.0 / std::sqrt(double(patch_dim)));
        Rng text_rng = root.child(2);
        text_table_ = Mat(vocab_size_, dim_);
        fill_normal(text_table_, text_rng, 1.0);
        pos_ = sinusoidal_2d(grid_rows_, grid_cols_, dim_);
    }

    int feature_dim() const { return dim_; }
    int num_patches() const { return grid_rows_ * grid_cols_; }
    int max_prompt_len() const { return max_prompt_; }
    const Mat& positional() const { return pos_; }

    PatchFeatureMap extract_patch_features(const Frame& frame) const {
        if (frame.height != grid_rows_ * patch_ || frame.width != grid_cols_ * patch_)
            throw ConfigError("frame dims do not match frozen extractor config");
        Mat patches = patchify(frame, patch_);  // P x patch_dim
        PatchFeatureMap out;
        out.features = patches * proj_.transpose() + pos_;
        out.grid_rows = grid_rows_;
        out.grid_cols = grid_cols_;
        return out;
    }

    TextFeatureSeq embed_instruction(const Instruction& instr) const {
        TextFeatureSeq out;
        out.features = Mat(max_prompt_, dim_);
        out.pad_mask.assign(std::size_t(max_prompt_), true);
        if (int(instr.token_ids.size()) != max_prompt_)
            throw DataError("instruction token_ids must be padded to max prompt length");
        for (int i = 0; i < max_prompt_; ++i) {
            int id = instr.token_ids[std::size_t(i)];
            if (id < 0 || id >= vocab_size_)
                throw DataError("out-of-vocabulary token id: " + std::to_string(id));
            out.features.row(i) = text_table_.row(id);
            out.pad_mask[std::size_t(i)] = (id == 0);
        }
        return out;
    }

    // For frozen-ness assertions: digest of every fixed weight.
    std::uint32_t weight_hash() const {
        auto mix = [](std::uint32_t crc, const Mat& m) {
            return std::uint32_t(::crc32(crc, reinterpret_cast<const Bytef*>(m.data()),
                                         uInt(sizeof(double) * std::size_t(m.size()))));
        };
        std::uint32_t h = 0;
        h = mix(h, proj_);
        h = mix(h, text_table_);
        h = mix(h, pos_);
        return h;
    }

    static Mat sinusoidal_2d(int rows, int cols, int dim) {
        if (dim % 4 != 0) throw ConfigError("frozen.feature_dim must be divisible by 4");
        int half = dim / 2;  // half encodes row index, half encodes col index
        Mat pe(rows * cols, dim);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                int p = r * cols + c;
                for (int i = 0; i < half / 2; ++i) {
                    double div = std::pow(10000.0, 2.0 * i / double(half));
                    pe(p, 2 * i) = std::sin(r / div);
                    pe(p, 2 * i + 1) = std::cos(r / div);
                    pe(p, half + 2 * i) = std::sin(c / div);
                    pe(p, half + 2 * i + 1) = std::cos(c / div);
                }
            }
        return pe;
    }

private:
    int patch_, dim_, max_prompt_, vocab_size_;
    int grid_rows_ = 0, grid_cols_ = 0;
    Mat proj_;        // D x patch_dim, no bias: projection of zeros is zero
    Mat text_table_;  // vocab x D, row 0 = pad embedding
    Mat pos_;         // P x D
};

}  // namespace moto

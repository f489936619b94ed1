// Core domain types: frames, clips, instructions, actions, episodes.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "moto/mat.hpp"

namespace moto {

struct Frame {
    std::vector<double> pixels;  // H*W*C, row-major, channel-last, values in [0,1]
    int height = 0, width = 0, channels = 0;

    double& at(int y, int x, int c) { return pixels[(std::size_t(y) * width + x) * channels + c]; }
    double at(int y, int x, int c) const {
        return pixels[(std::size_t(y) * width + x) * channels + c];
    }

    static Frame zeros(int h, int w, int c) {
        Frame f;
        f.height = h;
        f.width = w;
        f.channels = c;
        f.pixels.assign(std::size_t(h) * w * c, 0.0);
        return f;
    }

    void validate(int patch_size) const {
        if (height <= 0 || width <= 0 || channels <= 0)
            throw DataError("frame dims must be positive");
        if (pixels.size() != std::size_t(height) * width * channels)
            throw DataError("frame pixel buffer size mismatch");
        for (double v : pixels)
            if (!(v >= 0.0 && v <= 1.0)) throw DataError("frame pixel outside [0,1]");
        if (patch_size > 0 && (height % patch_size != 0 || width % patch_size != 0))
            throw DataError("frame dims not divisible by patch size");
    }

    bool same_dims(const Frame& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

struct VideoClip {
    std::vector<Frame> frames;  // length T+1
    int source_stride = 1;      // Δt: raw env steps per retained frame

    int transitions() const { return int(frames.size()) - 1; }

    void validate() const {
        if (frames.size() < 2) throw DataError("clip needs at least 2 frames");
        if (source_stride < 1) throw DataError("source_stride must be >= 1");
        for (const auto& f : frames)
            if (!f.same_dims(frames[0])) throw DataError("clip frames differ in dimensions");
    }
};

struct Instruction {
    std::string text;
    std::vector<int> token_ids;  // padded/truncated to max prompt length, 0 = pad
};

struct ActionVector {
    double delta_pos[2] = {0.0, 0.0};  // Δx, clipped to [-1,1]
    double delta_rot = 0.0;            // Δθ, clipped to [-1,1]
    int grip = 0;                      // Δgrip, strictly {0,1}

    void validate() const {
        for (double v : {delta_pos[0], delta_pos[1], delta_rot})
            if (!(v >= -1.0 && v <= 1.0)) throw DataError("action component outside [-1,1]");
        if (grip != 0 && grip != 1) throw DataError("grip must be 0 or 1");
    }

    static ActionVector clipped(double dx, double dy, double drot, int grip) {
        auto clip = [](double v) { return std::max(-1.0, std::min(1.0, v)); };
        ActionVector a;
        a.delta_pos[0] = clip(dx);
        a.delta_pos[1] = clip(dy);
        a.delta_rot = clip(drot);
        a.grip = grip;
        return a;
    }
};

struct Episode {
    Instruction instruction;
    VideoClip clip;
    std::vector<ActionVector> actions;  // length N * transitions
    bool success = false;
    int task_label = 0;

    void validate(int n_actions_per_transition) const {
        clip.validate();
        if (actions.size() !=
            std::size_t(n_actions_per_transition) * std::size_t(clip.transitions()))
            throw DataError("episode action count != N * transitions");
        for (const auto& a : actions) a.validate();
    }
};

// Keeps frames at indices 0, stride, 2*stride, ...
inline VideoClip downsample_clip(const std::vector<Frame>& raw_frames, int stride) {
    if (stride < 1) throw DataError("downsample stride must be >= 1");
    if (raw_frames.empty()) throw DataError("downsample needs frames");
    if ((raw_frames.size() - 1) % std::size_t(stride) != 0)
        throw DataError("raw frame count minus one must be divisible by the stride");
    VideoClip clip;
    clip.source_stride = stride;
    for (std::size_t i = 0; i < raw_frames.size(); i += std::size_t(stride))
        clip.frames.push_back(raw_frames[i]);
    if (clip.frames.size() < 2)
        throw DataError("downsample stride leaves fewer than 2 frames");
    return clip;
}

// Flattens each patch_size x patch_size x C patch into a row (row-major scan of
// patches, then row-major scan of pixels within a patch, channel-last).
inline Mat patchify(const Frame& f, int patch) {
    f.validate(patch);
    int gr = f.height / patch, gc = f.width / patch;
    Mat out(gr * gc, patch * patch * f.channels);
    for (int py = 0; py < gr; ++py)
        for (int px = 0; px < gc; ++px) {
            int row = py * gc + px;
            int k = 0;
            for (int dy = 0; dy < patch; ++dy)
                for (int dx = 0; dx < patch; ++dx)
                    for (int c = 0; c < f.channels; ++c)
                        out(row, k++) = f.at(py * patch + dy, px * patch + dx, c);
        }
    return out;
}

inline Frame unpatchify(const Mat& patches, int h, int w, int channels, int patch) {
    int gr = h / patch, gc = w / patch;
    if (patches.rows() != gr * gc || patches.cols() != patch * patch * channels)
        throw DataError("unpatchify shape mismatch");
    Frame f = Frame::zeros(h, w, channels);
    for (int py = 0; py < gr; ++py)
        for (int px = 0; px < gc; ++px) {
            int row = py * gc + px;
            int k = 0;
            for (int dy = 0; dy < patch; ++dy)
                for (int dx = 0; dx < patch; ++dx)
                    for (int c = 0; c < channels; ++c)
                        f.at(py * patch + dy, px * patch + dx, c) = patches(row, k++);
        }
    return f;
}

inline double frame_mse(const Frame& a, const Frame& b) {
    if (!a.same_dims(b)) throw DataError("frame_mse dims mismatch");
    double s = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        double d = a.pixels[i] - b.pixels[i];
        s += d * d;
    }
    return s / double(a.pixels.size());
}

}  // namespace moto

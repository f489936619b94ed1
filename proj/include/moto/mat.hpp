// Matrix aliases and small numeric helpers shared across the library.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "moto/rng.hpp"

namespace moto {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
// Attention mask: entry (q, k) nonzero means position q may attend to k.
using MaskMat = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct ModelError : Error {
    using Error::Error;
};
struct CheckpointError : Error {
    using Error::Error;
};

inline void fill_normal(Mat& m, Rng& rng, double stddev = 1.0, double mean = 0.0) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(mean, stddev);
}

inline void fill_uniform(Mat& m, Rng& rng, double lo, double hi) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(lo, hi);
}

inline bool has_non_finite(const Mat& m) { return !m.allFinite(); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ModelError(msg);
}

}  // namespace moto

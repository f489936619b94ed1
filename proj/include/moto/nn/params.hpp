// Named-parameter registry. Every trainable tensor lives here so the
// optimizer, checkpointing, and gradient tests can walk them uniformly.
#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "moto/mat.hpp"

namespace moto::nn {

struct Param {
    std::string name;
    Mat value;
    Mat grad;

    Eigen::Index rows() const { return value.rows(); }
    Eigen::Index cols() const { return value.cols(); }
};

class ParamStore {
public:
    Param& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        if (index_.count(name)) throw ModelError("duplicate parameter: " + name);
        params_.push_back(Param{name, Mat::Zero(rows, cols), Mat::Zero(rows, cols)});
        index_[name] = params_.size() - 1;
        return params_.back();
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    Param& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ModelError("unknown parameter: " + name);
        return params_[it->second];
    }
    const Param& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ModelError("unknown parameter: " + name);
        return params_[it->second];
    }

    void zero_grads() {
        for (auto& p : params_) p.grad.setZero();
    }

    std::size_t size() const { return params_.size(); }

    // Registration order; stable across runs by construction.
    std::vector<Param*> all() {
        std::vector<Param*> out;
        out.reserve(params_.size());
        for (auto& p : params_) out.push_back(&p);
        return out;
    }
    std::vector<const Param*> all() const {
        std::vector<const Param*> out;
        out.reserve(params_.size());
        for (const auto& p : params_) out.push_back(&p);
        return out;
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
        return n;
    }

private:
    std::deque<Param> params_;  // deque: stable addresses as modules hold Param&
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace moto::nn

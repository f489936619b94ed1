// Evaluation suite: reconstruction quality, semantic linear probe, motion
// transfer (consistency / discrimination), trajectory likelihood separation,
// and the policy wrapper used for closed-loop rollouts. All ops are pure
// given (checkpoint, dataset, seed).
#pragma once

#include <map>

#include "moto/finetune.hpp"
#include "moto/gpt_infer.hpp"
#include "moto/gpt_train.hpp"
#include "moto/tokenizer.hpp"
#include "moto/world.hpp"

namespace moto {

// --- reconstruction --------------------------------------------------------

struct ReconReport {
    double mean_mse = 0.0;
    double psnr = 0.0;
    double copy_mse = 0.0;   // predict next := prev
    double copy_psnr = 0.0;
    int n_pairs = 0;
};

inline double psnr_from_mse(double mse) {
    if (mse <= 0) return 60.0;
    return std::min(60.0, 10.0 * std::log10(1.0 / mse));
}

// Teacher-forced: tokens come from the true (prev, next) pair.
inline ReconReport eval_reconstruction(const MotionTokenizer& tokenizer,
                                       const std::vector<Episode>& episodes) {
    ReconReport rep;
    for (const auto& ep : episodes)
        for (int t = 0; t < ep.clip.transitions(); ++t) {
            const Frame& prev = ep.clip.frames[std::size_t(t)];
            const Frame& next = ep.clip.frames[std::size_t(t) + 1];
            Mat z = tokenizer.encode_motion(prev, next);
            QuantizeResult q = tokenizer.quantizer.quantize(z);
            Frame pred = tokenizer.decode_next_frame(prev, q.z_q);
            rep.mean_mse += frame_mse(pred, next);
            rep.copy_mse += frame_mse(prev, next);
            ++rep.n_pairs;
        }
    if (rep.n_pairs == 0) throw DataError("eval_reconstruction: no pairs");
    rep.mean_mse /= rep.n_pairs;
    rep.copy_mse /= rep.n_pairs;
    rep.psnr = psnr_from_mse(rep.mean_mse);
    rep.copy_psnr = psnr_from_mse(rep.copy_mse);
    return rep;
}

// --- semantic linear probe -------------------------------------------------

enum class ProbeRep { initial_frame, initial_repeated, all_frames, frame_plus_chunks };

inline const char* probe_rep_name(ProbeRep r) {
    switch (r) {
        case ProbeRep::initial_frame: return "initial_frame";
        case ProbeRep::initial_repeated: return "initial_repeated";
        case ProbeRep::all_frames: return "all_frames";
        case ProbeRep::frame_plus_chunks: return "frame_plus_chunks";
    }
    throw ModelError("bad probe representation");
}

inline Mat pooled_features(const FrozenFeatureExtractor& frozen, const Frame& f) {
    Mat feats = frozen.extract_patch_features(f).features;  // P x D
    return feats.colwise().mean();                          // 1 x D
}

inline Mat probe_features(const MotionTokenizer& tokenizer, const Episode& ep, ProbeRep rep) {
    const FrozenFeatureExtractor& frozen = tokenizer.frozen();
    int frames = int(ep.clip.frames.size());
    auto pooled = [&](int t) { return pooled_features(frozen, ep.clip.frames[std::size_t(t)]); };
    auto hcat = [](std::vector<Mat> parts) {
        Eigen::Index w = 0;
        for (const auto& p : parts) w += p.cols();
        Mat out(1, w);
        Eigen::Index at = 0;
        for (const auto& p : parts) {
            out.block(0, at, 1, p.cols()) = p;
            at += p.cols();
        }
        return out;
    };
    switch (rep) {
        case ProbeRep::initial_frame: return pooled(0);
        case ProbeRep::initial_repeated: {
            std::vector<Mat> parts(std::size_t(frames), pooled(0));
            return hcat(parts);
        }
        case ProbeRep::all_frames: {
            std::vector<Mat> parts;
            for (int t = 0; t < frames; ++t) parts.push_back(pooled(t));
            return hcat(parts);
        }
        case ProbeRep::frame_plus_chunks: {
            std::vector<Mat> parts{pooled(0)};
            for (const auto& chunk : tokenizer.tokenize_clip(ep.clip))
                parts.push_back(MotionTokenizer::flatten_rows(tokenizer.codes_to_embeddings(chunk)));
            return hcat(parts);
        }
    }
    throw ModelError("bad probe representation");
}

struct ProbeResult {
    std::string representation;
    double accuracy = 0.0;
    int feature_dim = 0;
    int n_train = 0, n_eval = 0, n_classes = 0;
};

// Single linear layer, full-batch gradient descent on softmax cross-entropy.
// Identical optimization budget for every representation.
inline ProbeResult train_linear_probe(const Mat& x_train, const std::vector<int>& y_train,
                                      const Mat& x_eval, const std::vector<int>& y_eval,
                                      int n_classes, int steps, double lr) {
    if (n_classes < 2) throw DataError("probe needs at least 2 classes");
    Eigen::Index n = x_train.rows(), f = x_train.cols();
    // standardize by train-split statistics (probe conditioning, not model state)
    Mat mu = x_train.colwise().mean();
    Mat var = ((x_train.rowwise() - mu.row(0)).array().square().colwise().sum() / double(n))
                  .matrix();
    Mat sd = (var.array().sqrt() + 1e-6).matrix();
    auto standardize = [&](const Mat& x) {
        return ((x.rowwise() - mu.row(0)).array().rowwise() / sd.row(0).array()).matrix();
    };
    Mat xt = standardize(x_train), xe = standardize(x_eval);

    Mat w = Mat::Zero(n_classes, f), b = Mat::Zero(1, n_classes);
    for (int step = 0; step < steps; ++step) {
        Mat logits = xt * w.transpose();
        logits.rowwise() += b.row(0);
        Mat probs(logits.rows(), logits.cols());
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            Vec row = logits.row(i).transpose();
            double m = row.maxCoeff();
            Vec e = (row.array() - m).exp();
            probs.row(i) = (e / e.sum()).transpose();
        }
        for (Eigen::Index i = 0; i < n; ++i) probs(i, y_train[std::size_t(i)]) -= 1.0;
        probs /= double(n);
        w -= lr * (probs.transpose() * xt);
        b -= lr * probs.colwise().sum();
    }

    ProbeResult res;
    res.feature_dim = int(f);
    res.n_train = int(n);
    res.n_eval = int(x_eval.rows());
    res.n_classes = n_classes;
    int hits = 0;
    for (Eigen::Index i = 0; i < xe.rows(); ++i) {
        Mat logits = xe.row(i) * w.transpose() + b;
        Eigen::Index best = 0;
        logits.row(0).maxCoeff(&best);
        if (int(best) == y_eval[std::size_t(i)]) ++hits;
    }
    res.accuracy = x_eval.rows() > 0 ? double(hits) / double(xe.rows()) : 0.0;
    return res;
}

// Probes every representation on a train/eval split of labeled episodes.
inline std::vector<ProbeResult> eval_semantic_probe(const MotionTokenizer& tokenizer,
                                                    const std::vector<Episode>& train_eps,
                                                    const std::vector<Episode>& eval_eps,
                                                    int steps, double lr) {
    std::map<int, int> class_map;
    for (const auto& ep : train_eps) class_map.emplace(ep.task_label, 0);
    int next_id = 0;
    for (auto& [label, id] : class_map) id = next_id++;
    if (next_id < 2) throw DataError("probe needs at least 2 classes");
    auto labels = [&](const std::vector<Episode>& eps) {
        std::vector<int> y;
        for (const auto& ep : eps) {
            auto it = class_map.find(ep.task_label);
            if (it == class_map.end()) throw DataError("probe eval label unseen in train split");
            y.push_back(it->second);
        }
        return y;
    };
    std::vector<int> y_train = labels(train_eps), y_eval = labels(eval_eps);

    std::vector<ProbeResult> results;
    for (ProbeRep rep : {ProbeRep::initial_frame, ProbeRep::initial_repeated,
                         ProbeRep::all_frames, ProbeRep::frame_plus_chunks}) {
        auto stack = [&](const std::vector<Episode>& eps) {
            Mat first = probe_features(tokenizer, eps.front(), rep);
            Mat x(Eigen::Index(eps.size()), first.cols());
            for (std::size_t i = 0; i < eps.size(); ++i)
                x.row(Eigen::Index(i)) = probe_features(tokenizer, eps[i], rep);
            return x;
        };
        ProbeResult r = train_linear_probe(stack(train_eps), y_train, stack(eval_eps), y_eval,
                                           next_id, steps, lr);
        r.representation = probe_rep_name(rep);
        results.push_back(r);
    }
    return results;
}

// --- motion transfer -------------------------------------------------------

struct TransferReport {
    double consistency = 0.0;     // mean pairwise cosine, same chunk across frames
    double discrimination = 0.0;  // mean pairwise distance between chunk mean shifts (px)
    std::vector<double> per_chunk_consistency;  // one entry per reference chunk
    int n_chunks = 0, n_frames = 0;
};

// Applies each reference chunk to every probe frame and measures the decoded
// agent-centroid displacement (model-free oracle on the rendered frames).
inline TransferReport eval_motion_transfer(const MotionTokenizer& tokenizer,
                                           const ExperimentConfig& cfg, std::uint64_t seed,
                                           int n_probe_frames = 8) {
    Rng rng(seed);
    // reference chunks: agent stepping in each of the 4 cardinal directions
    world::Task base_task = world::task_from_class(0);
    world::WorldState base = world::reset(rng.child(1).next_u64(), base_task);
    std::vector<MotionTokenChunk> chunks;
    for (int d = 0; d < 4; ++d) {
        world::Vec2 dir = world::direction_vector(d);
        ActionVector a = ActionVector::clipped(dir.x, dir.y, 0.0, 0);
        world::WorldState moved = world::step(base, a, cfg.world.step_scale);
        Mat z = tokenizer.encode_motion(world::render(base, cfg.frame.height, cfg.frame.width),
                                        world::render(moved, cfg.frame.height, cfg.frame.width));
        chunks.push_back(tokenizer.quantizer.quantize(z).chunk);
    }

    std::vector<Frame> probes;
    for (int i = 0; i < n_probe_frames; ++i) {
        world::Task t = world::task_from_class(rng.child(100 + std::uint64_t(i)).index(
            world::kNumTaskClasses));
        world::WorldState s =
            world::reset(rng.child(200 + std::uint64_t(i)).next_u64(), t);
        probes.push_back(world::render(s, cfg.frame.height, cfg.frame.width));
    }

    std::vector<std::vector<world::Vec2>> disp(chunks.size());
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        Mat zq = tokenizer.codes_to_embeddings(chunks[c]);
        for (const Frame& prev : probes) {
            Frame decoded = tokenizer.decode_next_frame(prev, zq);
            world::Vec2 before = world::agent_centroid(prev);
            world::Vec2 after = world::agent_centroid(decoded);
            disp[c].push_back(after - before);
        }
    }

    TransferReport rep;
    rep.n_chunks = int(chunks.size());
    rep.n_frames = n_probe_frames;
    for (const auto& d : disp) {
        double cos_sum = 0.0;
        int cos_n = 0;
        for (std::size_t i = 0; i < d.size(); ++i)
            for (std::size_t j = i + 1; j < d.size(); ++j) {
                double ni = d[i].norm(), nj = d[j].norm();
                double c = (ni > 1e-9 && nj > 1e-9) ? d[i].dot(d[j]) / (ni * nj) : 0.0;
                cos_sum += c;
                ++cos_n;
            }
        rep.per_chunk_consistency.push_back(cos_n ? cos_sum / cos_n : 0.0);
    }
    for (double v : rep.per_chunk_consistency)
        rep.consistency += v / double(rep.per_chunk_consistency.size());

    std::vector<world::Vec2> means;
    for (const auto& d : disp) {
        world::Vec2 m;
        for (const auto& v : d) m = m + v;
        means.push_back(m * (1.0 / double(d.size())));
    }
    double dist_sum = 0.0;
    int dist_n = 0;
    for (std::size_t i = 0; i < means.size(); ++i)
        for (std::size_t j = i + 1; j < means.size(); ++j) {
            dist_sum += (means[i] - means[j]).norm();
            ++dist_n;
        }
    rep.discrimination = dist_n ? dist_sum / dist_n : 0.0;
    return rep;
}

// --- likelihood separation -------------------------------------------------

struct LikelihoodReport {
    int n_triplets = 0;
    double mean_logl_expert = 0.0, mean_logl_corrupted = 0.0, mean_logl_random = 0.0;
    double win_expert_vs_random = 0.0;
    double win_expert_vs_corrupted = 0.0;
    double win_corrupted_vs_random = 0.0;
    // per-step mean log-likelihood curves, length T
    std::vector<double> curve_expert, curve_corrupted, curve_random;
};

// The three datasets must be generated from identical per-episode seeds
// (matched initial state + task); mismatches are an input error.
inline LikelihoodReport eval_likelihood_separation(MotoGpt& gpt, const MotionTokenizer& tokenizer,
                                                   const LoadedDataset& expert,
                                                   const LoadedDataset& corrupted,
                                                   const LoadedDataset& random) {
    int n = expert.size();
    if (corrupted.size() != n || random.size() != n)
        throw DataError("likelihood triplets: dataset sizes differ");
    if (n == 0) throw DataError("likelihood triplets: empty datasets");
    for (int i = 0; i < n; ++i) {
        std::uint64_t s = expert.manifest().episodes[std::size_t(i)].seed;
        if (corrupted.manifest().episodes[std::size_t(i)].seed != s ||
            random.manifest().episodes[std::size_t(i)].seed != s)
            throw DataError("likelihood triplets: episode " + std::to_string(i) +
                            " seeds are not matched across datasets");
    }

    LikelihoodReport rep;
    rep.n_triplets = n;
    int t_len = 0;
    auto accumulate = [&](const LoadedDataset& ds, double& mean, std::vector<double>& curve,
                          std::vector<double>& totals) {
        for (int i = 0; i < n; ++i) {
            Episode ep = ds.load_episode(i);
            TrajectoryScore s = score_trajectory(gpt, tokenizer, ep.instruction, ep.clip);
            if (t_len == 0) t_len = int(s.per_step_logls.size());
            if (curve.empty()) curve.assign(std::size_t(t_len), 0.0);
            for (int t = 0; t < t_len; ++t)
                curve[std::size_t(t)] += s.per_step_logls[std::size_t(t)] / double(n);
            mean += s.total_logl / double(n);
            totals.push_back(s.total_logl);
        }
    };
    std::vector<double> te, tc, tr;
    accumulate(expert, rep.mean_logl_expert, rep.curve_expert, te);
    accumulate(corrupted, rep.mean_logl_corrupted, rep.curve_corrupted, tc);
    accumulate(random, rep.mean_logl_random, rep.curve_random, tr);
    int er = 0, ec = 0, cr = 0;
    for (int i = 0; i < n; ++i) {
        std::size_t k = std::size_t(i);
        er += te[k] > tr[k] ? 1 : 0;
        ec += te[k] > tc[k] ? 1 : 0;
        cr += tc[k] > tr[k] ? 1 : 0;
    }
    rep.win_expert_vs_random = double(er) / n;
    rep.win_expert_vs_corrupted = double(ec) / n;
    rep.win_corrupted_vs_random = double(cr) / n;
    return rep;
}

// --- policy wrapper --------------------------------------------------------

inline world::Policy make_policy(MotoGpt& gpt, ActionHead& head, const MotionTokenizer& tokenizer,
                                 InferMode mode, const FinetunePlan& plan) {
    return [&gpt, &head, &tokenizer, mode, plan](const Instruction& instr, const Frame& frame) {
        return infer_actions(gpt, head, tokenizer, instr, frame, mode, plan);
    };
}

}  // namespace moto

// Deterministic 2D manipulation world: a gripper agent, three colored blocks,
// a goal ring, templated instructions, a scripted expert, and dataset
// generation / closed-loop policy evaluation.
#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>

#include "moto/config.hpp"
#include "moto/dataset.hpp"
#include "moto/rng.hpp"
#include "moto/vocab.hpp"

namespace moto::world {

struct Vec2 {
    double x = 0, y = 0;
    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double norm() const { return std::sqrt(x * x + y * y); }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
};

// geometry in world units ([0,1] square); +y points down (pixel rows)
inline constexpr double kAgentRadius = 0.07;
inline constexpr double kTickLen = 0.11;
inline constexpr double kBlockHalf = 0.055;
inline constexpr double kGoalRadius = 0.11;
inline constexpr double kRingWidth = 0.02;
inline constexpr double kGrabRadius = 0.10;
inline constexpr double kReleaseTol = 0.05;
inline constexpr double kAgentMargin = 0.08;
inline constexpr double kRotScale = 0.5;  // radians per unit delta_rot
inline constexpr double kMoveDist = 0.28;
inline constexpr double kMoveSuccess = 0.20;
inline constexpr double kPickSuccessFrac = 0.8;  // of goal radius

enum class BlockColor { red = 0, green = 1, blue = 2 };
enum class TaskKind { move_direction, pick_place };

inline Vec2 direction_vector(int dir) {  // 0 up, 1 down, 2 left, 3 right
    switch (dir) {
        case 0: return {0, -1};
        case 1: return {0, 1};
        case 2: return {-1, 0};
        case 3: return {1, 0};
    }
    throw DataError("bad direction id");
}

inline const char* direction_word(int dir) {
    static const char* w[] = {"up", "down", "left", "right"};
    if (dir < 0 || dir > 3) throw DataError("bad direction id");
    return w[dir];
}

struct Task {
    TaskKind kind = TaskKind::move_direction;
    BlockColor target_color = BlockColor::red;
    int direction = 0;    // move_direction only
    int template_id = 0;  // instruction template
    int class_id = 0;     // 0-3 move dirs, 4 green pick, 5 blue pick
};

inline constexpr int kNumTaskClasses = 6;

inline Task task_from_class(int class_id) {
    Task t;
    t.class_id = class_id;
    t.template_id = class_id;
    if (class_id >= 0 && class_id < 4) {
        t.kind = TaskKind::move_direction;
        t.target_color = BlockColor::red;
        t.direction = class_id;
    } else if (class_id == 4 || class_id == 5) {
        t.kind = TaskKind::pick_place;
        t.target_color = class_id == 4 ? BlockColor::green : BlockColor::blue;
    } else {
        throw DataError("task class out of range");
    }
    return t;
}

inline std::string instruction_text(const Task& t) {
    if (t.kind == TaskKind::move_direction)
        return std::string("move the red block ") + direction_word(t.direction);
    return std::string("put the ") +
           (t.target_color == BlockColor::green ? "green" : "blue") +
           " block in the goal region";
}

struct Block {
    int id = 0;
    BlockColor color = BlockColor::red;
    Vec2 pos;
};

struct WorldState {
    Vec2 agent_pos;
    double agent_rot = 0.0;
    bool grip_closed = false;
    std::optional<int> held_block;
    std::array<Block, 3> blocks;       // red, green, blue
    std::array<Vec2, 3> block_start;   // positions at reset
    Vec2 goal_center;
    Task task;
    int step_count = 0;
    bool succeeded = false;
};

inline bool task_success_now(const WorldState& s) {
    int bid = int(s.task.target_color);
    const Vec2& pos = s.blocks[std::size_t(bid)].pos;
    bool held = s.held_block && *s.held_block == bid;
    if (s.task.kind == TaskKind::move_direction) {
        Vec2 disp = pos - s.block_start[std::size_t(bid)];
        return !held && disp.dot(direction_vector(s.task.direction)) >= kMoveSuccess;
    }
    return !held && (pos - s.goal_center).norm() <= kPickSuccessFrac * kGoalRadius;
}

inline WorldState reset(std::uint64_t seed, const Task& task) {
    Rng rng(seed);
    auto sample_in = [&](double lo, double hi) {
        return Vec2{rng.uniform(lo, hi), rng.uniform(lo, hi)};
    };
    WorldState s;
    s.task = task;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        s.agent_pos = sample_in(0.20, 0.80);
        s.blocks[0] = {0, BlockColor::red, sample_in(0.35, 0.65)};
        s.blocks[1] = {1, BlockColor::green, sample_in(0.25, 0.75)};
        s.blocks[2] = {2, BlockColor::blue, sample_in(0.25, 0.75)};
        s.goal_center = sample_in(0.25, 0.75);
        bool ok = true;
        for (int i = 0; i < 3 && ok; ++i) {
            if ((s.blocks[std::size_t(i)].pos - s.agent_pos).norm() < 0.14) ok = false;
            for (int j = i + 1; j < 3 && ok; ++j)
                if ((s.blocks[std::size_t(i)].pos - s.blocks[std::size_t(j)].pos).norm() < 0.16)
                    ok = false;
            if (ok && (s.blocks[std::size_t(i)].pos - s.goal_center).norm() < 0.22) ok = false;
        }
        if (ok && task.kind == TaskKind::pick_place) {
            double d =
                (s.blocks[std::size_t(int(task.target_color))].pos - s.goal_center).norm();
            if (d > 0.55) ok = false;
        }
        if (ok) {
            for (int i = 0; i < 3; ++i) s.block_start[std::size_t(i)] = s.blocks[std::size_t(i)].pos;
            s.agent_rot = rng.uniform(-std::numbers::pi, std::numbers::pi);
            return s;
        }
    }
    throw DataError("reset: could not sample a solvable layout");
}

inline double wrap_angle(double a) {
    while (a > std::numbers::pi) a -= 2 * std::numbers::pi;
    while (a < -std::numbers::pi) a += 2 * std::numbers::pi;
    return a;
}

inline WorldState step(const WorldState& prev, const ActionVector& action,
                       double step_scale) {
    action.validate();
    WorldState s = prev;
    s.agent_pos.x = std::clamp(s.agent_pos.x + step_scale * action.delta_pos[0],
                               kAgentMargin, 1.0 - kAgentMargin);
    s.agent_pos.y = std::clamp(s.agent_pos.y + step_scale * action.delta_pos[1],
                               kAgentMargin, 1.0 - kAgentMargin);
    s.agent_rot = wrap_angle(s.agent_rot + kRotScale * action.delta_rot);
    if (s.held_block) s.blocks[std::size_t(*s.held_block)].pos = s.agent_pos;

    if (action.grip == 1 && !s.grip_closed) {
        s.grip_closed = true;
        int best = -1;
        double best_d = kGrabRadius;
        for (int i = 0; i < 3; ++i) {
            double d = (s.blocks[std::size_t(i)].pos - s.agent_pos).norm();
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        if (best >= 0) {
            s.held_block = best;
            s.blocks[std::size_t(best)].pos = s.agent_pos;  // held tracks agent exactly
        }
    } else if (action.grip == 0 && s.grip_closed) {
        s.grip_closed = false;
        s.held_block.reset();
    }
    ++s.step_count;
    if (!s.succeeded && task_success_now(s)) s.succeeded = true;
    return s;
}

// --- rendering -------------------------------------------------------------

namespace colors {
inline constexpr double background[3] = {0.12, 0.12, 0.14};
inline constexpr double goal_ring[3] = {0.10, 0.85, 0.90};
inline constexpr double block[3][3] = {{0.95, 0.15, 0.10},   // red
                                       {0.10, 0.90, 0.15},   // green
                                       {0.15, 0.25, 0.95}};  // blue
inline constexpr double agent[3] = {0.95, 0.85, 0.20};
inline constexpr double tick[3] = {1.0, 1.0, 1.0};
}  // namespace colors

inline Frame render(const WorldState& s, int height, int width) {
    Frame f = Frame::zeros(height, width, 3);
    double px = double(width);  // pixels per world unit (square world)
    auto blend = [&](int y, int x, const double rgb[3], double alpha) {
        if (alpha <= 0) return;
        for (int c = 0; c < 3; ++c)
            f.at(y, x, c) = f.at(y, x, c) * (1 - alpha) + rgb[c] * alpha;
    };
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) f.at(y, x, c) = colors::background[c];

    auto aa = [&](double signed_dist) {  // 1-pixel smooth edge
        return std::clamp(0.5 - signed_dist * px, 0.0, 1.0);
    };

    Vec2 tick_end{s.agent_pos.x + std::cos(s.agent_rot) * kTickLen,
                  s.agent_pos.y + std::sin(s.agent_rot) * kTickLen};
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            Vec2 p{(x + 0.5) / px, (y + 0.5) / px};
            // goal ring
            double dring = std::abs((p - s.goal_center).norm() - kGoalRadius) - kRingWidth;
            blend(y, x, colors::goal_ring, aa(dring));
            // blocks (axis-aligned squares)
            for (int b = 0; b < 3; ++b) {
                Vec2 d = p - s.blocks[std::size_t(b)].pos;
                double dsq = std::max(std::abs(d.x), std::abs(d.y)) - kBlockHalf;
                blend(y, x, colors::block[b], aa(dsq));
            }
            // agent disc
            double dag = (p - s.agent_pos).norm() - kAgentRadius;
            blend(y, x, colors::agent, aa(dag));
            // orientation tick: distance to the center->tick_end segment
            Vec2 seg = tick_end - s.agent_pos;
            double len2 = seg.dot(seg);
            double t = len2 > 0 ? std::clamp((p - s.agent_pos).dot(seg) / len2, 0.0, 1.0) : 0.0;
            double dtick = (p - (s.agent_pos + seg * t)).norm() - 0.5 / px;
            blend(y, x, colors::tick, aa(dtick));
        }
    // 8-bit quantization: rendered frames match their PNG round-trip exactly
    for (double& v : f.pixels) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    return f;
}

// --- scripted expert -------------------------------------------------------

inline ActionVector scripted_expert(const WorldState& s, double step_scale) {
    auto clip1 = [](double v) { return std::clamp(v, -1.0, 1.0); };
    if (s.succeeded) return ActionVector{};  // hold still once done

    int bid = int(s.task.target_color);
    const Vec2 block_pos = s.blocks[std::size_t(bid)].pos;
    Vec2 target_point = s.task.kind == TaskKind::move_direction
                            ? s.block_start[std::size_t(bid)] +
                                  direction_vector(s.task.direction) * kMoveDist
                            : s.goal_center;
    bool holding = s.held_block && *s.held_block == bid;

    Vec2 goal = holding ? target_point : block_pos;
    Vec2 d = goal - s.agent_pos;
    double dist = d.norm();

    ActionVector a;
    a.delta_pos[0] = clip1(d.x / step_scale);
    a.delta_pos[1] = clip1(d.y / step_scale);
    if (holding) {
        a.grip = dist <= kReleaseTol ? 0 : 1;
    } else {
        a.grip = dist <= kGrabRadius * 0.7 ? 1 : 0;
    }
    if (dist > 0.02) {
        double desired = std::atan2(d.y, d.x);
        a.delta_rot = clip1(wrap_angle(desired - s.agent_rot) / kRotScale);
    }
    return a;
}

// --- dataset generation ----------------------------------------------------

// `mixed` flips a per-episode coin between expert and random: an unsupervised
// video corpus where the next frame is not predictable from the current one
// alone, which forces information through the motion codes.
enum class PolicyKind { expert, random, corrupted_expert, mixed };

inline PolicyKind policy_kind_from_string(const std::string& s) {
    if (s == "expert") return PolicyKind::expert;
    if (s == "random") return PolicyKind::random;
    if (s == "corrupted-expert") return PolicyKind::corrupted_expert;
    if (s == "mixed") return PolicyKind::mixed;
    throw ConfigError("unknown policy kind: " + s);
}

inline ActionVector random_action(Rng& rng) {
    ActionVector a;
    a.delta_pos[0] = rng.uniform(-1.0, 1.0);
    a.delta_pos[1] = rng.uniform(-1.0, 1.0);
    a.delta_rot = rng.uniform(-1.0, 1.0);
    a.grip = rng.bernoulli(0.3) ? 1 : 0;
    return a;
}

struct RolledEpisode {
    Episode episode;
    std::uint64_t seed = 0;
};

// One scripted rollout: frames every control step, downsampled by N, with all
// control-step actions kept (N per retained transition).
inline RolledEpisode roll_episode(const ExperimentConfig& cfg, const Vocab& vocab,
                                  std::uint64_t episode_seed, PolicyKind kind,
                                  std::optional<int> forced_class = std::nullopt) {
    Rng rng(episode_seed);
    int class_id = forced_class ? *forced_class : rng.child(1).index(kNumTaskClasses);
    Task task = task_from_class(class_id);
    WorldState s = reset(rng.child(2).next_u64(), task);
    Rng act_rng = rng.child(3);
    PolicyKind effective = kind;
    if (kind == PolicyKind::mixed) {
        effective = rng.child(4).next_u64() % 2 == 0 ? PolicyKind::expert : PolicyKind::random;
    }

    std::vector<Frame> raw;
    raw.push_back(render(s, cfg.frame.height, cfg.frame.width));
    std::vector<ActionVector> actions;
    int half = cfg.world.control_steps / 2;
    for (int t = 0; t < cfg.world.control_steps; ++t) {
        ActionVector a;
        switch (effective) {
            case PolicyKind::expert: a = scripted_expert(s, cfg.world.step_scale); break;
            case PolicyKind::random: a = random_action(act_rng); break;
            case PolicyKind::corrupted_expert:
                a = t < half ? scripted_expert(s, cfg.world.step_scale)
                             : random_action(act_rng);
                break;
            case PolicyKind::mixed: throw ConfigError("mixed must resolve before the loop");
        }
        s = step(s, a, cfg.world.step_scale);
        raw.push_back(render(s, cfg.frame.height, cfg.frame.width));
        actions.push_back(a);
    }

    RolledEpisode out;
    out.seed = episode_seed;
    out.episode.instruction =
        vocab.make_instruction(instruction_text(task), cfg.frozen.max_prompt_len);
    out.episode.clip = downsample_clip(raw, cfg.finetune.n_actions_per_transition);
    out.episode.actions = std::move(actions);
    out.episode.success = s.succeeded;
    out.episode.task_label = class_id;
    return out;
}

inline DatasetManifest generate_dataset(const ExperimentConfig& cfg, const Vocab& vocab,
                                        int n_episodes, std::uint64_t seed, PolicyKind kind,
                                        const std::filesystem::path& root,
                                        const std::string& split,
                                        std::optional<int> forced_class = std::nullopt) {
    Rng rng(seed);
    std::vector<Episode> episodes;
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < n_episodes; ++i) {
        std::uint64_t ep_seed = rng.child(std::uint64_t(i) + 1).next_u64();
        RolledEpisode r = roll_episode(cfg, vocab, ep_seed, kind, forced_class);
        episodes.push_back(std::move(r.episode));
        seeds.push_back(r.seed);
    }
    return save_dataset(episodes, seeds, root, cfg.finetune.n_actions_per_transition, seed,
                        split);
}

// --- closed-loop policy evaluation ----------------------------------------

using Policy = std::function<std::vector<ActionVector>(const Instruction&, const Frame&)>;

struct EpisodeOutcome {
    int episode = 0;
    std::uint64_t seed = 0;
    int task_label = 0;
    bool success = false;
    int steps = 0;
};

inline EpisodeOutcome run_policy_episode(const ExperimentConfig& cfg, const Vocab& vocab,
                                         std::uint64_t episode_seed, const Policy& policy) {
    Rng rng(episode_seed);
    int class_id = rng.child(1).index(kNumTaskClasses);
    Task task = task_from_class(class_id);
    WorldState s = reset(rng.child(2).next_u64(), task);
    Instruction instr =
        vocab.make_instruction(instruction_text(task), cfg.frozen.max_prompt_len);

    EpisodeOutcome out;
    out.seed = episode_seed;
    out.task_label = class_id;
    int n = cfg.finetune.n_actions_per_transition;
    while (s.step_count < cfg.world.max_episode_steps && !s.succeeded) {
        Frame frame = render(s, cfg.frame.height, cfg.frame.width);
        std::vector<ActionVector> actions = policy(instr, frame);
        if (int(actions.size()) != n)
            throw ModelError("policy returned wrong number of actions");
        for (const auto& a : actions) {
            s = step(s, a, cfg.world.step_scale);
            if (s.succeeded || s.step_count >= cfg.world.max_episode_steps) break;
        }
    }
    out.success = s.succeeded;
    out.steps = s.step_count;
    return out;
}

struct PolicyEvalReport {
    double success_rate = 0.0;
    std::vector<EpisodeOutcome> outcomes;
};

inline PolicyEvalReport evaluate_policy(const ExperimentConfig& cfg, const Vocab& vocab,
                                        int n_episodes, std::uint64_t seed,
                                        const Policy& policy) {
    Rng rng(seed);
    PolicyEvalReport rep;
    int wins = 0;
    for (int i = 0; i < n_episodes; ++i) {
        std::uint64_t ep_seed = rng.child(std::uint64_t(i) + 1).next_u64();
        EpisodeOutcome o = run_policy_episode(cfg, vocab, ep_seed, policy);
        o.episode = i;
        wins += o.success ? 1 : 0;
        rep.outcomes.push_back(o);
    }
    rep.success_rate = double(wins) / double(n_episodes);
    return rep;
}

// --- model-free measurement oracles ----------------------------------------

// Centroid of the agent's (yellow) color mask, in pixel coordinates.
inline Vec2 agent_centroid(const Frame& f) {
    double wsum = 0, xs = 0, ys = 0;
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            double r = f.at(y, x, 0), g = f.at(y, x, 1), b = f.at(y, x, 2);
            double w = std::max(0.0, std::min(r, g) - b - 0.15);  // yellow = r&g, low b
            wsum += w;
            xs += w * x;
            ys += w * y;
        }
    if (wsum <= 0) return {0, 0};
    return {xs / wsum, ys / wsum};
}

// Centroid of one block color's mask (0 red, 1 green, 2 blue).
inline Vec2 block_centroid(const Frame& f, int color) {
    double wsum = 0, xs = 0, ys = 0;
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            double c[3] = {f.at(y, x, 0), f.at(y, x, 1), f.at(y, x, 2)};
            double others = std::max(c[(color + 1) % 3], c[(color + 2) % 3]);
            double w = std::max(0.0, c[color] - others - 0.2);
            wsum += w;
            xs += w * x;
            ys += w * y;
        }
    if (wsum <= 0) return {0, 0};
    return {xs / wsum, ys / wsum};
}

}  // namespace moto::world

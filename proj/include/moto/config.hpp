// Experiment configuration: one JSON document, strict unknown-key rejection,
// dotted-path overrides, full resolved echo.
#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <string>

#include "moto/mat.hpp"

namespace moto {

using Json = nlohmann::json;

struct TrainConfig {
    int batch = 12;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    int warmup_steps = 50;
    int steps = 1000;
    double min_lr_frac = 0.1;
    double grad_clip = 1.0;
};

struct ExperimentConfig {
    std::uint64_t seed = 7;

    struct {
        int height = 32, width = 32, channels = 3, patch = 4;
    } frame;

    struct {
        int feature_dim = 64;     // D for both patch and text features
        int max_prompt_len = 8;   // L_l
        std::uint64_t seed = 1;   // frozen-weight seed, recorded in checkpoints
    } frozen;

    struct {
        int num_queries = 8;    // K
        int codebook_size = 32; // V
        int code_dim = 16;      // d_code
        int mformer_layers = 2;
        int decoder_layers = 2;
        int heads = 4;
        int hidden = 64;
        double beta = 0.25;     // commitment weight
    } tokenizer;

    struct {
        int layers = 4;
        int heads = 4;
        int hidden = 128;
        int max_transitions = 4;  // max T per training sequence
    } gpt;

    struct {
        int n_actions_per_transition = 3;  // N
        double motion_dropout_prob = 0.5;
        std::string ablation_mode = "full";  // full | iml | dm | scratch
        int action_head_hidden = 64;
        double motion_loss_weight = 1.0;  // Eq. 3 uses unweighted sums
        double action_loss_weight = 1.0;
        double smooth_l1_delta = 1.0;  // transition point, normalized action units
    } finetune;

    struct {
        double step_scale = 0.14;   // world units per unit delta_pos
        int control_steps = 12;     // control steps per episode
        int max_episode_steps = 24; // closed-loop budget for evaluate_policy
    } world;

    TrainConfig train_tokenizer;
    TrainConfig train_pretrain;
    TrainConfig train_finetune;

    struct {
        int probe_steps = 2000;
        double probe_lr = 0.5;
    } eval;

    static const std::set<std::string>& ablation_modes() {
        static const std::set<std::string> m{"full", "iml", "dm", "scratch"};
        return m;
    }

    void validate() const {
        auto positive = [](long v, const char* name) {
            if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
        };
        positive(frame.height, "frame.height");
        positive(frame.width, "frame.width");
        positive(frame.channels, "frame.channels");
        positive(frame.patch, "frame.patch");
        if (frame.height % frame.patch || frame.width % frame.patch)
            throw ConfigError("frame dims must be divisible by frame.patch");
        positive(frozen.feature_dim, "frozen.feature_dim");
        positive(frozen.max_prompt_len, "frozen.max_prompt_len");
        positive(tokenizer.num_queries, "tokenizer.num_queries");
        positive(tokenizer.codebook_size, "tokenizer.codebook_size");
        positive(tokenizer.code_dim, "tokenizer.code_dim");
        positive(tokenizer.mformer_layers, "tokenizer.mformer_layers");
        positive(tokenizer.decoder_layers, "tokenizer.decoder_layers");
        positive(tokenizer.heads, "tokenizer.heads");
        positive(tokenizer.hidden, "tokenizer.hidden");
        if (tokenizer.hidden % tokenizer.heads)
            throw ConfigError("tokenizer.hidden must be divisible by tokenizer.heads");
        if (tokenizer.beta < 0) throw ConfigError("tokenizer.beta must be >= 0");
        positive(gpt.layers, "gpt.layers");
        positive(gpt.heads, "gpt.heads");
        positive(gpt.hidden, "gpt.hidden");
        if (gpt.hidden % gpt.heads)
            throw ConfigError("gpt.hidden must be divisible by gpt.heads");
        positive(gpt.max_transitions, "gpt.max_transitions");
        positive(finetune.n_actions_per_transition, "finetune.n_actions_per_transition");
        if (finetune.motion_dropout_prob < 0 || finetune.motion_dropout_prob > 1)
            throw ConfigError("finetune.motion_dropout_prob must be in [0,1]");
        if (!ablation_modes().count(finetune.ablation_mode))
            throw ConfigError("finetune.ablation_mode must be one of full|iml|dm|scratch");
        positive(finetune.action_head_hidden, "finetune.action_head_hidden");
        if (finetune.motion_loss_weight < 0 || finetune.action_loss_weight < 0)
            throw ConfigError("finetune loss weights must be >= 0");
        if (finetune.smooth_l1_delta <= 0)
            throw ConfigError("finetune.smooth_l1_delta must be positive");
        if (world.step_scale <= 0) throw ConfigError("world.step_scale must be positive");
        positive(world.control_steps, "world.control_steps");
        positive(world.max_episode_steps, "world.max_episode_steps");
        if (world.control_steps % finetune.n_actions_per_transition)
            throw ConfigError(
                "world.control_steps must be divisible by finetune.n_actions_per_transition");
        for (const TrainConfig* t : {&train_tokenizer, &train_pretrain, &train_finetune}) {
            if (t->batch <= 0 || t->steps <= 0 || t->lr <= 0)
                throw ConfigError("train config needs positive batch/steps/lr");
            if (t->warmup_steps < 0 || t->min_lr_frac < 0 || t->min_lr_frac > 1)
                throw ConfigError("train config warmup/min_lr_frac out of range");
        }
        positive(eval.probe_steps, "eval.probe_steps");
        if (eval.probe_lr <= 0) throw ConfigError("eval.probe_lr must be positive");
    }

    Json to_json() const {
        Json j;
        j["seed"] = seed;
        j["frame"] = {{"height", frame.height},
                      {"width", frame.width},
                      {"channels", frame.channels},
                      {"patch", frame.patch}};
        j["frozen"] = {{"feature_dim", frozen.feature_dim},
                       {"max_prompt_len", frozen.max_prompt_len},
                       {"seed", frozen.seed}};
        j["tokenizer"] = {{"num_queries", tokenizer.num_queries},
                          {"codebook_size", tokenizer.codebook_size},
                          {"code_dim", tokenizer.code_dim},
                          {"mformer_layers", tokenizer.mformer_layers},
                          {"decoder_layers", tokenizer.decoder_layers},
                          {"heads", tokenizer.heads},
                          {"hidden", tokenizer.hidden},
                          {"beta", tokenizer.beta}};
        j["gpt"] = {{"layers", gpt.layers},
                    {"heads", gpt.heads},
                    {"hidden", gpt.hidden},
                    {"max_transitions", gpt.max_transitions}};
        j["finetune"] = {{"n_actions_per_transition", finetune.n_actions_per_transition},
                         {"motion_dropout_prob", finetune.motion_dropout_prob},
                         {"ablation_mode", finetune.ablation_mode},
                         {"action_head_hidden", finetune.action_head_hidden},
                         {"motion_loss_weight", finetune.motion_loss_weight},
                         {"action_loss_weight", finetune.action_loss_weight},
                         {"smooth_l1_delta", finetune.smooth_l1_delta}};
        j["world"] = {{"step_scale", world.step_scale},
                      {"control_steps", world.control_steps},
                      {"max_episode_steps", world.max_episode_steps}};
        auto tc = [](const TrainConfig& t) {
            return Json{{"batch", t.batch},         {"lr", t.lr},
                        {"weight_decay", t.weight_decay}, {"warmup_steps", t.warmup_steps},
                        {"steps", t.steps},         {"min_lr_frac", t.min_lr_frac},
                        {"grad_clip", t.grad_clip}};
        };
        j["train_tokenizer"] = tc(train_tokenizer);
        j["train_pretrain"] = tc(train_pretrain);
        j["train_finetune"] = tc(train_finetune);
        j["eval"] = {{"probe_steps", eval.probe_steps}, {"probe_lr", eval.probe_lr}};
        return j;
    }

    static ExperimentConfig from_json(const Json& j) {
        ExperimentConfig cfg;  // defaults
        Json base = cfg.to_json();
        merge_checked(base, j, "");
        cfg = parse_resolved(base);
        cfg.validate();
        return cfg;
    }

    static ExperimentConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path.string());
        Json j;
        try {
            j = Json::parse(in);
        } catch (const Json::parse_error& e) {
            throw ConfigError("config parse error: " + std::string(e.what()));
        }
        return from_json(j);
    }

    // "a.b.c=value" — value parsed as JSON scalar when possible, else string.
    static void apply_set(Json& doc, const std::string& assignment) {
        auto eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("--set expects path=value, got: " + assignment);
        std::string path = assignment.substr(0, eq);
        std::string val = assignment.substr(eq + 1);
        Json parsed;
        try {
            parsed = Json::parse(val);
            if (!parsed.is_primitive()) parsed = val;
        } catch (const Json::parse_error&) {
            parsed = val;
        }
        Json* node = &doc;
        std::size_t start = 0;
        while (true) {
            auto dot = path.find('.', start);
            std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
            if (key.empty()) throw ConfigError("bad --set path: " + path);
            if (dot == std::string::npos) {
                (*node)[key] = parsed;
                return;
            }
            node = &(*node)[key];
            start = dot + 1;
        }
    }

private:
    // Overlays `patch` onto `base`, rejecting keys absent from base (defaults
    // define the full schema) and scalar/object kind mismatches.
    static void merge_checked(Json& base, const Json& patch, const std::string& prefix) {
        if (!patch.is_object())
            throw ConfigError("config section must be an object: " +
                              (prefix.empty() ? "<root>" : prefix));
        for (const auto& [key, val] : patch.items()) {
            std::string full = prefix.empty() ? key : prefix + "." + key;
            if (!base.contains(key)) throw ConfigError("unknown config key: " + full);
            if (base[key].is_object()) {
                merge_checked(base[key], val, full);
            } else {
                if (val.is_object() || val.is_array())
                    throw ConfigError("config key expects a scalar: " + full);
                base[key] = val;
            }
        }
    }

    static ExperimentConfig parse_resolved(const Json& j) {
        ExperimentConfig c;
        try {
            c.seed = j.at("seed").get<std::uint64_t>();
            c.frame.height = j.at("frame").at("height").get<int>();
            c.frame.width = j.at("frame").at("width").get<int>();
            c.frame.channels = j.at("frame").at("channels").get<int>();
            c.frame.patch = j.at("frame").at("patch").get<int>();
            c.frozen.feature_dim = j.at("frozen").at("feature_dim").get<int>();
            c.frozen.max_prompt_len = j.at("frozen").at("max_prompt_len").get<int>();
            c.frozen.seed = j.at("frozen").at("seed").get<std::uint64_t>();
            c.tokenizer.num_queries = j.at("tokenizer").at("num_queries").get<int>();
            c.tokenizer.codebook_size = j.at("tokenizer").at("codebook_size").get<int>();
            c.tokenizer.code_dim = j.at("tokenizer").at("code_dim").get<int>();
            c.tokenizer.mformer_layers = j.at("tokenizer").at("mformer_layers").get<int>();
            c.tokenizer.decoder_layers = j.at("tokenizer").at("decoder_layers").get<int>();
            c.tokenizer.heads = j.at("tokenizer").at("heads").get<int>();
            c.tokenizer.hidden = j.at("tokenizer").at("hidden").get<int>();
            c.tokenizer.beta = j.at("tokenizer").at("beta").get<double>();
            c.gpt.layers = j.at("gpt").at("layers").get<int>();
            c.gpt.heads = j.at("gpt").at("heads").get<int>();
            c.gpt.hidden = j.at("gpt").at("hidden").get<int>();
            c.gpt.max_transitions = j.at("gpt").at("max_transitions").get<int>();
            c.finetune.n_actions_per_transition =
                j.at("finetune").at("n_actions_per_transition").get<int>();
            c.finetune.motion_dropout_prob =
                j.at("finetune").at("motion_dropout_prob").get<double>();
            c.finetune.ablation_mode = j.at("finetune").at("ablation_mode").get<std::string>();
            c.finetune.action_head_hidden = j.at("finetune").at("action_head_hidden").get<int>();
            c.finetune.motion_loss_weight =
                j.at("finetune").at("motion_loss_weight").get<double>();
            c.finetune.action_loss_weight =
                j.at("finetune").at("action_loss_weight").get<double>();
            c.finetune.smooth_l1_delta = j.at("finetune").at("smooth_l1_delta").get<double>();
            c.world.step_scale = j.at("world").at("step_scale").get<double>();
            c.world.control_steps = j.at("world").at("control_steps").get<int>();
            c.world.max_episode_steps = j.at("world").at("max_episode_steps").get<int>();
            auto tc = [](const Json& t) {
                TrainConfig out;
                out.batch = t.at("batch").get<int>();
                out.lr = t.at("lr").get<double>();
                out.weight_decay = t.at("weight_decay").get<double>();
                out.warmup_steps = t.at("warmup_steps").get<int>();
                out.steps = t.at("steps").get<int>();
                out.min_lr_frac = t.at("min_lr_frac").get<double>();
                out.grad_clip = t.at("grad_clip").get<double>();
                return out;
            };
            c.train_tokenizer = tc(j.at("train_tokenizer"));
            c.train_pretrain = tc(j.at("train_pretrain"));
            c.train_finetune = tc(j.at("train_finetune"));
            c.eval.probe_steps = j.at("eval").at("probe_steps").get<int>();
            c.eval.probe_lr = j.at("eval").at("probe_lr").get<double>();
        } catch (const Json::exception& e) {
            throw ConfigError("config field type error: " + std::string(e.what()));
        }
        return c;
    }
};

}  // namespace moto

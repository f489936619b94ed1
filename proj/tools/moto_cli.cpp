// moto: desk-scale latent-motion pipeline driver.
// Subcommands cover dataset generation, the three training stages, and every
// evaluation. Each run writes an append-only directory with the resolved
// config, JSONL metrics, checkpoints, and reports.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "moto/checkpoint.hpp"
#include "moto/evals.hpp"
#include "moto/metrics.hpp"
#include "moto/train.hpp"
#include "moto/world.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::string run_name;
    std::string runs_root;
    bool single_thread = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "JSON config file");
    cmd->add_option("--set", o.sets, "dotted config override, e.g. --set gpt.layers=4")
        ->take_all();
    cmd->add_option("--run", o.run_name, "run directory name (default: subcommand)");
    cmd->add_option("--runs-root", o.runs_root, "runs root (default: $MOTO_RUNS_DIR or ./runs)");
    cmd->add_flag("--single-thread", o.single_thread,
                  "pin execution to one thread for bit-exact reruns");
}

moto::ExperimentConfig resolve_config(const CommonOpts& o) {
    json doc = json::object();
    if (!o.config_path.empty()) {
        auto bytes = moto::read_file_bytes(o.config_path);
        doc = json::parse(bytes.begin(), bytes.end(), nullptr, false);
        if (doc.is_discarded())
            throw moto::ConfigError("config file is not valid JSON: " + o.config_path);
    }
    for (const auto& s : o.sets) moto::ExperimentConfig::apply_set(doc, s);  // flags win
    return moto::ExperimentConfig::from_json(doc);
}

fs::path prepare_run_dir(const CommonOpts& o, const std::string& default_name,
                         const moto::ExperimentConfig& cfg, const std::string& command) {
    fs::path root = !o.runs_root.empty() ? fs::path(o.runs_root)
                    : std::getenv("MOTO_RUNS_DIR") ? fs::path(std::getenv("MOTO_RUNS_DIR"))
                                                   : fs::path("runs");
    fs::path dir = root / (o.run_name.empty() ? default_name : o.run_name);
    if (fs::exists(dir / "config.json"))
        throw moto::ConfigError("run directory already used: " + dir.string() +
                                " (runs are append-only; pick a fresh --run)");
    fs::create_directories(dir);
    auto dump = [&](const fs::path& p, const json& j) {
        std::string s = j.dump(2);
        s.push_back('\n');
        moto::write_file_bytes(p, std::vector<std::uint8_t>(s.begin(), s.end()));
    };
    dump(dir / "config.json", cfg.to_json());  // fully resolved, diff-able
    dump(dir / "run.json", {{"command", command}, {"single_thread", o.single_thread}});
    return dir;
}

void write_json_report(const fs::path& path, const json& j) {
    std::string s = j.dump(2);
    s.push_back('\n');
    moto::write_file_bytes(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

std::vector<moto::Episode> load_all_episodes(const fs::path& root) {
    moto::LoadedDataset ds(root);
    std::vector<moto::Episode> out;
    out.reserve(std::size_t(ds.size()));
    for (int i = 0; i < ds.size(); ++i) out.push_back(ds.load_episode(i));
    return out;
}

// Derived seeds: one root stream per config seed, fixed child ids per purpose.
struct StageSeeds {
    std::uint64_t tokenizer_init, tokenizer_data;
    std::uint64_t gpt_init, pretrain_data;
    std::uint64_t head_init, finetune_data, scratch_init;
    explicit StageSeeds(std::uint64_t seed) {
        moto::Rng root(seed);
        tokenizer_init = root.child(11).next_u64();
        tokenizer_data = root.child(12).next_u64();
        gpt_init = root.child(21).next_u64();
        pretrain_data = root.child(22).next_u64();
        head_init = root.child(31).next_u64();
        finetune_data = root.child(32).next_u64();
        scratch_init = root.child(33).next_u64();
    }
};

// Models keep pointers into `frozen`, so the pieces live behind unique_ptrs.
struct Stack {
    moto::ExperimentConfig cfg;
    moto::Vocab vocab;
    std::unique_ptr<moto::FrozenFeatureExtractor> frozen;
    std::unique_ptr<moto::MotionTokenizer> tokenizer;
    std::unique_ptr<moto::MotoGpt> gpt;
    std::unique_ptr<moto::ActionHead> head;
};

Stack make_stack(const moto::ExperimentConfig& cfg) {
    Stack s;
    s.cfg = cfg;
    s.frozen = std::make_unique<moto::FrozenFeatureExtractor>(s.cfg, s.vocab);
    return s;
}

void check_frozen_hash(const Stack& s, const json& manifest, const std::string& what) {
    if (!manifest.contains("frozen_hash")) return;
    if (manifest.at("frozen_hash").get<std::uint32_t>() != s.frozen->weight_hash())
        throw moto::CheckpointError(
            what + ": frozen-feature hash mismatch (checkpoint was built against a "
                   "different frame/frozen config)");
}

void check_kind(const json& manifest, std::initializer_list<const char*> allowed,
                const std::string& path) {
    std::string kind = manifest.value("kind", "");
    for (const char* a : allowed)
        if (kind == a) return;
    throw moto::CheckpointError("checkpoint at " + path + " has kind '" + kind +
                                "', expected one of the requested stage kinds");
}

// Tokenizer built from the checkpoint's own config so dimensions always agree.
Stack load_tokenizer_stack(const fs::path& ckpt) {
    json manifest = moto::load_checkpoint_manifest(ckpt);
    check_kind(manifest, {"tokenizer"}, ckpt.string());
    Stack s = make_stack(moto::ExperimentConfig::from_json(manifest.at("config")));
    s.tokenizer = std::make_unique<moto::MotionTokenizer>(s.cfg, *s.frozen, 0);
    moto::load_checkpoint(ckpt, s.tokenizer->store);
    check_frozen_hash(s, manifest, ckpt.string());
    return s;
}

void add_gpt(Stack& s, std::uint64_t init_seed, bool with_head, std::uint64_t head_seed) {
    s.gpt = std::make_unique<moto::MotoGpt>(s.cfg, init_seed);
    if (with_head) {
        moto::Rng hr(head_seed);
        s.head = std::make_unique<moto::ActionHead>(moto::ActionHead::create(
            s.gpt->store, "policy.head", s.cfg.gpt.hidden, s.cfg.finetune.action_head_hidden,
            hr));
    }
}

json save_stage_checkpoint(const fs::path& dir, const moto::nn::ParamStore& store,
                           const Stack& s, json extra) {
    extra["frozen_hash"] = s.frozen->weight_hash();
    moto::save_checkpoint(dir, store, s.cfg, extra);
    return extra;
}

// --- subcommand bodies ------------------------------------------------------

int cmd_gen_data(const CommonOpts& common, int episodes, std::uint64_t seed,
                 const std::string& policy, const std::string& split,
                 std::optional<int> forced_class, std::string out) {
    moto::ExperimentConfig cfg = resolve_config(common);
    fs::path run = prepare_run_dir(common, "gen-data", cfg, "gen-data");
    moto::world::PolicyKind kind = moto::world::policy_kind_from_string(policy);
    fs::path root = out.empty() ? run / "dataset" : fs::path(out);
    moto::Vocab vocab;
    moto::DatasetManifest man =
        moto::world::generate_dataset(cfg, vocab, episodes, seed, kind, root, split,
                                      forced_class);
    int successes = 0;
    for (const auto& e : man.episodes) successes += e.success ? 1 : 0;
    write_json_report(run / "report.json",
                      {{"dataset", root.string()},
                       {"episodes", man.episodes.size()},
                       {"policy", policy},
                       {"split", split},
                       {"seed", seed},
                       {"success_rate", double(successes) / double(man.episodes.size())}});
    std::cout << "wrote " << man.episodes.size() << " episodes to " << root << "\n";
    return 0;
}

int cmd_train_tokenizer(const CommonOpts& common, const std::string& data,
                        const std::string& resume) {
    moto::ExperimentConfig cfg = resolve_config(common);
    fs::path run = prepare_run_dir(common, "train-tokenizer", cfg, "train-tokenizer");
    StageSeeds seeds(cfg.seed);

    Stack s = make_stack(cfg);
    s.tokenizer = std::make_unique<moto::MotionTokenizer>(s.cfg, *s.frozen,
                                                          seeds.tokenizer_init);
    if (!resume.empty()) moto::load_checkpoint(resume, s.tokenizer->store);

    auto episodes = load_all_episodes(data);
    moto::JsonlWriter log(run / "metrics.jsonl");
    moto::TokenizerLossReport last = moto::train_tokenizer_loop(
        *s.tokenizer, episodes, cfg.train_tokenizer, seeds.tokenizer_data,
        [&](const json& j) { log.append(j); });
    log.flush();

    moto::CodebookStats stats = moto::measure_codebook_usage(*s.tokenizer, episodes);
    save_stage_checkpoint(run / "checkpoint", s.tokenizer->store, s,
                          {{"kind", "tokenizer"},
                           {"step", cfg.train_tokenizer.steps},
                           {"loss", last.total}});
    write_json_report(run / "report.json", {{"dataset", data},
                                            {"final_loss", last.total},
                                            {"final_recon_mse", last.recon_mse},
                                            {"codebook_perplexity", stats.perplexity},
                                            {"dead_codes", stats.dead_codes},
                                            {"checkpoint", (run / "checkpoint").string()}});
    std::cout << "tokenizer trained: loss " << last.total << ", perplexity "
              << stats.perplexity << "\n";
    return 0;
}

int cmd_pretrain(const CommonOpts& common, const std::string& data,
                 const std::string& tokenizer_ckpt, const std::string& resume) {
    moto::ExperimentConfig cfg = resolve_config(common);
    fs::path run = prepare_run_dir(common, "pretrain", cfg, "pretrain");
    StageSeeds seeds(cfg.seed);

    Stack s = load_tokenizer_stack(tokenizer_ckpt);
    // training hyperparameters come from the CLI config; dims from the tokenizer
    s.cfg.train_pretrain = cfg.train_pretrain;
    s.cfg.seed = cfg.seed;
    add_gpt(s, seeds.gpt_init, false, 0);
    if (!resume.empty()) moto::load_checkpoint(resume, s.gpt->store);

    auto episodes = load_all_episodes(data);
    auto corpus = moto::build_pretrain_corpus(*s.tokenizer, *s.gpt, episodes);
    moto::JsonlWriter log(run / "metrics.jsonl");
    double loss = moto::pretrain_loop(*s.gpt, corpus, s.cfg.train_pretrain,
                                      seeds.pretrain_data,
                                      [&](const json& j) { log.append(j); });
    log.flush();

    save_stage_checkpoint(run / "checkpoint", s.gpt->store, s,
                          {{"kind", "moto-gpt"},
                           {"step", s.cfg.train_pretrain.steps},
                           {"loss", loss},
                           {"tokenizer_checkpoint", tokenizer_ckpt}});
    write_json_report(run / "report.json", {{"dataset", data},
                                            {"final_loss", loss},
                                            {"sequences", corpus.size()},
                                            {"checkpoint", (run / "checkpoint").string()}});
    std::cout << "pretrained: final loss " << loss << "\n";
    return 0;
}

std::vector<moto::Episode> take_fraction(std::vector<moto::Episode> eps, double fraction) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw moto::ConfigError("label fraction must be in (0, 1]");
    std::size_t keep = std::max<std::size_t>(
        1, std::size_t(std::lround(fraction * double(eps.size()))));
    eps.resize(std::min(eps.size(), keep));
    return eps;
}

int cmd_finetune(const CommonOpts& common, const std::string& data,
                 const std::string& tokenizer_ckpt, const std::string& pretrained,
                 std::string mode, double label_fraction, const std::string& resume) {
    moto::ExperimentConfig cfg = resolve_config(common);
    if (mode.empty()) mode = cfg.finetune.ablation_mode;
    moto::FinetunePlan plan = moto::plan_for_mode(mode);
    if (mode == "scratch" && !pretrained.empty())
        throw moto::ConfigError(
            "finetune.ablation_mode: scratch contradicts --pretrained (scratch trains from "
            "random initialization)");
    if (mode != "scratch" && pretrained.empty() && resume.empty())
        throw moto::ConfigError("finetune.ablation_mode: mode '" + mode +
                                "' requires --pretrained (or --resume)");

    fs::path run = prepare_run_dir(common, "finetune", cfg, "finetune");
    StageSeeds seeds(cfg.seed);

    Stack s = load_tokenizer_stack(tokenizer_ckpt);
    s.cfg.train_finetune = cfg.train_finetune;
    s.cfg.finetune = cfg.finetune;
    s.cfg.finetune.ablation_mode = mode;
    s.cfg.seed = cfg.seed;

    std::uint64_t init = mode == "scratch" ? seeds.scratch_init : seeds.gpt_init;
    add_gpt(s, init, false, 0);
    if (!pretrained.empty()) {
        json pman = moto::load_checkpoint_manifest(pretrained);
        check_kind(pman, {"moto-gpt"}, pretrained);
        check_frozen_hash(s, pman, pretrained);
        moto::load_checkpoint(pretrained, s.gpt->store);
    }
    moto::Rng hr(seeds.head_init);
    s.head = std::make_unique<moto::ActionHead>(moto::ActionHead::create(
        s.gpt->store, "policy.head", s.cfg.gpt.hidden, s.cfg.finetune.action_head_hidden, hr));
    if (!resume.empty()) moto::load_checkpoint(resume, s.gpt->store);

    auto episodes = take_fraction(load_all_episodes(data), label_fraction);
    moto::JsonlWriter log(run / "metrics.jsonl");
    moto::FinetuneLossReport rep = moto::finetune_loop(
        *s.gpt, *s.head, *s.tokenizer, episodes, plan, s.cfg, s.cfg.train_finetune,
        seeds.finetune_data, [&](const json& j) { log.append(j); });
    log.flush();

    save_stage_checkpoint(run / "checkpoint", s.gpt->store, s,
                          {{"kind", "policy"},
                           {"ablation_mode", mode},
                           {"step", s.cfg.train_finetune.steps},
                           {"loss", rep.l_total},
                           {"tokenizer_checkpoint", tokenizer_ckpt}});
    write_json_report(run / "report.json", {{"dataset", data},
                                            {"ablation_mode", mode},
                                            {"label_fraction", label_fraction},
                                            {"episodes_used", episodes.size()},
                                            {"l_total", rep.l_total},
                                            {"l_motion", rep.l_motion},
                                            {"l_action", rep.l_action},
                                            {"checkpoint", (run / "checkpoint").string()}});
    std::cout << "finetuned (" << mode << "): l_total " << rep.l_total << "\n";
    return 0;
}

int cmd_eval_recon(const CommonOpts& common, const std::string& tokenizer_ckpt,
                   const std::string& data) {
    moto::ExperimentConfig cfg = resolve_config(common);
    fs::path run = prepare_run_dir(common, "eval-recon", cfg, "eval-recon");
    Stack s = load_tokenizer_stack(tokenizer_ckpt);
    auto episodes = load_all_episodes(data);
    moto::ReconReport rep = moto::eval_reconstruction(*s.tokenizer, episodes);
    write_json_report(run / "report.json", {{"dataset", data},
                                            {"mean_mse", rep.mean_mse},
                                            {"psnr", rep.psnr},
                                            {"copy_mse", rep.copy_mse},
                                            {"copy_psnr", rep.copy_psnr},
                                            {"n_pairs", rep.n_pairs}});
    std::cout << "recon mse " << rep.mean_mse << " (copy " << rep.copy_mse << "), psnr "
              << rep.psnr << "\n";
    return 0;
}

int cmd_eval_probe(const CommonOpts& common, const std::string& tokenizer_ckpt,
                   const std::string& train_data, const std::string& eval_data) {
    moto::ExperimentConfig cfg = resolve_config(common);
    fs::path run = prepare_run_dir(common, "eval-probe", cfg, "eval-probe");
    Stack s = load_tokenizer_stack(tokenizer_ckpt);
    auto results =
        moto::eval_semantic_probe(*s.tokenizer, load_all_episodes(train_data),
                                  load_all_episodes(eval_data), cfg.eval.probe_steps,
                                  cfg.eval.probe_lr);

    moto::CsvWriter csv(run / "probe.csv",
                        {"representation", "accuracy", "feature_dim", "n_train", "n_eval",
                         "n_classes"});
    json jrep = json::array();
    for (const auto& r : results) {
        csv.row({r.representation, r.accuracy, r.feature_dim, r.n_train, r.n_eval,
                 r.n_classes});
        jrep.push_back({{"representation", r.representation},
                        {"accuracy", r.accuracy},
                        {"feature_dim", r.feature_dim},
                        {"n_train", r.n_train},
                        {"n_eval", r.n_eval},
                        {"n_classes", r.n_classes}});
        std::cout << r.representation << ": " << r.accuracy << "\n";
    }
    write_json_report(run / "report.json",
                      {{"train_data", train_data}, {"eval_data", eval_data},
                       {"probe_steps", cfg.eval.probe_steps}, {"results", jrep}});
    return 0;
}

int cmd_eval_transfer(const CommonOpts& common, const std::string& tokenizer_ckpt,
                      std::uint64_t seed, int frames) {
    moto::ExperimentConfig cfg = resolve_config(common);
    fs::path run = prepare_run_dir(common, "eval-transfer", cfg, "eval-transfer");
    Stack s = load_tokenizer_stack(tokenizer_ckpt);
    moto::TransferReport rep = moto::eval_motion_transfer(*s.tokenizer, s.cfg, seed, frames);
    moto::CsvWriter csv(run / "transfer.csv", {"chunk", "direction", "consistency"});
    static const char* dirs[] = {"up", "down", "left", "right"};
    for (std::size_t c = 0; c < rep.per_chunk_consistency.size(); ++c)
        csv.row({int(c), dirs[c % 4], rep.per_chunk_consistency[c]});
    write_json_report(run / "report.json",
                      {{"seed", seed},
                       {"consistency", rep.consistency},
                       {"discrimination", rep.discrimination},
                       {"per_chunk_consistency", rep.per_chunk_consistency},
                       {"n_chunks", rep.n_chunks},
                       {"n_frames", rep.n_frames}});
    std::cout << "transfer consistency " << rep.consistency << ", discrimination "
              << rep.discrimination << "\n";
    return 0;
}

Stack load_model_stack(const std::string& tokenizer_ckpt, const std::string& model_ckpt,
                       bool with_head) {
    Stack s = load_tokenizer_stack(tokenizer_ckpt);
    json mman = moto::load_checkpoint_manifest(model_ckpt);
    if (with_head)
        check_kind(mman, {"policy"}, model_ckpt);
    else
        check_kind(mman, {"moto-gpt", "policy"}, model_ckpt);
    check_frozen_hash(s, mman, model_ckpt);
    // architecture from the model checkpoint's config (already frozen-hash compatible)
    moto::ExperimentConfig mcfg = moto::ExperimentConfig::from_json(mman.at("config"));
    s.cfg.gpt = mcfg.gpt;
    s.cfg.finetune = mcfg.finetune;
    add_gpt(s, 0, with_head, 1);
    moto::load_checkpoint(model_ckpt, s.gpt->store);
    return s;
}

int cmd_eval_likelihood(const CommonOpts& common, const std::string& tokenizer_ckpt,
                        const std::string& model_ckpt, const std::string& expert,
                        const std::string& corrupted, const std::string& random) {
    moto::ExperimentConfig cfg = resolve_config(common);
    fs::path run = prepare_run_dir(common, "eval-likelihood", cfg, "eval-likelihood");
    Stack s = load_model_stack(tokenizer_ckpt, model_ckpt, false);
    moto::LoadedDataset de(expert), dc(corrupted), dr(random);
    moto::LikelihoodReport rep =
        moto::eval_likelihood_separation(*s.gpt, *s.tokenizer, de, dc, dr);

    moto::CsvWriter csv(run / "curves.csv", {"step", "type", "mean_logl"});
    for (std::size_t t = 0; t < rep.curve_expert.size(); ++t) {
        csv.row({int(t), "expert", rep.curve_expert[t]});
        csv.row({int(t), "corrupted", rep.curve_corrupted[t]});
        csv.row({int(t), "random", rep.curve_random[t]});
    }
    write_json_report(run / "report.json",
                      {{"n_triplets", rep.n_triplets},
                       {"mean_logl_expert", rep.mean_logl_expert},
                       {"mean_logl_corrupted", rep.mean_logl_corrupted},
                       {"mean_logl_random", rep.mean_logl_random},
                       {"win_expert_vs_random", rep.win_expert_vs_random},
                       {"win_expert_vs_corrupted", rep.win_expert_vs_corrupted},
                       {"win_corrupted_vs_random", rep.win_corrupted_vs_random}});
    std::cout << "likelihood separation: expert>random " << rep.win_expert_vs_random
              << ", expert>corrupted " << rep.win_expert_vs_corrupted << "\n";
    return 0;
}

int cmd_eval_policy(const CommonOpts& common, const std::string& tokenizer_ckpt,
                    const std::string& model_ckpt, int episodes, std::uint64_t seed,
                    const std::string& infer_mode) {
    moto::ExperimentConfig cfg = resolve_config(common);
    fs::path run = prepare_run_dir(common, "eval-policy", cfg, "eval-policy");
    Stack s = load_model_stack(tokenizer_ckpt, model_ckpt, true);
    json mman = moto::load_checkpoint_manifest(model_ckpt);
    moto::FinetunePlan plan = moto::plan_for_mode(mman.value("ablation_mode", "full"));
    moto::InferMode mode = moto::infer_mode_from_string(infer_mode);

    moto::world::Policy pol = moto::make_policy(*s.gpt, *s.head, *s.tokenizer, mode, plan);
    moto::world::PolicyEvalReport rep =
        moto::world::evaluate_policy(s.cfg, s.vocab, episodes, seed, pol);

    moto::JsonlWriter log(run / "episodes.jsonl");
    for (const auto& o : rep.outcomes)
        log.append({{"episode", o.episode},
                    {"seed", o.seed},
                    {"task_label", o.task_label},
                    {"success", o.success},
                    {"steps", o.steps}});
    log.flush();
    write_json_report(run / "report.json", {{"episodes", episodes},
                                            {"seed", seed},
                                            {"infer_mode", infer_mode},
                                            {"ablation_mode", plan.mode},
                                            {"success_rate", rep.success_rate}});
    std::cout << "success rate " << rep.success_rate << " over " << episodes
              << " episodes\n";
    return 0;
}

int cmd_eval_data_efficiency(const CommonOpts& common, const std::string& tokenizer_ckpt,
                             const std::string& pretrained, const std::string& data,
                             const std::string& fractions_csv, const std::string& modes_csv,
                             int eval_episodes, std::uint64_t eval_seed) {
    moto::ExperimentConfig cfg = resolve_config(common);
    fs::path run = prepare_run_dir(common, "eval-data-efficiency", cfg,
                                   "eval-data-efficiency");

    auto split_csv = [](const std::string& s) {
        std::vector<std::string> out;
        std::size_t at = 0;
        while (at <= s.size()) {
            std::size_t comma = s.find(',', at);
            if (comma == std::string::npos) comma = s.size();
            if (comma > at) out.push_back(s.substr(at, comma - at));
            at = comma + 1;
        }
        return out;
    };
    std::vector<double> fractions;
    for (const auto& f : split_csv(fractions_csv)) fractions.push_back(std::stod(f));
    std::vector<std::string> modes = split_csv(modes_csv);
    if (fractions.empty() || modes.empty())
        throw moto::ConfigError("eval.fractions/modes must be non-empty");

    auto all_eps = load_all_episodes(data);
    json pman = moto::load_checkpoint_manifest(pretrained);
    check_kind(pman, {"moto-gpt"}, pretrained);

    moto::CsvWriter csv(run / "table.csv",
                        {"fraction", "mode", "episodes_used", "success_rate"});
    json cells = json::array();
    int cell = 0;
    for (double fraction : fractions)
        for (const std::string& mode : modes) {
            moto::FinetunePlan plan = moto::plan_for_mode(mode);
            Stack s = load_tokenizer_stack(tokenizer_ckpt);
            s.cfg.train_finetune = cfg.train_finetune;
            s.cfg.finetune = cfg.finetune;
            s.cfg.finetune.ablation_mode = mode;
            check_frozen_hash(s, pman, pretrained);

            // every cell gets its own derived seeds and an identical budget
            moto::Rng cell_rng(cfg.seed + 0x9e3779b97f4a7c15ULL * std::uint64_t(cell + 1));
            add_gpt(s, cell_rng.child(1).next_u64(), false, 0);
            if (mode != "scratch") moto::load_checkpoint(pretrained, s.gpt->store);
            moto::Rng hr(cell_rng.child(2).next_u64());
            s.head = std::make_unique<moto::ActionHead>(moto::ActionHead::create(
                s.gpt->store, "policy.head", s.cfg.gpt.hidden,
                s.cfg.finetune.action_head_hidden, hr));

            auto eps = take_fraction(all_eps, fraction);
            moto::JsonlWriter log(run / ("metrics-" + mode + "-" +
                                         std::to_string(fraction) + ".jsonl"));
            moto::finetune_loop(*s.gpt, *s.head, *s.tokenizer, eps, plan, s.cfg,
                                s.cfg.train_finetune, cell_rng.child(3).next_u64(),
                                [&](const json& j) { log.append(j); });
            log.flush();

            moto::world::Policy pol = moto::make_policy(*s.gpt, *s.head, *s.tokenizer,
                                                        moto::InferMode::placeholder, plan);
            double rate = moto::world::evaluate_policy(s.cfg, s.vocab, eval_episodes,
                                                       eval_seed, pol)
                              .success_rate;
            csv.row({fraction, mode, eps.size(), rate});
            cells.push_back({{"fraction", fraction},
                             {"mode", mode},
                             {"episodes_used", eps.size()},
                             {"success_rate", rate}});
            std::cout << "fraction " << fraction << " mode " << mode << ": " << rate << "\n";
            ++cell;
        }
    write_json_report(run / "report.json", {{"dataset", data},
                                            {"eval_episodes", eval_episodes},
                                            {"eval_seed", eval_seed},
                                            {"cells", cells}});
    return 0;
}

int cmd_rollout_demo(const CommonOpts& common, const std::string& tokenizer_ckpt,
                     const std::string& model_ckpt, std::uint64_t seed, int task_class,
                     int transitions) {
    moto::ExperimentConfig cfg = resolve_config(common);
    fs::path run = prepare_run_dir(common, "rollout-demo", cfg, "rollout-demo");
    Stack s = load_model_stack(tokenizer_ckpt, model_ckpt, false);

    moto::world::Task task = moto::world::task_from_class(task_class);
    moto::world::WorldState w = moto::world::reset(seed, task);
    moto::Frame f0 = moto::world::render(w, s.cfg.frame.height, s.cfg.frame.width);
    moto::Instruction instr = s.vocab.make_instruction(moto::world::instruction_text(task),
                                                       s.cfg.frozen.max_prompt_len);
    moto::VideoClip clip = moto::rollout_video(*s.gpt, *s.tokenizer, instr, f0, transitions,
                                               moto::Sampling::greedy());
    fs::create_directories(run / "frames");
    for (std::size_t i = 0; i < clip.frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%02zu.png", i);
        moto::png::save_frame(clip.frames[i], run / "frames" / name);
    }
    write_json_report(run / "report.json", {{"seed", seed},
                                            {"task_class", task_class},
                                            {"instruction", instr.text},
                                            {"transitions", transitions},
                                            {"frames", clip.frames.size()}});
    std::cout << "wrote " << clip.frames.size() << " frames to " << (run / "frames") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"moto: latent motion tokens, motion-token GPT, and action policies on a "
                 "deterministic 2D desk world"};
    app.require_subcommand(1);

    CommonOpts common;

    // gen-data
    int gd_episodes = 500;
    std::uint64_t gd_seed = 7;
    std::string gd_policy = "expert", gd_split = "train", gd_out;
    int gd_class = -1;
    auto* gen = app.add_subcommand("gen-data", "generate a scripted dataset");
    add_common(gen, common);
    gen->add_option("--episodes", gd_episodes, "episode count")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gd_seed, "dataset seed");
    gen->add_option("--policy", gd_policy, "expert | random | corrupted-expert | mixed");
    gen->add_option("--split", gd_split, "split tag recorded in the manifest");
    gen->add_option("--forced-class", gd_class, "fix every episode to one task class");
    gen->add_option("--out", gd_out, "dataset root (default <run>/dataset)");

    // train-tokenizer
    std::string tt_data, tt_resume;
    auto* ttok = app.add_subcommand("train-tokenizer", "train the latent motion tokenizer");
    add_common(ttok, common);
    ttok->add_option("--data", tt_data, "training dataset root")->required();
    ttok->add_option("--resume", tt_resume, "checkpoint to continue from");

    // pretrain
    std::string pt_data, pt_tok, pt_resume;
    auto* pre = app.add_subcommand("pretrain", "autoregressive motion-token pre-training");
    add_common(pre, common);
    pre->add_option("--data", pt_data, "training dataset root")->required();
    pre->add_option("--tokenizer", pt_tok, "tokenizer checkpoint")->required();
    pre->add_option("--resume", pt_resume, "checkpoint to continue from");

    // finetune
    std::string ft_data, ft_tok, ft_pre, ft_mode, ft_resume;
    double ft_fraction = 1.0;
    auto* fin = app.add_subcommand("finetune", "co-fine-tune into an action policy");
    add_common(fin, common);
    fin->add_option("--data", ft_data, "labeled dataset root")->required();
    fin->add_option("--tokenizer", ft_tok, "tokenizer checkpoint")->required();
    fin->add_option("--pretrained", ft_pre, "pre-trained GPT checkpoint");
    fin->add_option("--ablation-mode", ft_mode, "full | iml | dm | scratch");
    fin->add_option("--label-fraction", ft_fraction, "leading fraction of episodes to use");
    fin->add_option("--resume", ft_resume, "policy checkpoint to continue from");

    // eval-recon
    std::string er_tok, er_data;
    auto* erec = app.add_subcommand("eval-recon", "teacher-forced reconstruction metrics");
    add_common(erec, common);
    erec->add_option("--tokenizer", er_tok, "tokenizer checkpoint")->required();
    erec->add_option("--data", er_data, "eval dataset root")->required();

    // eval-probe
    std::string ep_tok, ep_train, ep_eval;
    auto* eprobe = app.add_subcommand("eval-probe", "semantic linear probe over representations");
    add_common(eprobe, common);
    eprobe->add_option("--tokenizer", ep_tok, "tokenizer checkpoint")->required();
    eprobe->add_option("--train-data", ep_train, "probe training dataset")->required();
    eprobe->add_option("--eval-data", ep_eval, "held-out dataset")->required();

    // eval-transfer
    std::string et_tok;
    std::uint64_t et_seed = 7;
    int et_frames = 8;
    auto* etrans = app.add_subcommand("eval-transfer", "motion transfer consistency");
    add_common(etrans, common);
    etrans->add_option("--tokenizer", et_tok, "tokenizer checkpoint")->required();
    etrans->add_option("--seed", et_seed, "probe sampling seed");
    etrans->add_option("--frames", et_frames, "probe frame count");

    // eval-likelihood
    std::string el_tok, el_model, el_e, el_c, el_r;
    auto* elik = app.add_subcommand("eval-likelihood", "trajectory likelihood separation");
    add_common(elik, common);
    elik->add_option("--tokenizer", el_tok, "tokenizer checkpoint")->required();
    elik->add_option("--model", el_model, "GPT checkpoint")->required();
    elik->add_option("--expert", el_e, "expert dataset root")->required();
    elik->add_option("--corrupted", el_c, "corrupted-expert dataset root")->required();
    elik->add_option("--random", el_r, "random dataset root")->required();

    // eval-policy
    std::string epo_tok, epo_model, epo_mode = "placeholder";
    int epo_episodes = 100;
    std::uint64_t epo_seed = 7;
    auto* epol = app.add_subcommand("eval-policy", "closed-loop success rate");
    add_common(epol, common);
    epol->add_option("--tokenizer", epo_tok, "tokenizer checkpoint")->required();
    epol->add_option("--model", epo_model, "fine-tuned policy checkpoint")->required();
    epol->add_option("--episodes", epo_episodes, "evaluation episode count");
    epol->add_option("--seed", epo_seed, "evaluation seed");
    epol->add_option("--infer-mode", epo_mode, "placeholder | generate-first");

    // eval-data-efficiency
    std::string ed_tok, ed_pre, ed_data, ed_fracs = "0.1,1.0", ed_modes = "full,scratch";
    int ed_eval_eps = 200;
    std::uint64_t ed_eval_seed = 7;
    auto* edeff = app.add_subcommand("eval-data-efficiency",
                                     "fine-tune per label fraction and mode, then evaluate");
    add_common(edeff, common);
    edeff->add_option("--tokenizer", ed_tok, "tokenizer checkpoint")->required();
    edeff->add_option("--pretrained", ed_pre, "pre-trained GPT checkpoint")->required();
    edeff->add_option("--data", ed_data, "labeled dataset root")->required();
    edeff->add_option("--fractions", ed_fracs, "comma-separated label fractions");
    edeff->add_option("--modes", ed_modes, "comma-separated ablation modes");
    edeff->add_option("--eval-episodes", ed_eval_eps, "episodes per cell");
    edeff->add_option("--eval-seed", ed_eval_seed, "evaluation seed");

    // rollout-demo
    std::string rd_tok, rd_model;
    std::uint64_t rd_seed = 7;
    int rd_class = 0, rd_t = 4;
    auto* roll = app.add_subcommand("rollout-demo", "generate motion tokens and decode frames");
    add_common(roll, common);
    roll->add_option("--tokenizer", rd_tok, "tokenizer checkpoint")->required();
    roll->add_option("--model", rd_model, "GPT checkpoint")->required();
    roll->add_option("--seed", rd_seed, "world reset seed");
    roll->add_option("--task-class", rd_class, "task class id (0-5)");
    roll->add_option("--transitions", rd_t, "transitions to generate");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen_data(common, gd_episodes, gd_seed, gd_policy, gd_split,
                                gd_class >= 0 ? std::optional<int>(gd_class)
                                              : std::optional<int>(),
                                gd_out);
        if (ttok->parsed()) return cmd_train_tokenizer(common, tt_data, tt_resume);
        if (pre->parsed()) return cmd_pretrain(common, pt_data, pt_tok, pt_resume);
        if (fin->parsed())
            return cmd_finetune(common, ft_data, ft_tok, ft_pre, ft_mode, ft_fraction,
                                ft_resume);
        if (erec->parsed()) return cmd_eval_recon(common, er_tok, er_data);
        if (eprobe->parsed()) return cmd_eval_probe(common, ep_tok, ep_train, ep_eval);
        if (etrans->parsed()) return cmd_eval_transfer(common, et_tok, et_seed, et_frames);
        if (elik->parsed())
            return cmd_eval_likelihood(common, el_tok, el_model, el_e, el_c, el_r);
        if (epol->parsed())
            return cmd_eval_policy(common, epo_tok, epo_model, epo_episodes, epo_seed,
                                   epo_mode);
        if (edeff->parsed())
            return cmd_eval_data_efficiency(common, ed_tok, ed_pre, ed_data, ed_fracs,
                                            ed_modes, ed_eval_eps, ed_eval_seed);
        if (roll->parsed())
            return cmd_rollout_demo(common, rd_tok, rd_model, rd_seed, rd_class, rd_t);
    } catch (const moto::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const moto::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

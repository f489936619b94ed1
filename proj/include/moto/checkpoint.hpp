// Checkpoint directory format: manifest.json describing config, seeds, step,
// loss and every named parameter, plus one raw little-endian float32 tensor
// file per parameter. Loading validates shapes against the live ParamStore.
#pragma once

#include <bit>
#include <filesystem>

#include "moto/config.hpp"
#include "moto/dataset.hpp"
#include "moto/nn/params.hpp"

namespace moto {

static_assert(std::endian::native == std::endian::little,
              "checkpoint tensors are little-endian");

inline bool checkpoint_exists(const std::filesystem::path& dir) {
    return std::filesystem::exists(dir / "manifest.json");
}

// extra: run-specific manifest fields (step, loss, ablation_mode, ...).
inline void save_checkpoint(const std::filesystem::path& dir, const nn::ParamStore& store,
                            const ExperimentConfig& cfg, const nlohmann::json& extra) {
    if (checkpoint_exists(dir))
        throw CheckpointError("checkpoint already exists at " + dir.string());
    std::filesystem::create_directories(dir);

    nlohmann::json manifest;
    manifest["format"] = "moto-checkpoint-v1";
    manifest["config"] = cfg.to_json();
    for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();

    nlohmann::json params = nlohmann::json::array();
    for (const nn::Param* p : store.all()) {
        std::string file = p->name + ".bin";
        std::vector<std::uint8_t> bytes(std::size_t(p->value.size()) * 4);
        float* out = reinterpret_cast<float*>(bytes.data());
        for (Eigen::Index i = 0; i < p->rows(); ++i)
            for (Eigen::Index j = 0; j < p->cols(); ++j)
                *out++ = static_cast<float>(p->value(i, j));
        write_file_bytes(dir / file, bytes);
        params.push_back({{"name", p->name},
                          {"rows", p->rows()},
                          {"cols", p->cols()},
                          {"file", file},
                          {"crc32", crc32_of(bytes)}});
    }
    manifest["params"] = std::move(params);
    write_file_bytes(dir / "manifest.json", [&] {
        std::string s = manifest.dump(2);
        s.push_back('\n');
        return std::vector<std::uint8_t>(s.begin(), s.end());
    }());
}

inline nlohmann::json load_checkpoint_manifest(const std::filesystem::path& dir) {
    auto mpath = dir / "manifest.json";
    if (!std::filesystem::exists(mpath))
        throw CheckpointError("missing checkpoint manifest: " + mpath.string());
    auto bytes = read_file_bytes(mpath);
    nlohmann::json m = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (m.is_discarded() || !m.contains("params"))
        throw CheckpointError("corrupt checkpoint manifest: " + mpath.string());
    return m;
}

// Fills matching parameters of `store` in place. Parameters present in the
// store but absent from the checkpoint throw unless allow_missing (used when a
// fine-tune store holds action-head tensors a pre-train checkpoint lacks).
// Manifest entries with no counterpart in the store are ignored.
inline nlohmann::json load_checkpoint(const std::filesystem::path& dir, nn::ParamStore& store,
                                      bool allow_missing = false) {
    nlohmann::json manifest = load_checkpoint_manifest(dir);
    std::unordered_map<std::string, const nlohmann::json*> by_name;
    for (const auto& e : manifest.at("params")) by_name[e.at("name")] = &e;

    for (nn::Param* p : store.all()) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) {
            if (allow_missing) continue;
            throw CheckpointError("checkpoint missing parameter: " + p->name);
        }
        const nlohmann::json& e = *it->second;
        if (e.at("rows").get<Eigen::Index>() != p->rows() ||
            e.at("cols").get<Eigen::Index>() != p->cols())
            throw CheckpointError("shape mismatch for parameter " + p->name + ": checkpoint " +
                                  e.at("rows").dump() + "x" + e.at("cols").dump() + ", model " +
                                  std::to_string(p->rows()) + "x" + std::to_string(p->cols()));
        auto bytes = read_file_bytes(dir / e.at("file").get<std::string>());
        if (bytes.size() != std::size_t(p->value.size()) * 4)
            throw CheckpointError("bad tensor size for parameter " + p->name);
        if (crc32_of(bytes) != e.at("crc32").get<std::uint32_t>())
            throw CheckpointError("checksum mismatch for parameter " + p->name);
        const float* in = reinterpret_cast<const float*>(bytes.data());
        for (Eigen::Index i = 0; i < p->rows(); ++i)
            for (Eigen::Index j = 0; j < p->cols(); ++j) p->value(i, j) = double(*in++);
    }
    return manifest;
}

}  // namespace moto

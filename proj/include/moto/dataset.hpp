// Dataset on-disk format: <root>/manifest.json, <root>/episodes/<idx>/frame_<t>.png
// and meta.json per episode. crc32 checksums let load detect corruption early.
#pragma once

#include <json.hpp>
#include <zlib.h>

#include <filesystem>
#include <fstream>

#include "moto/png_io.hpp"
#include "moto/vocab.hpp"

namespace moto {

using Json = nlohmann::json;

inline std::uint32_t crc32_of(const std::vector<std::uint8_t>& bytes) {
    return std::uint32_t(::crc32(0, bytes.data(), uInt(bytes.size())));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open: " + p.string());
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& p,
                             const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot open for write: " + p.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw DataError("short write: " + p.string());
}

struct EpisodeRecord {
    int index = 0;
    int task_label = 0;
    bool success = false;
    int n_frames = 0;
    std::uint64_t seed = 0;
    std::map<std::string, std::uint32_t> file_crc;  // filename -> crc32
};

struct DatasetManifest {
    std::filesystem::path root;
    int episode_count = 0;
    int n_actions_per_transition = 0;
    int source_stride = 1;
    int frame_height = 0, frame_width = 0, frame_channels = 0;
    std::uint64_t seed = 0;
    std::string split;
    std::vector<EpisodeRecord> episodes;
};

namespace detail {

inline Json manifest_to_json(const DatasetManifest& m) {
    Json j;
    j["episode_count"] = m.episode_count;
    j["n_actions_per_transition"] = m.n_actions_per_transition;
    j["source_stride"] = m.source_stride;
    j["frame_height"] = m.frame_height;
    j["frame_width"] = m.frame_width;
    j["frame_channels"] = m.frame_channels;
    j["seed"] = m.seed;
    j["split"] = m.split;
    j["episodes"] = Json::array();
    for (const auto& e : m.episodes) {
        Json je;
        je["index"] = e.index;
        je["task_label"] = e.task_label;
        je["success"] = e.success;
        je["n_frames"] = e.n_frames;
        je["seed"] = e.seed;
        je["files"] = Json::object();
        for (const auto& [name, crc] : e.file_crc) je["files"][name] = crc;
        j["episodes"].push_back(je);
    }
    return j;
}

inline DatasetManifest manifest_from_json(const Json& j, const std::filesystem::path& root) {
    DatasetManifest m;
    m.root = root;
    m.episode_count = j.at("episode_count").get<int>();
    m.n_actions_per_transition = j.at("n_actions_per_transition").get<int>();
    m.source_stride = j.at("source_stride").get<int>();
    m.frame_height = j.at("frame_height").get<int>();
    m.frame_width = j.at("frame_width").get<int>();
    m.frame_channels = j.at("frame_channels").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.split = j.at("split").get<std::string>();
    for (const auto& je : j.at("episodes")) {
        EpisodeRecord e;
        e.index = je.at("index").get<int>();
        e.task_label = je.at("task_label").get<int>();
        e.success = je.at("success").get<bool>();
        e.n_frames = je.at("n_frames").get<int>();
        e.seed = je.at("seed").get<std::uint64_t>();
        for (const auto& [name, crc] : je.at("files").items())
            e.file_crc[name] = crc.get<std::uint32_t>();
        m.episodes.push_back(e);
    }
    if (int(m.episodes.size()) != m.episode_count)
        throw DataError("manifest episode count mismatch");
    return m;
}

}  // namespace detail

// Episode seeds let a loader regenerate or cross-check provenance.
inline DatasetManifest save_dataset(const std::vector<Episode>& episodes,
                                    const std::vector<std::uint64_t>& episode_seeds,
                                    const std::filesystem::path& root, int n_per_transition,
                                    std::uint64_t seed, const std::string& split) {
    if (episodes.empty()) throw DataError("cannot save empty dataset");
    if (episode_seeds.size() != episodes.size())
        throw DataError("episode_seeds length mismatch");
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        try {
            episodes[i].validate(n_per_transition);
        } catch (const DataError& e) {
            throw DataError("episode " + std::to_string(i) + ": " + e.what());
        }
    }
    std::filesystem::create_directories(root / "episodes");

    DatasetManifest m;
    m.root = root;
    m.episode_count = int(episodes.size());
    m.n_actions_per_transition = n_per_transition;
    m.source_stride = episodes[0].clip.source_stride;
    m.frame_height = episodes[0].clip.frames[0].height;
    m.frame_width = episodes[0].clip.frames[0].width;
    m.frame_channels = episodes[0].clip.frames[0].channels;
    m.seed = seed;
    m.split = split;

    for (std::size_t i = 0; i < episodes.size(); ++i) {
        const Episode& ep = episodes[i];
        auto dir = root / "episodes" / std::to_string(i);
        std::filesystem::create_directories(dir);
        EpisodeRecord rec;
        rec.index = int(i);
        rec.task_label = ep.task_label;
        rec.success = ep.success;
        rec.n_frames = int(ep.clip.frames.size());
        rec.seed = episode_seeds[i];
        for (std::size_t t = 0; t < ep.clip.frames.size(); ++t) {
            const Frame& f = ep.clip.frames[t];
            auto bytes = png::encode_rgb8(png::frame_to_rgb8(f), f.width, f.height);
            std::string name = "frame_" + std::to_string(t) + ".png";
            write_file_bytes(dir / name, bytes);
            rec.file_crc[name] = crc32_of(bytes);
        }
        Json meta;
        meta["instruction_text"] = ep.instruction.text;
        meta["token_ids"] = ep.instruction.token_ids;
        meta["task_label"] = ep.task_label;
        meta["success"] = ep.success;
        meta["seed"] = episode_seeds[i];
        Json ja = Json::array();
        for (const auto& a : ep.actions)
            ja.push_back({a.delta_pos[0], a.delta_pos[1], a.delta_rot, a.grip});
        meta["actions"] = ja;
        std::string meta_str = meta.dump(2);
        std::vector<std::uint8_t> meta_bytes(meta_str.begin(), meta_str.end());
        write_file_bytes(dir / "meta.json", meta_bytes);
        rec.file_crc["meta.json"] = crc32_of(meta_bytes);
        m.episodes.push_back(rec);
    }
    std::string mstr = detail::manifest_to_json(m).dump(2);
    write_file_bytes(root / "manifest.json",
                     std::vector<std::uint8_t>(mstr.begin(), mstr.end()));
    return m;
}

class LoadedDataset {
public:
    explicit LoadedDataset(const std::filesystem::path& root) {
        auto mpath = root / "manifest.json";
        if (!std::filesystem::exists(mpath))
            throw DataError("no manifest at " + mpath.string());
        auto bytes = read_file_bytes(mpath);
        Json j;
        try {
            j = Json::parse(std::string(bytes.begin(), bytes.end()));
        } catch (const Json::parse_error& e) {
            throw DataError("corrupt manifest: " + std::string(e.what()));
        }
        manifest_ = detail::manifest_from_json(j, root);
    }

    const DatasetManifest& manifest() const { return manifest_; }
    int size() const { return manifest_.episode_count; }

    Episode load_episode(int index) const {
        if (index < 0 || index >= manifest_.episode_count)
            throw DataError("episode index out of range: " + std::to_string(index));
        const EpisodeRecord& rec = manifest_.episodes[std::size_t(index)];
        auto dir = manifest_.root / "episodes" / std::to_string(index);
        std::string who = "episode " + std::to_string(index);

        auto checked_read = [&](const std::string& name) {
            auto p = dir / name;
            if (!std::filesystem::exists(p)) throw DataError(who + ": missing file " + name);
            auto bytes = read_file_bytes(p);
            auto it = rec.file_crc.find(name);
            if (it == rec.file_crc.end()) throw DataError(who + ": " + name + " not in manifest");
            if (crc32_of(bytes) != it->second)
                throw DataError(who + ": checksum mismatch in " + name);
            return bytes;
        };

        auto meta_bytes = checked_read("meta.json");
        Json meta;
        try {
            meta = Json::parse(std::string(meta_bytes.begin(), meta_bytes.end()));
        } catch (const Json::parse_error& e) {
            throw DataError(who + ": corrupt meta.json: " + e.what());
        }

        Episode ep;
        ep.instruction.text = meta.at("instruction_text").get<std::string>();
        ep.instruction.token_ids = meta.at("token_ids").get<std::vector<int>>();
        ep.task_label = meta.at("task_label").get<int>();
        ep.success = meta.at("success").get<bool>();
        for (const auto& ja : meta.at("actions")) {
            ActionVector a;
            a.delta_pos[0] = ja.at(0).get<double>();
            a.delta_pos[1] = ja.at(1).get<double>();
            a.delta_rot = ja.at(2).get<double>();
            a.grip = ja.at(3).get<int>();
            ep.actions.push_back(a);
        }
        ep.clip.source_stride = manifest_.source_stride;
        for (int t = 0; t < rec.n_frames; ++t) {
            std::string name = "frame_" + std::to_string(t) + ".png";
            auto bytes = checked_read(name);
            int w = 0, h = 0;
            auto rgb = png::decode_rgb8(bytes, w, h);
            if (w != manifest_.frame_width || h != manifest_.frame_height)
                throw DataError(who + ": frame dims do not match manifest");
            ep.clip.frames.push_back(png::frame_from_rgb8(rgb, w, h));
        }
        ep.validate(manifest_.n_actions_per_transition);
        return ep;
    }

    std::vector<Episode> load_all() const {
        std::vector<Episode> out;
        out.reserve(std::size_t(size()));
        for (int i = 0; i < size(); ++i) out.push_back(load_episode(i));
        return out;
    }

private:
    DatasetManifest manifest_;
};

}  // namespace moto

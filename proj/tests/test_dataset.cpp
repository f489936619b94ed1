#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "moto/dataset.hpp"
#include "moto/png_io.hpp"
#include "moto/vocab.hpp"

using namespace moto;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("moto_test_" + name);
    fs::remove_all(p);
    return p;
}

Frame noise_frame(int h, int w, Rng& rng) {
    Frame f = Frame::zeros(h, w, 3);
    // values on the 8-bit grid so PNG round-trip is exact
    for (double& v : f.pixels) v = double(rng.index(256)) / 255.0;
    return f;
}

std::vector<Episode> make_episodes(int count, int frames_per_clip, int n, Rng& rng) {
    Vocab vocab;
    std::vector<Episode> eps;
    for (int e = 0; e < count; ++e) {
        Episode ep;
        ep.instruction = vocab.make_instruction("move the red block up", 8);
        for (int t = 0; t < frames_per_clip; ++t)
            ep.clip.frames.push_back(noise_frame(8, 8, rng));
        ep.clip.source_stride = n;
        ep.actions.assign(std::size_t(n) * std::size_t(frames_per_clip - 1),
                          ActionVector::clipped(0.5, -0.25, 0.0, 0));
        ep.success = e % 2 == 0;
        ep.task_label = e % 3;
        eps.push_back(std::move(ep));
    }
    return eps;
}

}  // namespace

TEST_CASE("png round-trip is exact on the 8-bit grid") {
    Rng rng(99);
    Frame f = noise_frame(16, 12, rng);
    auto bytes = png::encode_rgb8(png::frame_to_rgb8(f), f.width, f.height);
    int w = 0, h = 0;
    auto pix = png::decode_rgb8(bytes, w, h);
    REQUIRE(w == 12);
    REQUIRE(h == 16);
    Frame back = png::frame_from_rgb8(pix, h, w);
    CHECK(back.pixels == f.pixels);
}

TEST_CASE("png decoder handles all five filter types") {
    // Our encoder only emits filter 0, so build a file with hand-filtered rows
    // (one of each type, cycling) and check the decoder inverts them all.
    Rng rng(7);
    Frame f = noise_frame(6, 5, rng);
    auto raw = png::frame_to_rgb8(f);
    int w = f.width, h = f.height, stride = w * 3;
    std::vector<std::uint8_t> filtered;
    for (int y = 0; y < h; ++y) {
        int ft = y % 5;
        filtered.push_back(std::uint8_t(ft));
        for (int i = 0; i < stride; ++i) {
            int a = i >= 3 ? raw[std::size_t(y * stride + i - 3)] : 0;
            int b = y > 0 ? raw[std::size_t((y - 1) * stride + i)] : 0;
            int c = (y > 0 && i >= 3) ? raw[std::size_t((y - 1) * stride + i - 3)] : 0;
            int x = raw[std::size_t(y * stride + i)];
            int out = x;
            switch (ft) {
                case 0: out = x; break;
                case 1: out = x - a; break;
                case 2: out = x - b; break;
                case 3: out = x - (a + b) / 2; break;
                case 4: {
                    int p = a + b - c;
                    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
                    int pred = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                    out = x - pred;
                    break;
                }
            }
            filtered.push_back(std::uint8_t(out & 0xff));
        }
    }
    uLongf bound = compressBound(uLong(filtered.size()));
    std::vector<std::uint8_t> compressed(bound);
    REQUIRE(compress2(compressed.data(), &bound, filtered.data(), uLong(filtered.size()), 6) ==
            Z_OK);
    compressed.resize(bound);
    std::vector<std::uint8_t> file;
    const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    file.insert(file.end(), sig, sig + 8);
    std::vector<std::uint8_t> ihdr;
    png::detail::put_u32(ihdr, std::uint32_t(w));
    png::detail::put_u32(ihdr, std::uint32_t(h));
    for (std::uint8_t v : {std::uint8_t(8), std::uint8_t(2), std::uint8_t(0), std::uint8_t(0),
                           std::uint8_t(0)})
        ihdr.push_back(v);
    png::detail::write_chunk(file, "IHDR", ihdr);
    png::detail::write_chunk(file, "IDAT", compressed);
    png::detail::write_chunk(file, "IEND", {});

    int dw = 0, dh = 0;
    auto decoded = png::decode_rgb8(file, dw, dh);
    CHECK(decoded == raw);
}

TEST_CASE("png decode rejects a corrupted checksum") {
    Rng rng(3);
    Frame f = noise_frame(4, 4, rng);
    auto bytes = png::encode_rgb8(png::frame_to_rgb8(f), f.width, f.height);
    bytes[bytes.size() / 2] ^= 0x40;
    int w, h;
    CHECK_THROWS_AS(png::decode_rgb8(bytes, w, h), DataError);
}

TEST_CASE("dataset save/load round-trip is lossless and deterministic") {
    Rng rng(42);
    auto eps = make_episodes(3, 4, 3, rng);
    std::vector<std::uint64_t> seeds{11, 22, 33};
    auto root = fresh_dir("roundtrip");
    DatasetManifest m = save_dataset(eps, seeds, root, 3, 7, "train");
    CHECK(m.episode_count == 3);
    CHECK(fs::exists(root / "manifest.json"));
    CHECK(fs::exists(root / "episodes" / "0" / "frame_0.png"));
    CHECK(fs::exists(root / "episodes" / "2" / "meta.json"));

    LoadedDataset ds(root);
    CHECK(ds.size() == 3);
    CHECK(ds.manifest().n_actions_per_transition == 3);
    CHECK(ds.manifest().episodes[1].seed == 22);
    for (int i = 0; i < 3; ++i) {
        Episode ep = ds.load_episode(i);
        CHECK(ep.instruction.text == eps[std::size_t(i)].instruction.text);
        CHECK(ep.instruction.token_ids == eps[std::size_t(i)].instruction.token_ids);
        REQUIRE(ep.clip.frames.size() == 4);
        for (int t = 0; t < 4; ++t)
            CHECK(ep.clip.frames[std::size_t(t)].pixels ==
                  eps[std::size_t(i)].clip.frames[std::size_t(t)].pixels);
        CHECK(ep.actions.size() == 9);
        CHECK(ep.actions[0].delta_pos[0] == 0.5);
        CHECK(ep.success == eps[std::size_t(i)].success);
        CHECK(ep.task_label == eps[std::size_t(i)].task_label);
    }

    // regenerating into a second root yields byte-identical manifests
    auto root2 = fresh_dir("roundtrip2");
    save_dataset(eps, seeds, root2, 3, 7, "train");
    auto b1 = read_file_bytes(root / "manifest.json");
    auto b2 = read_file_bytes(root2 / "manifest.json");
    CHECK(b1 == b2);
}

TEST_CASE("save rejects wrong action arity naming the episode") {
    Rng rng(5);
    auto eps = make_episodes(2, 4, 3, rng);
    eps[1].actions.pop_back();  // 8 actions over 3 transitions, needs 9
    auto root = fresh_dir("arity");
    try {
        save_dataset(eps, {1, 2}, root, 3, 7, "train");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("episode 1") != std::string::npos);
    }
}

TEST_CASE("load errors name the offending episode") {
    Rng rng(8);
    auto eps = make_episodes(2, 4, 3, rng);
    auto root = fresh_dir("corrupt");
    save_dataset(eps, {1, 2}, root, 3, 7, "train");

    SECTION("missing frame file") {
        fs::remove(root / "episodes" / "1" / "frame_2.png");
        LoadedDataset ds(root);
        CHECK_NOTHROW(ds.load_episode(0));
        try {
            ds.load_episode(1);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            std::string w = e.what();
            CHECK(w.find("episode 1") != std::string::npos);
        }
    }
    SECTION("checksum mismatch") {
        auto p = root / "episodes" / "0" / "frame_1.png";
        auto bytes = read_file_bytes(p);
        bytes[20] ^= 0x01;
        write_file_bytes(p, bytes);
        LoadedDataset ds(root);
        try {
            ds.load_episode(0);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            std::string w = e.what();
            CHECK(w.find("episode 0") != std::string::npos);
        }
    }
    SECTION("corrupt manifest") {
        write_file_bytes(root / "manifest.json", {'n', 'o', 'p', 'e'});
        CHECK_THROWS_AS(LoadedDataset(root), DataError);
    }
}

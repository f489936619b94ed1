#include <catch2/catch_amalgamated.hpp>

#include "moto/layout.hpp"
#include "moto/rng.hpp"

using namespace moto;

namespace {
std::vector<int> attended(const MaskMat& m, int row) {
    std::vector<int> out;
    for (int k = 0; k < int(m.cols()); ++k)
        if (m(row, k)) out.push_back(k);
    return out;
}
}  // namespace

TEST_CASE("pretrain layout arithmetic") {
    auto lo = SequenceLayout::pretrain(8, 64, 8, 2);
    CHECK(lo.size() == 8 + 64 + 16);
    CHECK(lo.motion_count() == 16);
    CHECK(lo.roles[0] == Role::text);
    CHECK(lo.roles[8] == Role::vis);
    CHECK(lo.roles[72] == Role::motion);
    CHECK(lo.stream_index[72] == 0);
    CHECK(lo.stream_index[72 + 15] == 15);
    CHECK(lo.timestep[72 + 7] == 0);
    CHECK(lo.timestep[72 + 8] == 1);
}

TEST_CASE("finetune layout interleaves chunks and queries") {
    auto lo = SequenceLayout::finetune(2, 3, 2, 2, 3);
    // text 0-1, vis 2-4, then per transition: 2 motion + 3 queries
    REQUIRE(lo.size() == 5 + 2 * (2 + 3));
    CHECK(lo.roles[5] == Role::motion);
    CHECK(lo.roles[7] == Role::action_query);
    CHECK(lo.stream_index[7] == 0);
    CHECK(lo.roles[10] == Role::motion);
    CHECK(lo.stream_index[10] == 2);  // motion stream continues across chunks
    CHECK(lo.roles[12] == Role::action_query);
    CHECK(lo.stream_index[12] == 3);
    CHECK(lo.timestep[12] == 1);
}

TEST_CASE("action_only layout drops motion slots") {
    auto lo = SequenceLayout::action_only(8, 64, 4, 3);
    CHECK(lo.size() == 8 + 64 + 4 * 3);  // dm-mode length: prompt + N*T
    CHECK(lo.motion_count() == 0);
    CHECK(!lo.include_motion);
    for (int p : lo.positions_with(Role::motion)) {
        (void)p;
        FAIL("no motion positions expected");
    }
}

TEST_CASE("padded text positions keep their slot but change segment role") {
    std::vector<bool> pad{false, false, true, true};
    auto lo = SequenceLayout::pretrain(4, 2, 1, 1, &pad);
    CHECK(lo.roles[1] == Role::text);
    CHECK(lo.roles[2] == Role::pad);
    CHECK(lo.roles[3] == Role::pad);
    CHECK(lo.stream_index[3] == 3);  // still position 3 of the text stream
}

TEST_CASE("toy mask example: prompt 2, K=2, T=1, N=1") {
    auto lo = SequenceLayout::finetune(2, 0, 2, 1, 1);
    REQUIRE(lo.size() == 5);
    // positions: 0,1 prompt; 2,3 motion; 4 action_query
    MaskMat no_drop = build_finetune_mask(lo, false);
    CHECK(attended(no_drop, 4) == std::vector<int>{0, 1, 2, 3, 4});
    MaskMat drop = build_finetune_mask(lo, true);
    CHECK(attended(drop, 4) == std::vector<int>{0, 1, 4});
    // motion rows attend causally (position 4 is in their future either way)
    CHECK(attended(no_drop, 2) == std::vector<int>{0, 1, 2});
    CHECK(attended(no_drop, 3) == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("rule A blocks motion from earlier action queries too") {
    auto lo = SequenceLayout::finetune(2, 0, 2, 2, 1);
    // 0,1 prompt; 2,3 motion t0; 4 query t0; 5,6 motion t1; 7 query t1
    MaskMat m = build_finetune_mask(lo, false);
    CHECK(attended(m, 5) == std::vector<int>{0, 1, 2, 3, 5});      // skips col 4
    CHECK(attended(m, 6) == std::vector<int>{0, 1, 2, 3, 5, 6});
    // rule B: later query sees everything before it (no dropout)
    CHECK(attended(m, 7) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("mask rules hold on randomized layouts vs an independent oracle") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        int text = 1 + rng.index(8), vis = rng.index(9);
        int k = 1 + rng.index(8), t = 1 + rng.index(4), n = 1 + rng.index(5);
        bool drop = rng.bernoulli(0.5);
        bool include_motion = rng.bernoulli(0.8);
        auto lo = include_motion ? SequenceLayout::finetune(text, vis, k, t, n)
                                 : SequenceLayout::action_only(text, vis, t, n);
        MaskMat m = build_finetune_mask(lo, drop);
        for (int q = 0; q < lo.size(); ++q) {
            bool self_ok = false;
            for (int c = 0; c < lo.size(); ++c) {
                Role rq = lo.roles[std::size_t(q)], rc = lo.roles[std::size_t(c)];
                bool want = c <= q;
                if (rq == Role::motion && rc == Role::action_query) want = false;
                if (drop && rq == Role::action_query && rc == Role::motion) want = false;
                if (bool(m(q, c)) != want) {
                    CAPTURE(trial, q, c, int(rq), int(rc), drop);
                    FAIL("mask rule mismatch");
                }
                if (c == q && want) self_ok = true;
            }
            CHECK(self_ok);  // no fully-masked query row
        }
    }
}

TEST_CASE("mask construction requires queries") {
    auto lo = SequenceLayout::pretrain(2, 2, 2, 1);
    CHECK_THROWS_AS(build_finetune_mask(lo, false), ModelError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "kh/movie.hpp"
#include "kh/steenrod.hpp"

using kh::ChainMapF2;
using kh::Diagram;
using kh::KhCube;
using kh::MatrixF2;
using kh::Move;
using kh::Movie;
using kh::MovieMaps;

namespace {

// three-crossing diagram with all-negative crossings (one component)
const char* kTrefoil = "X[1,4,2,5];X[3,6,4,1];X[5,2,6,3]";
// closed three-strand braid with all-positive crossings; arcs 4,6,5 bound
// a slide triangle (4 passes over both its crossings, 6 under both)
const char* kBraid = "X[2,5,4,1];X[3,3,6,5];X[6,2,1,4]";
// one-component two-crossing diagram whose bigon removal closes the whole
// strand into a single loop
const char* kCurlBigon = "X[4,3,3,2];X[1,1,4,2]";
// two-component diagram whose two crossings have equal sign (not a bigon)
const char* kClasp = "X[1,5,2,4];X[2,4,1,5]";

int total_dim(const kh::HomologyF2& h) {
    int n = 0;
    for (auto& [i, j] : h.bidegrees()) n += h.dim(i, j);
    return n;
}

// the induced map on homology is an isomorphism in every bidegree
void require_iso(const KhCube& a, const KhCube& b, const ChainMapF2& f) {
    kh::HomologyF2 ha = kh::homology(a.complex_f2());
    kh::HomologyF2 hb = kh::homology(b.complex_f2());
    REQUIRE(total_dim(ha) == total_dim(hb));
    for (auto& [i, j] : ha.bidegrees()) {
        MatrixF2 m = kh::induced_map(ha, hb, a.complex_f2(), b.complex_f2(), f, i, j);
        REQUIRE(m.rows() == ha.dim(i, j));
        REQUIRE(m.cols() == ha.dim(i, j));
        REQUIRE(kh::rank(m) == m.rows());
    }
}

bool is_identity(const ChainMapF2& f, const kh::ComplexF2& c) {
    if (f.di != 0 || f.dj != 0) return false;
    for (auto& [ij, n] : c.dims) {
        MatrixF2 m = f.at(c, c, ij.first, ij.second);
        if (!(m + MatrixF2::identity(n)).is_zero()) return false;
    }
    return true;
}

bool is_zero_map(const ChainMapF2& f) {
    for (auto& [ij, m] : f.mats)
        if (!m.is_zero()) return false;
    return true;
}

}  // namespace

TEST_CASE("birth adds a loop with the forced id") {
    Diagram d = Diagram::parse("U");
    Movie m(d, {Move{.kind = "birth", .loop = 2}});
    CHECK(m.end().free_loops() == std::vector<int>{1, 2});
    CHECK(m.euler_char() == 1);
    CHECK(m.is_ribbon());
    // any other id is rejected
    CHECK_THROWS_AS(Movie(d, {Move{.kind = "birth", .loop = 7}}), kh::InvalidSite);

    Diagram t = Diagram::parse(kTrefoil);
    Movie mt(t, {Move{.kind = "birth", .loop = 7}});
    CHECK(mt.end().free_loops() == std::vector<int>{7});
    CHECK(mt.end().crossings().size() == 3);
}

TEST_CASE("death removes a loop and respects the basepoint") {
    Diagram d = Diagram::parse("U;U");
    Movie m(d, {Move{.kind = "death", .loop = 2}});
    CHECK(m.end().free_loops() == std::vector<int>{1});
    CHECK_FALSE(m.is_ribbon());
    CHECK_THROWS_AS(Movie(d, {Move{.kind = "death", .loop = 3}}), kh::InvalidSite);

    Diagram withbp = d.with_basepoint(1);
    CHECK_THROWS_AS(Movie(withbp, {Move{.kind = "death", .loop = 1}}),
                    kh::BasepointTouched);
    Movie ok(withbp, {Move{.kind = "death", .loop = 2}});
    CHECK(ok.end().basepoint() == 1);
}

TEST_CASE("saddles merge and split free loops with forced ids") {
    Diagram d = Diagram::parse("U");
    // birth a second loop, then merge the two
    Movie m(d, {Move{.kind = "birth", .loop = 2},
                Move{.kind = "saddle", .edges = {1, 2}, .new_edges = {1, 1}}});
    CHECK(m.end().free_loops() == std::vector<int>{1});
    CHECK(m.euler_char() == 0);

    // split one loop in two
    Movie s(d, {Move{.kind = "saddle", .edges = {1, 1}, .new_edges = {1, 2}}});
    CHECK(s.end().free_loops() == std::vector<int>{1, 2});

    // wrong forced ids are rejected
    CHECK_THROWS_AS(
        Movie(d, {Move{.kind = "saddle", .edges = {1, 1}, .new_edges = {5, 6}}}),
        kh::InvalidSite);
}

TEST_CASE("saddle between crossing arcs follows orientation") {
    Diagram t = Diagram::parse(kTrefoil);
    Movie m(t, {Move{.kind = "saddle", .edges = {1, 4}, .new_edges = {7, 8}}});
    const Diagram& after = m.end();
    CHECK(after.crossings().size() == 3);
    CHECK(after.components().size() == 2);  // the band splits the knot
    CHECK(after.has_edge(7));
    CHECK(after.has_edge(8));
    CHECK_FALSE(after.has_edge(1));
    CHECK_FALSE(after.has_edge(4));
    CHECK(m.euler_char() == -1);
    Movie rev = m.reversed();
    CHECK(rev.end() == t);
    CHECK(rev.reversed().moves() == m.moves());

    // mixed loop/arc bands and self-bands on a crossing arc are rejected
    Movie b(t, {Move{.kind = "birth", .loop = 7}});
    CHECK_THROWS_AS(apply_move(b.end(), Move{.kind = "saddle",
                                             .edges = {1, 7},
                                             .new_edges = {8, 9}}),
                    kh::InvalidSite);
    CHECK_THROWS_AS(
        apply_move(t, Move{.kind = "saddle", .edges = {1, 1}, .new_edges = {7, 8}}),
        kh::InvalidSite);
    // colliding replacement ids are rejected
    CHECK_THROWS_AS(
        apply_move(t, Move{.kind = "saddle", .edges = {1, 4}, .new_edges = {5, 7}}),
        kh::InvalidSite);
    // basepoint guard
    Diagram withbp = t.with_basepoint(1);
    CHECK_THROWS_AS(apply_move(withbp, Move{.kind = "saddle",
                                            .edges = {1, 4},
                                            .new_edges = {7, 8}}),
                    kh::BasepointTouched);
}

TEST_CASE("positive curl on a free loop gives the one-crossing unknot") {
    Diagram d = Diagram::parse("U");
    Movie m(d, {Move{.kind = "r1_pos", .edge = 1, .variant = "under",
                     .new_edges = {2, 3}}});
    const Diagram& after = m.end();
    CHECK(after.crossings().size() == 1);
    CHECK(after.free_loops().empty());
    CHECK(after.n_plus() == 1);
    CHECK(after.n_minus() == 0);
    // the four curl layouts
    auto layout = [&](const char* kind, const char* variant) {
        Movie mm(d, {Move{.kind = kind, .edge = 1, .variant = variant,
                          .new_edges = {2, 3}}});
        return mm.end();
    };
    CHECK(layout("r1_pos", "under").crossings()[0].e == std::array<int, 4>{3, 3, 2, 2});
    CHECK(layout("r1_pos", "over").crossings()[0].e == std::array<int, 4>{2, 2, 3, 3});
    CHECK(layout("r1_neg", "under").crossings()[0].e == std::array<int, 4>{3, 2, 2, 3});
    CHECK(layout("r1_neg", "over").crossings()[0].e == std::array<int, 4>{2, 3, 3, 2});
    CHECK(layout("r1_neg", "under").n_minus() == 1);
}

TEST_CASE("curl on a knot edge and its removal restore the diagram") {
    Diagram t = Diagram::parse(kTrefoil);
    Movie m(t, {Move{.kind = "r1_pos", .edge = 1, .variant = "under",
                     .new_edges = {7, 8}},
                Move{.kind = "r1_pos", .elim = true, .loop = 7}});
    CHECK(m.frames()[1].n_plus() == 1);
    CHECK(m.frames()[1].n_minus() == 3);
    CHECK(m.frames()[1].crossings().size() == 4);
    CHECK(m.end() == t);

    MovieMaps maps = movie_chain_map(m);
    CHECK(is_identity(maps.total, maps.cubes.front().complex_f2()));
    require_iso(maps.cubes[0], maps.cubes[1], maps.steps[0]);
    require_iso(maps.cubes[1], maps.cubes[2], maps.steps[1]);
}

TEST_CASE("closed curl removal frees a loop") {
    Diagram d = Diagram::parse("U");
    Movie m(d, {Move{.kind = "r1_neg", .edge = 1, .variant = "over",
                     .new_edges = {2, 3}},
                Move{.kind = "r1_neg", .elim = true, .loop = 2}});
    CHECK(m.end() == d);
    MovieMaps maps = movie_chain_map(m);
    CHECK(is_identity(maps.total, maps.cubes.front().complex_f2()));
}

TEST_CASE("curl removal negatives") {
    Diagram t = Diagram::parse(kTrefoil);
    // an ordinary edge does not double back
    CHECK_THROWS_AS(apply_move(t, Move{.kind = "r1_pos", .elim = true, .loop = 1}),
                    kh::InvalidSite);
    // sign mismatch
    Diagram d = Diagram::parse("U");
    Movie m(d, {Move{.kind = "r1_pos", .edge = 1, .variant = "under",
                     .new_edges = {2, 3}}});
    CHECK_THROWS_AS(apply_move(m.end(), Move{.kind = "r1_neg", .elim = true, .loop = 2}),
                    kh::InvalidSite);
    // a strand threading itself {under-in, under-out} is not a curl
    Diagram weird = Diagram::parse("X[2,3,2,3]");
    CHECK_THROWS_AS(apply_move(weird, Move{.kind = "r1_pos", .elim = true, .loop = 2}),
                    kh::InvalidSite);
    // basepoint guards: the curl edge and the absorbed piece
    Diagram withbp = t.with_basepoint(1);
    CHECK_THROWS_AS(apply_move(withbp, Move{.kind = "r1_pos", .edge = 1,
                                            .variant = "under", .new_edges = {7, 8}}),
                    kh::BasepointTouched);
    Movie ok(withbp, {Move{.kind = "r1_pos", .edge = 2, .variant = "over",
                           .new_edges = {7, 8}}});
    CHECK(ok.end().basepoint() == 1);
}

TEST_CASE("push and cancel across a bigon, all eight layouts") {
    Diagram d = Diagram::parse("U;U");
    kh::HomologyF2 h0 = kh::homology(KhCube(d).complex_f2());
    REQUIRE(total_dim(h0) == 4);
    for (bool over : {true, false})
        for (const char* side : {"L", "R"})
            for (bool tailfirst : {true, false}) {
                CAPTURE(over);
                CAPTURE(side);
                CAPTURE(tailfirst);
                Move intro{.kind = "r2_intro", .new_edges4 = {3, 4, 5, 6},
                           .moving = 1, .static_edge = 2, .over = over,
                           .side = side, .tailfirst = tailfirst};
                Move elim{.kind = "r2_elim", .edges = {3, 5}};
                Movie m(d, {intro, elim});
                const Diagram& mid = m.frames()[1];
                CHECK(mid.crossings().size() == 2);
                CHECK(mid.n_plus() == 1);
                CHECK(mid.n_minus() == 1);
                CHECK(mid.free_loops().empty());
                CHECK(m.end() == d);

                MovieMaps maps = movie_chain_map(m);
                require_iso(maps.cubes[0], maps.cubes[1], maps.steps[0]);
                // the cancel-after-push composite is a chain-level
                // bijection matching circles through the bigon: identity
                // when the over strand came first, the label swap when the
                // roles come back in the other order
                for (auto& [ij, n] : maps.cubes[0].complex_f2().dims) {
                    MatrixF2 got = maps.total.at(maps.cubes[0].complex_f2(),
                                                 maps.cubes[2].complex_f2(), ij.first,
                                                 ij.second);
                    MatrixF2 want(n, n);
                    const auto& gs = maps.cubes[0].gens(ij.first, ij.second);
                    for (int t = 0; t < n; ++t) {
                        uint32_t lab = gs[size_t(t)].labels;
                        uint32_t image = over ? lab : ((lab & 1) << 1) | (lab >> 1 & 1);
                        auto bi = maps.cubes[2].gen_index(ij.first, ij.second,
                                                          kh::Gen{0, image});
                        REQUIRE(bi);
                        want.set(*bi, t, true);
                    }
                    CHECK((got + want).is_zero());
                }

                // the reversed movie plays the same frames backwards
                Movie rev = m.reversed();
                REQUIRE(rev.frames().size() == 3);
                CHECK(rev.frames()[0] == m.frames()[2]);
                CHECK(rev.frames()[1] == m.frames()[1]);
                CHECK(rev.frames()[2] == m.frames()[0]);
                Movie back = rev.reversed();
                CHECK(back.frames()[1] == m.frames()[1]);
                // a closed loop's running direction is not recorded in the
                // diagram, so the rebuilt push may describe these frames
                // against the opposite orientation; one round trip reaches
                // the stable description, which tail-first pushes already use
                Movie again = back.reversed().reversed();
                CHECK(again.moves() == back.moves());
                if (over && tailfirst) CHECK(back.moves() == m.moves());
            }
}

TEST_CASE("push a loop across a knot edge and cancel, exactly undone") {
    Diagram t = Diagram::parse(kTrefoil);
    std::vector<Move> intro_only{Move{.kind = "birth", .loop = 7}};
    std::vector<Move> full{
        Move{.kind = "birth", .loop = 7},
        Move{.kind = "r2_intro", .new_edges4 = {8, 9, 10, 11}, .moving = 7,
             .static_edge = 1, .over = true, .side = "L", .tailfirst = true},
        Move{.kind = "r2_elim", .edges = {8, 10}}};
    Movie ma(t, intro_only);
    Movie mb(t, full);
    CHECK(mb.frames()[2].crossings().size() == 5);
    CHECK(mb.end() == ma.end());

    MovieMaps mapsa = movie_chain_map(ma);
    MovieMaps mapsb = movie_chain_map(mb);
    // cancelling right after pushing is the chain-level identity, so the
    // three-move composite equals the bare birth map
    for (auto& [ij, n] : mapsa.cubes[0].complex_f2().dims) {
        MatrixF2 a = mapsa.total.at(mapsa.cubes[0].complex_f2(),
                                    mapsa.cubes[1].complex_f2(), ij.first, ij.second);
        MatrixF2 b = mapsb.total.at(mapsb.cubes[0].complex_f2(),
                                    mapsb.cubes[3].complex_f2(), ij.first, ij.second);
        CHECK((a + b).is_zero());
    }

    // static arc on the knot: moving == static and missing arcs rejected
    CHECK_THROWS_AS(apply_move(t, Move{.kind = "r2_intro",
                                       .new_edges4 = {7, 8, 9, 10}, .moving = 1,
                                       .static_edge = 1}),
                    kh::InvalidSite);
    CHECK_THROWS_AS(apply_move(t, Move{.kind = "r2_intro",
                                       .new_edges4 = {7, 8, 9, 10}, .moving = 99,
                                       .static_edge = 1}),
                    kh::InvalidSite);
    // colliding fresh ids rejected
    CHECK_THROWS_AS(apply_move(t, Move{.kind = "r2_intro", .new_edges4 = {5, 8, 9, 10},
                                       .moving = 1, .static_edge = 4}),
                    kh::InvalidSite);
}

TEST_CASE("push a knot edge across another and cancel") {
    Diagram t = Diagram::parse(kTrefoil);
    Movie m(t, {Move{.kind = "r2_intro", .new_edges4 = {7, 8, 9, 10}, .moving = 1,
                     .static_edge = 4, .over = true, .side = "L", .tailfirst = true},
                Move{.kind = "r2_elim", .edges = {7, 9}}});
    CHECK(m.frames()[1].crossings().size() == 5);
    CHECK(m.frames()[1].n_plus() == 1);
    CHECK(m.frames()[1].n_minus() == 4);
    CHECK(m.end() == t);
    MovieMaps maps = movie_chain_map(m);
    CHECK(is_identity(maps.total, maps.cubes.front().complex_f2()));
    require_iso(maps.cubes[0], maps.cubes[1], maps.steps[0]);
}

TEST_CASE("bigon removal negatives") {
    Diagram t = Diagram::parse(kTrefoil);
    // arcs meeting at two crossings but changing level
    CHECK_THROWS_AS(apply_move(t, Move{.kind = "r2_elim", .edges = {1, 4}}),
                    kh::InvalidSite);
    // arcs that do not share two crossings
    CHECK_THROWS_AS(apply_move(t, Move{.kind = "r2_elim", .edges = {1, 2}}),
                    kh::InvalidSite);
    // consistently-leveled pair whose corners smooth the same way
    Diagram clasp = Diagram::parse(kClasp);
    REQUIRE(clasp.crossings().size() == 2);
    CHECK_THROWS_AS(apply_move(clasp, Move{.kind = "r2_elim", .edges = {5, 2}}),
                    kh::InvalidSite);
}

TEST_CASE("bigon removal that closes the strand into one loop") {
    Diagram d = Diagram::parse(kCurlBigon);
    REQUIRE(d.crossings().size() == 2);
    REQUIRE(d.components().size() == 1);
    Movie m(d, {Move{.kind = "r2_elim", .edges = {2, 4}}});
    CHECK(m.end().crossings().empty());
    CHECK(m.end().free_loops() == std::vector<int>{1});
    MovieMaps maps = movie_chain_map(m);
    require_iso(maps.cubes[0], maps.cubes[1], maps.total);
    // no single move re-creates both crossings from the bare loop
    CHECK_THROWS_AS(m.reversed(), kh::KhError);
}

TEST_CASE("triangle slide on the closed braid") {
    Diagram b = Diagram::parse(kBraid);
    REQUIRE(b.n_plus() == 3);
    REQUIRE(b.n_minus() == 0);
    REQUIRE(b.components().size() == 2);
    kh::HomologyF2 h = kh::homology(KhCube(b).complex_f2());
    REQUIRE(total_dim(h) == 4);

    Movie m(b, {Move{.kind = "r3", .triangle = {5, 4, 6}}});
    const Diagram& after = m.end();
    CHECK(after.crossings().size() == 3);
    CHECK(after.n_plus() == 3);
    CHECK_FALSE(after == b);
    // the arc order around each strand swaps: the top strand used to leave
    // from the crossing it shared with the middle arc, now the other one
    CHECK(b.tail_site(5).crossing == 0);
    CHECK(after.tail_site(5).crossing == 1);

    // listing the arcs in any order names the same slide
    Movie m2(b, {Move{.kind = "r3", .triangle = {4, 5, 6}}});
    CHECK(m2.end() == after);

    // the slide is its own inverse, exactly
    Movie twice(b, {Move{.kind = "r3", .triangle = {5, 4, 6}},
                    Move{.kind = "r3", .triangle = {5, 4, 6}}});
    CHECK(twice.end() == b);

    MovieMaps maps = movie_chain_map(m);
    require_iso(maps.cubes[0], maps.cubes[1], maps.total);
    MovieMaps mm = movie_chain_map(twice);
    kh::HomologyF2 hh = kh::homology(mm.cubes[0].complex_f2());
    kh::HomMapF2 round = kh::on_homology(hh, hh, mm.cubes[0].complex_f2(),
                                         mm.cubes[2].complex_f2(), mm.total);
    for (auto& [i, j] : hh.bidegrees()) {
        MatrixF2 blk = round.at(hh, hh, i, j);
        CHECK((blk + MatrixF2::identity(hh.dim(i, j))).is_zero());
    }

    // reversal repeats the same move
    CHECK(m.reversed().moves() == m.moves());

    // negatives: arcs sharing two crossings, and no triangle at all
    Diagram t = Diagram::parse(kTrefoil);
    CHECK_THROWS_AS(apply_move(t, Move{.kind = "r3", .triangle = {1, 2, 5}}),
                    kh::InvalidSite);
    CHECK_THROWS_AS(apply_move(b, Move{.kind = "r3", .triangle = {1, 2, 3}}),
                    kh::InvalidSite);
    // basepoint on a triangle arc
    Diagram withbp = b.with_basepoint(4);
    CHECK_THROWS_AS(apply_move(withbp, Move{.kind = "r3", .triangle = {5, 4, 6}}),
                    kh::BasepointTouched);
    Movie okbp(b.with_basepoint(1), {Move{.kind = "r3", .triangle = {5, 4, 6}}});
    CHECK(okbp.end().basepoint() == 1);
}

TEST_CASE("birth map hits the unit, death maps kill it") {
    Diagram d = Diagram::parse("U");
    Movie m(d, {Move{.kind = "birth", .loop = 2}});
    MovieMaps maps = movie_chain_map(m);
    // 1 -> 1x1 and X -> Xx1: the label mask is unchanged because the new
    // circle sits at the last index
    const kh::ComplexF2& src = maps.cubes[0].complex_f2();
    const kh::ComplexF2& tgt = maps.cubes[1].complex_f2();
    MatrixF2 lo = maps.total.at(src, tgt, 0, -1);  // X -> Xx1, not 1xX
    auto xi = maps.cubes[1].gen_index(0, 0, kh::Gen{0, 1});
    auto ix = maps.cubes[1].gen_index(0, 0, kh::Gen{0, 2});
    REQUIRE(xi);
    REQUIRE(ix);
    REQUIRE(lo.rows() == 2);
    CHECK(lo.get(*xi, 0));
    CHECK_FALSE(lo.get(*ix, 0));
    MatrixF2 hi = maps.total.at(src, tgt, 0, 1);  // 1 -> 1x1
    auto idx = maps.cubes[1].gen_index(0, 2, kh::Gen{0, 0});
    REQUIRE(idx);
    CHECK(hi.get(*idx, 0));

    // birth then merging the new loop back is the identity
    Movie bm(d, {Move{.kind = "birth", .loop = 2},
                 Move{.kind = "saddle", .edges = {1, 2}, .new_edges = {1, 1}}});
    MovieMaps bmm = movie_chain_map(bm);
    CHECK(is_identity(bmm.total, bmm.cubes[0].complex_f2()));

    // splitting then merging is multiplication by 2X, which is zero mod 2:
    // 1 -> Xx1 + 1xX -> X + X and X -> XxX -> X^2
    Movie sm(d, {Move{.kind = "saddle", .edges = {1, 1}, .new_edges = {1, 2}},
                 Move{.kind = "saddle", .edges = {1, 2}, .new_edges = {1, 1}}});
    MovieMaps smm = movie_chain_map(sm);
    CHECK(smm.total.dj == -2);
    CHECK(is_zero_map(smm.total));
}

TEST_CASE("a loop born and killed induces the zero map") {
    for (const char* start : {"U", kTrefoil}) {
        Diagram d = Diagram::parse(start);
        int fresh = d.max_edge() + 1;
        Movie m(d, {Move{.kind = "birth", .loop = fresh},
                    Move{.kind = "death", .loop = fresh}});
        CHECK(m.end() == d);
        CHECK(m.euler_char() == 2);
        MovieMaps maps = movie_chain_map(m);
        CHECK(maps.total.dj == 2);
        CHECK(is_zero_map(maps.total));
    }
}

TEST_CASE("the empty movie is the identity") {
    Diagram t = Diagram::parse(kTrefoil);
    Movie m(t, {});
    CHECK(m.frames().size() == 1);
    CHECK(m.is_ribbon());
    CHECK(m.euler_char() == 0);
    MovieMaps maps = movie_chain_map(m);
    CHECK(is_identity(maps.total, maps.cubes[0].complex_f2()));
}

TEST_CASE("movies serialize to line records and round-trip byte-exactly") {
    Diagram d = Diagram::parse("U;U");
    std::vector<Move> moves{
        Move{.kind = "birth", .loop = 3},
        Move{.kind = "r2_intro", .new_edges4 = {4, 5, 6, 7}, .moving = 1,
             .static_edge = 2, .over = false, .side = "R", .tailfirst = false},
        Move{.kind = "r1_pos", .edge = 4, .variant = "under", .new_edges = {9, 10}},
        Move{.kind = "r1_pos", .elim = true, .loop = 9},
        Move{.kind = "r2_elim", .edges = {4, 6}},
        Move{.kind = "saddle", .edges = {1, 2}, .new_edges = {2, 2}},
        Move{.kind = "saddle", .edges = {2, 2}, .new_edges = {2, 3}},
        Move{.kind = "death", .loop = 3},
        Move{.kind = "death", .loop = 2},
        Move{.kind = "death", .loop = 1},
    };
    Movie m(d, moves);
    CHECK(m.end().crossings().empty());
    CHECK(m.end().free_loops().empty());
    CHECK(m.euler_char() == 1 + 3 - 2);

    std::string text = m.serialize();
    Movie back = Movie::parse(text);
    CHECK(back.serialize() == text);
    CHECK(back.moves() == m.moves());
    REQUIRE(back.frames().size() == m.frames().size());
    for (size_t t = 0; t < m.frames().size(); ++t) CHECK(back.frames()[t] == m.frames()[t]);

    std::string path = "roundtrip_test.movie";
    m.to_file(path);
    Movie filed = Movie::from_file(path);
    CHECK(filed.serialize() == text);
    std::remove(path.c_str());

    // the composite map of the whole movie carries its quantum shift
    MovieMaps maps = movie_chain_map(m);
    CHECK(maps.total.dj == m.euler_char());
}

TEST_CASE("movie parsing rejects malformed records with line numbers") {
    using Catch = kh::MalformedInput;
    CHECK_THROWS_AS(Movie::parse(""), Catch);
    CHECK_THROWS_AS(Movie::parse("{\"loop\":1}\n"), Catch);  // no start record
    CHECK_THROWS_AS(Movie::parse("{\"start\":\"U\"}\nnot json\n"), Catch);
    CHECK_THROWS_AS(Movie::parse("{\"start\":\"U\"}\n{\"move\":\"warp\"}\n"), Catch);
    CHECK_THROWS_AS(Movie::parse("{\"start\":\"U\"}\n{\"move\":\"birth\"}\n"), Catch);
    CHECK_THROWS_AS(
        Movie::parse("{\"start\":\"U\"}\n{\"move\":\"birth\",\"loop\":\"x\"}\n"), Catch);
    CHECK_THROWS_AS(
        Movie::parse("{\"start\":\"U\"}\n{\"move\":\"birth\",\"loop\":2,\"x\":1}\n"),
        Catch);
    CHECK_THROWS_AS(
        Movie::parse("{\"start\":\"U\"}\n{\"move\":\"saddle\",\"edges\":[1],"
                     "\"new_edges\":[1,2]}\n"),
        Catch);
    try {
        Movie::parse("{\"start\":\"U\"}\n{\"move\":\"birth\",\"loop\":2}\nxxx\n");
        FAIL("expected a parse error");
    } catch (const kh::MalformedInput& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("reversal plays a ribbon movie backwards") {
    Diagram d = Diagram::parse("U");
    std::vector<Move> moves{
        Move{.kind = "birth", .loop = 2},
        Move{.kind = "saddle", .edges = {1, 2}, .new_edges = {1, 1}},
    };
    Movie m(d, moves);
    CHECK(m.is_ribbon());
    CHECK(m.euler_char() == 0);

    Movie rev = m.reversed();
    CHECK_FALSE(rev.is_ribbon());  // births play back as deaths
    REQUIRE(rev.frames().size() == m.frames().size());
    for (size_t t = 0; t < m.frames().size(); ++t)
        CHECK(rev.frames()[t] == m.frames()[m.frames().size() - 1 - t]);
    Movie back = rev.reversed();
    CHECK(back.moves() == m.moves());
    CHECK(back.serialize() == m.serialize());

    MovieMaps fw = movie_chain_map(m);
    MovieMaps bw = movie_chain_map(rev);
    CHECK(fw.total.dj == 0);
    CHECK(bw.total.dj == 0);
}

TEST_CASE("every step map satisfies the chain equation on a mixed movie") {
    Diagram t = Diagram::parse(kTrefoil);
    Movie m(t, {Move{.kind = "r1_neg", .edge = 2, .variant = "over",
                     .new_edges = {7, 8}},
                Move{.kind = "birth", .loop = 9},
                Move{.kind = "r2_intro", .new_edges4 = {10, 11, 12, 13}, .moving = 9,
                     .static_edge = 7, .over = false, .side = "R", .tailfirst = false},
                Move{.kind = "saddle", .edges = {10, 12}, .new_edges = {14, 15}}});
    // movie_chain_map checks every step against the differentials and the
    // composite against the surface's Euler characteristic
    MovieMaps maps = movie_chain_map(m);
    CHECK(maps.steps.size() == 4);
    CHECK(maps.total.dj == m.euler_char());
}

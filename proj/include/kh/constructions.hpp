#pragma once

// Companion-knot construction kit.
//
// A chain of 4-ended tangles is folded left-to-right with partial_sum; its
// denominator closure is the "composite" knot diagram.  Reattaching the two
// closure arcs through a small two-crossing clasp instead (tangle_sum with
// clasp()) yields the "companion" diagram.  build_companion packages both
// diagrams together with a ribbon movie from composite to companion — one
// birth next to the closure arcs, one slide of the newborn loop across a
// closure arc, and one band joining the loop into the other closure arc —
// plus a basepoint on an edge no move touches, so basepoint-sensitive
// structure transports along the movie unchanged.

#include <algorithm>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "kh/diagram.hpp"
#include "kh/errors.hpp"
#include "kh/movie.hpp"

namespace kh {

// The crossingless 4-ended tangle: one strand joins the two top ends, the
// other joins the two bottom ends.
inline Tangle trivial_tangle() { return Tangle::parse("ends[1,1,2,2]"); }

// Two-crossing clasp: the west strand (NW-SW) and east strand (NE-SE) pass
// through both crossings, once over and once under, and each strand on its
// own is embedded (no self-crossings).
inline Tangle clasp() { return Tangle::parse("ends[1,2,3,4];X[1,5,6,2];X[6,5,3,4]"); }

// Three-crossing tangle whose denominator closure is a trefoil diagram and
// whose two-fold partial sum closes up to the granny knot.
inline Tangle trefoil_ears() {
    return Tangle::parse("ends[1,2,3,4];X[1,2,5,6];X[6,5,7,8];X[8,7,4,3]");
}

// A composite diagram, its clasped companion, the ribbon movie connecting
// them, and a shared basepoint edge untouched by every move (absent when the
// composite has no edge clear of all move sites, e.g. a bare circle).
struct CompanionBundle {
    Diagram composite;
    Diagram companion;
    Movie movie;
    std::optional<int> basepoint;
};

namespace condetail {

// Euler-characteristic planarity of the 4-valent map described by the PD
// data: faces are traced from the rotation system and V - E + F = 2 must
// hold on every connected component.  Crossingless diagrams are planar.
inline bool planar_pd(const Diagram& d) {
    const auto& xs = d.crossings();
    int n = int(xs.size());
    if (n == 0) return true;
    std::map<int, std::vector<int>> occ;
    for (int x = 0; x < n; ++x)
        for (int s = 0; s < 4; ++s) occ[xs[size_t(x)].e[size_t(s)]].push_back(4 * x + s);
    std::vector<int> alpha(size_t(4 * n), -1);
    for (auto& [e, ds] : occ) {
        if (ds.size() != 2) return false;
        alpha[size_t(ds[0])] = ds[1];
        alpha[size_t(ds[1])] = ds[0];
    }
    std::vector<int> comp(size_t(n), -1);
    int ncomp = 0;
    for (int x0 = 0; x0 < n; ++x0) {
        if (comp[size_t(x0)] != -1) continue;
        std::vector<int> st = {x0};
        comp[size_t(x0)] = ncomp;
        while (!st.empty()) {
            int x = st.back();
            st.pop_back();
            for (int s = 0; s < 4; ++s) {
                int y = alpha[size_t(4 * x + s)] / 4;
                if (comp[size_t(y)] == -1) {
                    comp[size_t(y)] = ncomp;
                    st.push_back(y);
                }
            }
        }
        ++ncomp;
    }
    std::vector<char> seen(size_t(4 * n), 0);
    std::vector<int> faces(size_t(ncomp), 0), verts(size_t(ncomp), 0), edges(size_t(ncomp), 0);
    for (int x = 0; x < n; ++x) verts[size_t(comp[size_t(x)])]++;
    for (auto& [e, ds] : occ) edges[size_t(comp[size_t(ds[0] / 4)])]++;
    for (int d0 = 0; d0 < 4 * n; ++d0) {
        if (seen[size_t(d0)]) continue;
        int cur = d0;
        while (!seen[size_t(cur)]) {
            seen[size_t(cur)] = 1;
            int a = alpha[size_t(cur)];
            cur = (a / 4) * 4 + (a % 4 + 1) % 4;
        }
        faces[size_t(comp[size_t(d0 / 4)])]++;
    }
    for (int c = 0; c < ncomp; ++c)
        if (verts[size_t(c)] - edges[size_t(c)] + faces[size_t(c)] != 2) return false;
    return true;
}

// Deterministic search for the three-move ribbon movie from `composite` to a
// diagram matching `companion`: birth a loop, slide it across one arc, band
// it into another.  Every intermediate frame must stay planar so homology
// machinery can process the whole movie.  Returns the move list plus the
// smallest basepoint edge the movie never touches (nullopt when none works).
inline std::optional<std::pair<std::vector<Move>, std::optional<int>>>
companion_movie(const Diagram& composite, const Diagram& companion) {
    std::string target = canonical_form(companion);
    std::set<int> comp_edges;
    for (auto& x : composite.crossings())
        for (int e : x.e) comp_edges.insert(e);
    std::vector<int> statics(comp_edges.begin(), comp_edges.end());
    for (int l : composite.free_loops()) statics.push_back(l);
    int maxid = composite.max_edge();
    for (int l : composite.free_loops()) maxid = std::max(maxid, l);
    int L = maxid + 1;
    int mu = L + 1, a2 = L + 2, bm = L + 3, b2 = L + 4, sn1 = L + 5, sn2 = L + 6;
    Move birth{.kind = "birth", .loop = L};
    Diagram d1 = apply_move(composite, birth);
    for (int s : statics)
        for (bool o : {true, false})
            for (const char* sd : {"L", "R"})
                for (bool tf : {true, false}) {
                    Move push{.kind = "r2_intro",
                              .new_edges4 = {mu, a2, bm, b2},
                              .moving = L,
                              .static_edge = s,
                              .over = o,
                              .side = sd,
                              .tailfirst = tf};
                    Diagram d2;
                    try {
                        d2 = apply_move(d1, push);
                    } catch (const KhError&) {
                        continue;
                    }
                    if (!planar_pd(d2)) continue;
                    std::set<int> d2_edges;
                    for (auto& x : d2.crossings())
                        for (int e : x.e) d2_edges.insert(e);
                    for (int xe : {mu, a2})
                        for (int y : d2_edges) {
                            if (y == xe) continue;
                            Move band{.kind = "saddle", .edges = {xe, y}, .new_edges = {sn1, sn2}};
                            Diagram d3;
                            try {
                                d3 = apply_move(d2, band);
                            } catch (const KhError&) {
                                continue;
                            }
                            if (d3.crossings().size() != companion.crossings().size()) continue;
                            if (!planar_pd(d3)) continue;
                            if (canonical_form(d3) != target) continue;
                            std::vector<Move> moves = {birth, push, band};
                            for (int e : comp_edges) {
                                try {
                                    Movie probe(composite.with_basepoint(e), moves);
                                    if (canonical_form(probe.end()) ==
                                        canonical_form(companion.with_basepoint(e)))
                                        return std::pair{moves, std::optional<int>(e)};
                                } catch (const KhError&) {
                                    continue;
                                }
                            }
                            return std::pair{moves, std::optional<int>()};
                        }
                }
    return std::nullopt;
}

}  // namespace condetail

// Fold the tangles with partial_sum, close the fold two ways (plain closure
// vs. closure through the clasp), and connect the results by a ribbon movie.
inline CompanionBundle build_companion(const std::vector<Tangle>& tangles) {
    if (tangles.empty())
        throw EmptyList("build_companion needs at least one tangle");
    Tangle fold = tangles.front();
    for (size_t k = 1; k < tangles.size(); ++k) fold = partial_sum(fold, tangles[k]);
    Diagram composite = closure(fold, ClosureKind::denominator);
    Diagram companion = tangle_sum(fold, clasp());
    auto found = condetail::companion_movie(composite, companion);
    if (!found)
        throw CheckFailed("no ribbon movie from the closure to the clasped diagram was found");
    auto& [moves, bp] = *found;
    if (bp) {
        composite = composite.with_basepoint(*bp);
        companion = companion.with_basepoint(*bp);
    }
    Movie movie(composite, moves);
    return CompanionBundle{std::move(composite), std::move(companion), std::move(movie), bp};
}

}  // namespace kh

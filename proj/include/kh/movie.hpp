#pragma once

// Elementary cobordism movies between link diagrams, and the chain maps
// they induce on the F2 Khovanov complexes of their frames.
//
// A movie is a start diagram plus an ordered list of moves.  Moves carry
// explicit edge data so that applicability is machine-checkable:
//
//   {"move":"birth","loop":l}
//       a new free loop appears; l must be the id it receives, which is
//       always max_edge() + 1 of the current frame.
//   {"move":"death","loop":l}
//       the free loop l disappears.
//   {"move":"saddle","edges":[a,b],"new_edges":[c,d]}
//       oriented band between arcs a and b: the replacement arc c runs
//       from a's tail to b's head, d from b's tail to a's head.  Both
//       arcs must pass crossings, or both be free loops: [a,b] with two
//       distinct loops merges them into one loop, [l,l] with a repeated
//       loop id splits l in two.  In the loop cases new_edges holds the
//       normalized ids of the resulting loops ([x,x] for a merge).
//   {"move":"r1_pos","edge":e,"variant":"under","new_edges":[l,e2]}
//       positive curl on edge e; "under"/"over" says which way the strand
//       passes itself first.  e keeps the piece at its tail, e2 takes the
//       piece at its old head site, l is the curl edge.  The new crossing
//       is appended to the crossing list.  When e is a free loop the loop
//       is consumed and e2 is the whole remaining arc.  r1_neg likewise.
//   {"move":"r1_pos","elim":true,"loop":l}
//       remove the curl whose doubled edge is l (sign must match).
//   {"move":"r2_intro","moving":a,"static":b,"over":true,"side":"L",
//    "tailfirst":true,"new_edges":[m,a2,bm,b2]}
//       push arc a across arc b, creating two opposite crossings appended
//       as [near-tail, near-head] of the static arc.  over:true puts the
//       moving strand on top at both crossings; tailfirst says the moving
//       strand enters at the crossing nearer the static arc's tail; side
//       "L"/"R" picks the mirror layout ("L" makes the crossing where the
//       moving strand enters positive).  m is the moving strand's middle
//       piece, a2 its far piece, bm the static middle, b2 the static far
//       piece; free-loop arcs are consumed and contribute their two fresh
//       pieces.
//   {"move":"r2_elim","edges":[m,bm]}
//       cancel the bigon whose two middle arcs are m and bm.
//   {"move":"r3","edges":[e1,e2,e3]}
//       slide across the triangle whose sides are the three arcs; each
//       arc's strand swaps the order of its two triangle crossings, with
//       crossing pairings, signs and all edge ids preserved.
//
// Serialized movies are line-delimited: a {"start":"<pd>"} header record
// followed by one move record per line.  Serialization round-trips
// byte-exactly.
//
// Frames are validated eagerly.  A move whose site includes the basepoint
// edge throws BasepointTouched; an edge id that survives a move always
// denotes the same arc, so the basepoint never needs transporting.  Each
// move carries a fixed crossing-sign budget (R1: one crossing of the
// move's sign; R2: one of each; others: none); free-component orientation
// choices are re-picked if needed to meet it.
//
// Chain maps (all over F2): births label the new circle 1, deaths keep X
// and kill 1 on the dying circle, saddles apply the Frobenius merge/split
// at every resolution.  Reidemeister maps are strong deformation
// retractions: the complex of the bigger diagram is reduced by cancelling
// an invertible block of its differential (curl circle against the merged
// resolution for R1; the bigon circle's two-step filtration for R2; the
// same bigon reduction inside the triangle's fused corner for R3), after
// which the surviving generators match the smaller complex one-to-one.
// Compositions, homology functoriality and quantum shifts follow from the
// generic machinery in khcomplex.hpp.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "kh/diagram.hpp"
#include "kh/errors.hpp"
#include "kh/khcomplex.hpp"
#include "kh/linalg.hpp"
#include "kh/parallel.hpp"

namespace kh {

// -------------------------------------------------------------------- Move

// One elementary cobordism move.  Only the fields meaningful for `kind`
// are serialized; the rest keep their defaults.
struct Move {
    std::string kind;                 // birth|death|saddle|r1_pos|r1_neg|r2_intro|r2_elim|r3
    bool elim = false;                // r1_*: remove a curl instead of adding one
    int loop = -1;                    // birth/death: free-loop id; r1 elim: curl edge
    int edge = -1;                    // r1 intro: the edge receiving the curl
    std::string variant;              // r1 intro: "under" | "over"
    std::array<int, 2> edges{-1, -1};           // saddle / r2_elim sites
    std::array<int, 3> triangle{-1, -1, -1};    // r3 sites
    std::array<int, 2> new_edges{-1, -1};       // saddle / r1 intro replacements
    std::array<int, 4> new_edges4{-1, -1, -1, -1};  // r2_intro pieces
    int moving = -1;                  // r2_intro: arc pushed across
    int static_edge = -1;             // r2_intro: arc pushed over/under
    bool over = true;                 // r2_intro: moving strand on top
    std::string side = "L";           // r2_intro: mirror layout
    bool tailfirst = true;            // r2_intro: entry nearer static tail

    friend bool operator==(const Move&, const Move&) = default;
};

// ------------------------------------------------------------- JSON (de)ser

namespace movedetail {

inline const nlohmann::json& jfield(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end())
        throw MalformedInput(std::string("move record is missing field \"") + key + "\"");
    return *it;
}

inline int jint(const nlohmann::json& j, const char* key) {
    const auto& v = jfield(j, key);
    if (!v.is_number_integer())
        throw MalformedInput(std::string("field \"") + key + "\" must be an integer");
    return v.get<int>();
}

inline bool jbool(const nlohmann::json& j, const char* key) {
    const auto& v = jfield(j, key);
    if (!v.is_boolean())
        throw MalformedInput(std::string("field \"") + key + "\" must be a boolean");
    return v.get<bool>();
}

inline std::string jstr(const nlohmann::json& j, const char* key) {
    const auto& v = jfield(j, key);
    if (!v.is_string())
        throw MalformedInput(std::string("field \"") + key + "\" must be a string");
    return v.get<std::string>();
}

template <size_t N>
inline std::array<int, N> jints(const nlohmann::json& j, const char* key) {
    const auto& v = jfield(j, key);
    if (!v.is_array() || v.size() != N)
        throw MalformedInput(std::string("field \"") + key + "\" must be an array of " +
                             std::to_string(N) + " integers");
    std::array<int, N> out{};
    for (size_t t = 0; t < N; ++t) {
        if (!v[t].is_number_integer())
            throw MalformedInput(std::string("field \"") + key + "\" must hold integers");
        out[t] = v[t].get<int>();
    }
    return out;
}

inline void jonly(const nlohmann::json& j, std::initializer_list<const char*> keys) {
    for (auto& [key, _] : j.items()) {
        bool known = false;
        for (const char* k : keys)
            if (key == k) known = true;
        if (!known)
            throw MalformedInput("unknown field \"" + key + "\" in move record");
    }
}

}  // namespace movedetail

inline nlohmann::json move_to_json(const Move& m) {
    nlohmann::json j;
    j["move"] = m.kind;
    if (m.kind == "birth" || m.kind == "death") {
        j["loop"] = m.loop;
    } else if (m.kind == "saddle") {
        j["edges"] = m.edges;
        j["new_edges"] = m.new_edges;
    } else if (m.kind == "r1_pos" || m.kind == "r1_neg") {
        if (m.elim) {
            j["elim"] = true;
            j["loop"] = m.loop;
        } else {
            j["edge"] = m.edge;
            j["variant"] = m.variant;
            j["new_edges"] = m.new_edges;
        }
    } else if (m.kind == "r2_intro") {
        j["moving"] = m.moving;
        j["static"] = m.static_edge;
        j["over"] = m.over;
        j["side"] = m.side;
        j["tailfirst"] = m.tailfirst;
        j["new_edges"] = m.new_edges4;
    } else if (m.kind == "r2_elim") {
        j["edges"] = m.edges;
    } else if (m.kind == "r3") {
        j["edges"] = m.triangle;
    } else {
        throw MalformedInput("unknown move kind \"" + m.kind + "\"");
    }
    return j;
}

inline Move move_from_json(const nlohmann::json& j) {
    using namespace movedetail;
    if (!j.is_object()) throw MalformedInput("move record must be an object");
    Move m;
    m.kind = jstr(j, "move");
    if (m.kind == "birth" || m.kind == "death") {
        jonly(j, {"move", "loop"});
        m.loop = jint(j, "loop");
    } else if (m.kind == "saddle") {
        jonly(j, {"move", "edges", "new_edges"});
        m.edges = jints<2>(j, "edges");
        m.new_edges = jints<2>(j, "new_edges");
    } else if (m.kind == "r1_pos" || m.kind == "r1_neg") {
        if (j.contains("elim")) {
            jonly(j, {"move", "elim", "loop"});
            if (!jbool(j, "elim")) throw MalformedInput("field \"elim\" must be true when present");
            m.elim = true;
            m.loop = jint(j, "loop");
        } else {
            jonly(j, {"move", "edge", "variant", "new_edges"});
            m.edge = jint(j, "edge");
            m.variant = jstr(j, "variant");
            m.new_edges = jints<2>(j, "new_edges");
        }
    } else if (m.kind == "r2_intro") {
        jonly(j, {"move", "moving", "static", "over", "side", "tailfirst", "new_edges"});
        m.moving = jint(j, "moving");
        m.static_edge = jint(j, "static");
        m.over = jbool(j, "over");
        m.side = jstr(j, "side");
        m.tailfirst = jbool(j, "tailfirst");
        m.new_edges4 = jints<4>(j, "new_edges");
    } else if (m.kind == "r2_elim") {
        jonly(j, {"move", "edges"});
        m.edges = jints<2>(j, "edges");
    } else if (m.kind == "r3") {
        jonly(j, {"move", "edges"});
        m.triangle = jints<3>(j, "edges");
    } else {
        throw MalformedInput("unknown move kind \"" + m.kind + "\"");
    }
    return m;
}

// ---------------------------------------------------------------- StepInfo

// One applied move: both frames plus the bookkeeping the chain-map
// builders need.  Free loops are tracked by rank because their ids are
// renormalized on every frame.
struct StepInfo {
    Move mv;
    Diagram before, after;
    std::vector<int> loop_map;   // before loop rank -> after loop rank, -1 if gone
    int added_loops = 0;         // fresh loops appended at the end of after's list

    // circle-matching exceptions: small-frame edge -> curl-side edge that
    // lies on the corresponding circle (consumed loops, fresh loops)
    std::map<int, int> anchor;

    int curl_pos = -1;           // r1: crossing position in the curl-side frame
    int curl_pattern = 0;        // r1: 1..4, see curl tables below
    int r1_in = -1, r1_out = -1; // r1 elim: surviving / absorbed outer pieces

    int k1 = -1, k2 = -1;        // r2: crossing positions in the curl-side frame
    int mu = -1, bm = -1;        // r2: middle arcs (mu = the one passing over)
    int m_in = -1, m_out = -1;   // r2: outer pieces of the over strand
    int s_t = -1, s_h = -1;      // r2: outer pieces of the under strand
    int fresh_moving = -1, fresh_static = -1;  // r2 elim: fresh loop ids in after
    bool r2_cycle = false;       // r2 elim closed both strands into one loop

    int p_tm = -1, p_tb = -1, p_mb = -1;       // r3 crossing positions
    int e_top = -1, e_mid = -1, e_bot = -1;    // r3 strand middle arcs
};

// ------------------------------------------------------- rewrite machinery

namespace movedetail {

// free-loop input ids passed to the Diagram constructor; chosen far above
// any real edge id so loop ranks survive normalization untouched
constexpr int kLoopBase = 1 << 28;

inline void require_site(bool ok, const std::string& msg) {
    if (!ok) throw InvalidSite(msg);
}

inline bool is_loop(const Diagram& d, int e) {
    const auto& l = d.free_loops();
    return std::find(l.begin(), l.end(), e) != l.end();
}

inline void guard_bp(const Diagram& d, std::initializer_list<int> touched) {
    if (!d.basepoint()) return;
    for (int e : touched)
        if (e == *d.basepoint())
            throw BasepointTouched("move site touches the basepoint edge " +
                                   std::to_string(e));
}

inline void require_fresh(const Diagram& d, std::initializer_list<int> ids) {
    std::set<int> seen;
    for (int id : ids) {
        if (id <= 0 || id >= kLoopBase)
            throw InvalidSite("new edge id " + std::to_string(id) + " is out of range");
        if (!seen.insert(id).second)
            throw InvalidSite("new edge id " + std::to_string(id) + " is repeated");
        if (d.has_edge(id))
            throw InvalidSite("new edge id " + std::to_string(id) + " is already in use");
    }
}

inline std::vector<Occurrence> occurrences_of(const std::vector<Crossing>& xs, int edge) {
    std::vector<Occurrence> out;
    for (int k = 0; k < int(xs.size()); ++k)
        for (int s = 0; s < 4; ++s)
            if (xs[size_t(k)].e[size_t(s)] == edge) out.push_back({k, s});
    return out;
}

// largest crossing edge id; loop ids are normalized right above it
inline int crossing_max_edge(const Diagram& d) {
    int m = 0;
    for (auto& x : d.crossings())
        for (int e : x.e) m = std::max(m, e);
    return m;
}

// the ids `fresh` new loops receive after `removed` current loops vanish
inline std::vector<int> fresh_loop_ids(const Diagram& d, int removed, int fresh) {
    int base = crossing_max_edge(d) + int(d.free_loops().size()) - removed;
    std::vector<int> out;
    for (int t = 0; t < fresh; ++t) out.push_back(base + 1 + t);
    return out;
}

struct Rebuilt {
    Diagram dia;
    std::vector<int> loop_map;
    int added_loops = 0;
};

// Assemble the next frame from rewritten crossings plus loop bookkeeping.
// `survivors` lists surviving loops by before-frame id in rank order;
// `fresh` loops are appended after them.  Orientation overrides are
// inherited where possible and otherwise re-chosen so the crossing-sign
// budget is met; per-crossing signs enter the homology only through the
// n+/n- totals, so any budget-meeting choice yields the same complexes.
inline Rebuilt rebuild(const Diagram& before, std::vector<Crossing> xs,
                       const std::vector<int>& survivors, int fresh,
                       int dplus, int dminus) {
    std::vector<int> loop_in;
    for (int r = 0; r < int(survivors.size()) + fresh; ++r)
        loop_in.push_back(kLoopBase + r);

    std::optional<int> bp = before.basepoint();
    if (bp && is_loop(before, *bp)) {
        auto it = std::find(survivors.begin(), survivors.end(), *bp);
        if (it == survivors.end())
            throw CheckFailed("basepoint loop vanished without tripping a guard");
        bp = kLoopBase + int(it - survivors.begin());
    }

    std::set<int> xedges;
    for (auto& x : xs)
        for (int e : x.e) xedges.insert(e);
    std::map<int, char> inherited;
    for (auto& [e, c] : before.orientation_overrides())
        if (xedges.count(e)) inherited[e] = c;

    int want_p = before.n_plus() + dplus;
    int want_m = before.n_minus() + dminus;
    auto attempt = [&](const std::map<int, char>& ov) -> std::optional<Diagram> {
        try {
            Diagram d(xs, loop_in, bp, ov);
            if (d.n_plus() == want_p && d.n_minus() == want_m) return d;
            return std::nullopt;
        } catch (const OrientationConflict&) {
            return std::nullopt;
        }
    };

    std::optional<Diagram> built = attempt(inherited);
    if (!built && !inherited.empty()) built = attempt({});
    if (!built) {
        // explore the free-component orientation choices
        Diagram base(xs, loop_in, bp, {});  // throws if genuinely unorientable
        std::vector<int> free_min;
        for (auto& comp : base.components()) {
            if (is_loop(base, comp.front())) continue;
            bool constrained = false;
            for (int e : comp)
                for (const Occurrence& s : base.sites(e))
                    if (s.slot == 0 || s.slot == 2) constrained = true;
            if (!constrained) free_min.push_back(comp.front());
        }
        if (int(free_min.size()) > 16)
            throw OrientationConflict("too many free components to orient by search");
        for (uint32_t mask = 1; mask < (1u << free_min.size()) && !built; ++mask) {
            std::map<int, char> ov;
            for (int t = 0; t < int(free_min.size()); ++t)
                if (mask >> t & 1) ov[free_min[size_t(t)]] = '-';
            built = attempt(ov);
        }
    }
    if (!built)
        throw OrientationConflict(
            "move cannot meet its crossing sign budget (+" + std::to_string(dplus) +
            ",+" + std::to_string(dminus) + " over " + std::to_string(before.n_plus()) +
            "/" + std::to_string(before.n_minus()) + ")");

    Rebuilt out{std::move(*built), {}, fresh};
    const auto& bl = before.free_loops();
    out.loop_map.assign(bl.size(), -1);
    for (int r = 0; r < int(bl.size()); ++r) {
        auto it = std::find(survivors.begin(), survivors.end(), bl[size_t(r)]);
        if (it != survivors.end()) out.loop_map[size_t(r)] = int(it - survivors.begin());
    }
    return out;
}

// ------------------------------------------------------ individual rewrites

inline StepInfo apply_birth(const Diagram& before, const Move& mv) {
    int expected = fresh_loop_ids(before, 0, 1)[0];
    require_site(mv.loop == expected,
                 "a loop born here receives id " + std::to_string(expected) +
                 ", not " + std::to_string(mv.loop));
    Rebuilt rb = rebuild(before, before.crossings(), before.free_loops(), 1, 0, 0);
    StepInfo st;
    st.mv = mv;
    st.before = before;
    st.after = std::move(rb.dia);
    st.loop_map = std::move(rb.loop_map);
    st.added_loops = 1;
    return st;
}

inline StepInfo apply_death(const Diagram& before, const Move& mv) {
    require_site(is_loop(before, mv.loop),
                 "edge " + std::to_string(mv.loop) + " is not a free loop");
    guard_bp(before, {mv.loop});
    std::vector<int> survivors;
    for (int l : before.free_loops())
        if (l != mv.loop) survivors.push_back(l);
    Rebuilt rb = rebuild(before, before.crossings(), survivors, 0, 0, 0);
    StepInfo st;
    st.mv = mv;
    st.before = before;
    st.after = std::move(rb.dia);
    st.loop_map = std::move(rb.loop_map);
    return st;
}

inline StepInfo apply_saddle(const Diagram& before, const Move& mv) {
    int a = mv.edges[0], b = mv.edges[1];
    require_site(before.has_edge(a), "saddle arc " + std::to_string(a) + " does not exist");
    require_site(before.has_edge(b), "saddle arc " + std::to_string(b) + " does not exist");
    guard_bp(before, {a, b});
    bool la = is_loop(before, a), lb = is_loop(before, b);
    StepInfo st;
    st.mv = mv;
    st.before = before;
    if (la && lb) {
        std::vector<int> survivors;
        if (a == b) {
            // split one free loop in two
            auto want = fresh_loop_ids(before, 1, 2);
            require_site(mv.new_edges[0] == want[0] && mv.new_edges[1] == want[1],
                         "splitting this loop yields ids " + std::to_string(want[0]) +
                         "," + std::to_string(want[1]));
            for (int l : before.free_loops())
                if (l != a) survivors.push_back(l);
            Rebuilt rb = rebuild(before, before.crossings(), survivors, 2, 0, 0);
            st.after = std::move(rb.dia);
            st.loop_map = std::move(rb.loop_map);
            st.added_loops = 2;
        } else {
            // merge two free loops into one
            int want = fresh_loop_ids(before, 2, 1)[0];
            require_site(mv.new_edges[0] == want && mv.new_edges[1] == want,
                         "merging these loops yields id " + std::to_string(want) +
                         " (listed twice)");
            for (int l : before.free_loops())
                if (l != a && l != b) survivors.push_back(l);
            Rebuilt rb = rebuild(before, before.crossings(), survivors, 1, 0, 0);
            st.after = std::move(rb.dia);
            st.loop_map = std::move(rb.loop_map);
            st.added_loops = 1;
        }
        return st;
    }
    require_site(!la && !lb,
                 "saddle arcs must both pass crossings or both be free loops");
    require_site(a != b, "a crossing arc cannot be banded to itself");
    int c = mv.new_edges[0], d = mv.new_edges[1];
    require_fresh(before, {c, d});
    Occurrence ta = before.tail_site(a), ha = before.head_site(a);
    Occurrence tb = before.tail_site(b), hb = before.head_site(b);
    std::vector<Crossing> xs = before.crossings();
    xs[size_t(ta.crossing)].e[size_t(ta.slot)] = c;
    xs[size_t(hb.crossing)].e[size_t(hb.slot)] = c;
    xs[size_t(tb.crossing)].e[size_t(tb.slot)] = d;
    xs[size_t(ha.crossing)].e[size_t(ha.slot)] = d;
    Rebuilt rb = rebuild(before, std::move(xs), before.free_loops(), 0, 0, 0);
    st.after = std::move(rb.dia);
    st.loop_map = std::move(rb.loop_map);
    return st;
}

// curl tables: pattern -> tuple layout, with l the doubled curl edge,
// e the incoming and e2 the outgoing piece.
//   1: X[e,e2,l,l]  positive, strand passes under first
//   2: X[e,l,l,e2]  negative, under first
//   3: X[l,e,e2,l]  negative, over first
//   4: X[l,l,e2,e]  positive, over first
inline Crossing curl_tuple(int pattern, int e_in, int e_out, int l) {
    Crossing c;
    switch (pattern) {
        case 1: c.e = {e_in, e_out, l, l}; break;
        case 2: c.e = {e_in, l, l, e_out}; break;
        case 3: c.e = {l, e_in, e_out, l}; break;
        case 4: c.e = {l, l, e_out, e_in}; break;
        default: throw CheckFailed("bad curl pattern");
    }
    return c;
}

inline StepInfo apply_r1_intro(const Diagram& before, const Move& mv) {
    bool pos = mv.kind == "r1_pos";
    require_site(mv.variant == "under" || mv.variant == "over",
                 "curl variant must be \"under\" or \"over\"");
    require_site(before.has_edge(mv.edge),
                 "edge " + std::to_string(mv.edge) + " does not exist");
    int l = mv.new_edges[0], e2 = mv.new_edges[1];
    require_fresh(before, {l, e2});
    guard_bp(before, {mv.edge});
    int pattern = pos ? (mv.variant == "under" ? 1 : 4) : (mv.variant == "under" ? 2 : 3);

    std::vector<Crossing> xs = before.crossings();
    std::vector<int> survivors = before.free_loops();
    StepInfo st;
    st.mv = mv;
    st.before = before;
    if (is_loop(before, mv.edge)) {
        xs.push_back(curl_tuple(pattern, e2, e2, l));
        survivors.erase(std::find(survivors.begin(), survivors.end(), mv.edge));
        st.anchor[mv.edge] = e2;
    } else {
        Occurrence h = before.head_site(mv.edge);
        xs[size_t(h.crossing)].e[size_t(h.slot)] = e2;
        xs.push_back(curl_tuple(pattern, mv.edge, e2, l));
    }
    Rebuilt rb = rebuild(before, std::move(xs), survivors, 0, pos ? 1 : 0, pos ? 0 : 1);
    st.after = std::move(rb.dia);
    st.loop_map = std::move(rb.loop_map);
    st.curl_pos = int(before.crossings().size());
    st.curl_pattern = pattern;
    return st;
}

inline StepInfo apply_r1_elim(const Diagram& before, const Move& mv) {
    bool pos = mv.kind == "r1_pos";
    int l = mv.loop;
    require_site(before.has_edge(l) && !is_loop(before, l),
                 "edge " + std::to_string(l) + " is not a curl edge");
    auto occ = occurrences_of(before.crossings(), l);
    require_site(occ.size() == 2 && occ[0].crossing == occ[1].crossing,
                 "edge " + std::to_string(l) + " does not double back at one crossing");
    int k = occ[0].crossing;
    int s1 = std::min(occ[0].slot, occ[1].slot), s2 = std::max(occ[0].slot, occ[1].slot);
    int pattern = 0;
    if (s1 == 2 && s2 == 3) pattern = 1;
    else if (s1 == 1 && s2 == 2) pattern = 2;
    else if (s1 == 0 && s2 == 3) pattern = 3;
    else if (s1 == 0 && s2 == 1) pattern = 4;
    require_site(pattern != 0, "edge " + std::to_string(l) + " does not form a curl");
    require_site((pattern == 1 || pattern == 4) == pos,
                 "curl sign does not match the move kind");

    const Crossing& kx = before.crossings()[size_t(k)];
    int o1 = -1, o2 = -1;  // the two non-curl slots
    for (int s = 0; s < 4; ++s)
        if (s != s1 && s != s2) (o1 < 0 ? o1 : o2) = s;
    int x1 = kx.e[size_t(o1)], x2 = kx.e[size_t(o2)];

    StepInfo st;
    st.mv = mv;
    st.before = before;
    st.curl_pos = k;
    st.curl_pattern = pattern;
    std::vector<Crossing> xs = before.crossings();
    xs.erase(xs.begin() + k);
    if (x1 == x2) {
        // the curl was a closed one-crossing circle: it becomes a free loop
        guard_bp(before, {l, x1});
        st.r1_in = st.r1_out = x1;
        Rebuilt rb = rebuild(before, std::move(xs), before.free_loops(), 1,
                             pos ? -1 : 0, pos ? 0 : -1);
        st.after = std::move(rb.dia);
        st.loop_map = std::move(rb.loop_map);
        st.added_loops = 1;
        st.anchor[st.after.free_loops().back()] = x1;
        return st;
    }
    bool x1_in = before.head_site(x1) == Occurrence{k, o1};
    int e_in = x1_in ? x1 : x2;
    int e_out = x1_in ? x2 : x1;
    guard_bp(before, {l, e_out});
    st.r1_in = e_in;
    st.r1_out = e_out;
    for (auto& x : xs)
        for (int& e : x.e)
            if (e == e_out) e = e_in;
    Rebuilt rb = rebuild(before, std::move(xs), before.free_loops(), 0,
                         pos ? -1 : 0, pos ? 0 : -1);
    st.after = std::move(rb.dia);
    st.loop_map = std::move(rb.loop_map);
    return st;
}

inline StepInfo apply_r2_intro(const Diagram& before, const Move& mv) {
    int alpha = mv.moving, beta = mv.static_edge;
    require_site(before.has_edge(alpha),
                 "moving arc " + std::to_string(alpha) + " does not exist");
    require_site(before.has_edge(beta),
                 "static arc " + std::to_string(beta) + " does not exist");
    require_site(alpha != beta, "a push needs two distinct arcs");
    require_site(mv.side == "L" || mv.side == "R", "push side must be \"L\" or \"R\"");
    int mu = mv.new_edges4[0], a2 = mv.new_edges4[1];
    int bm = mv.new_edges4[2], b2 = mv.new_edges4[3];
    require_fresh(before, {mu, a2, bm, b2});
    guard_bp(before, {alpha, beta});
    bool loop_m = is_loop(before, alpha), loop_s = is_loop(before, beta);
    int m_in = loop_m ? a2 : alpha, m_out = a2;
    int s_t = loop_s ? b2 : beta, s_h = b2;

    std::vector<Crossing> xs = before.crossings();
    if (!loop_m) {
        Occurrence h = before.head_site(alpha);
        xs[size_t(h.crossing)].e[size_t(h.slot)] = a2;
    }
    if (!loop_s) {
        Occurrence h = before.head_site(beta);
        xs[size_t(h.crossing)].e[size_t(h.slot)] = b2;
    }
    bool left = mv.side == "L";
    // is_ka: the moving strand enters this crossing.  Side "L" seats the
    // entering over strand at slot 3 (making that crossing positive).
    auto cross_over = [&](bool is_ka, int uin, int uout) {
        int oin = is_ka ? m_in : mu, oout = is_ka ? mu : m_out;
        Crossing c;
        if (left == is_ka) c.e = {uin, oout, uout, oin};
        else c.e = {uin, oin, uout, oout};
        return c;
    };
    auto cross_under = [&](bool is_ka, int oarr, int odep) {
        int uin = is_ka ? m_in : mu, uout = is_ka ? mu : m_out;
        Crossing c;
        if (left == is_ka) c.e = {uin, odep, uout, oarr};
        else c.e = {uin, oarr, uout, odep};
        return c;
    };
    Crossing kt = mv.over ? cross_over(mv.tailfirst, s_t, bm)
                          : cross_under(mv.tailfirst, s_t, bm);
    Crossing kh = mv.over ? cross_over(!mv.tailfirst, bm, s_h)
                          : cross_under(!mv.tailfirst, bm, s_h);
    xs.push_back(kt);
    xs.push_back(kh);

    std::vector<int> survivors;
    for (int l : before.free_loops())
        if (l != alpha && l != beta) survivors.push_back(l);
    Rebuilt rb = rebuild(before, std::move(xs), survivors, 0, 1, 1);
    StepInfo st;
    st.mv = mv;
    st.before = before;
    st.after = std::move(rb.dia);
    st.loop_map = std::move(rb.loop_map);
    st.k1 = int(before.crossings().size());
    st.k2 = st.k1 + 1;
    st.mu = mv.over ? mu : bm;  // the middle arc passing over
    st.bm = mv.over ? bm : mu;
    st.m_in = mv.over ? m_in : s_t;
    st.m_out = mv.over ? m_out : s_h;
    st.s_t = mv.over ? s_t : m_in;
    st.s_h = mv.over ? s_h : m_out;
    // at the surviving mixed resolution each consumed loop's circle keeps
    // its outer remnant piece (the middles swap allegiance there)
    if (loop_m) st.anchor[alpha] = a2;
    if (loop_s) st.anchor[beta] = b2;
    return st;
}

inline StepInfo apply_r2_elim(const Diagram& before, const Move& mv) {
    int ea = mv.edges[0], eb = mv.edges[1];
    require_site(ea != eb, "the two bigon arcs must be distinct");
    require_site(before.has_edge(ea) && !is_loop(before, ea),
                 "arc " + std::to_string(ea) + " does not pass crossings");
    require_site(before.has_edge(eb) && !is_loop(before, eb),
                 "arc " + std::to_string(eb) + " does not pass crossings");
    const auto& xs0 = before.crossings();
    auto oa = occurrences_of(xs0, ea), ob = occurrences_of(xs0, eb);
    std::set<int> ka{oa[0].crossing, oa[1].crossing};
    std::set<int> kb{ob[0].crossing, ob[1].crossing};
    require_site(ka.size() == 2 && ka == kb,
                 "arcs " + std::to_string(ea) + "," + std::to_string(eb) +
                 " do not share two crossings");
    int k1 = *ka.begin(), k2 = *std::next(ka.begin());
    auto slot_at = [&](const std::vector<Occurrence>& o, int k) {
        return o[0].crossing == k ? o[0].slot : o[1].slot;
    };
    int sa1 = slot_at(oa, k1), sa2 = slot_at(oa, k2);
    int sb1 = slot_at(ob, k1), sb2 = slot_at(ob, k2);
    bool a_over = sa1 % 2 == 1;
    require_site((sa2 % 2 == 1) == a_over && (sb1 % 2 == 1) != a_over &&
                     (sb2 % 2 == 1) != a_over,
                 "one arc must pass over both crossings and the other under both");
    int w1 = (sa1 + sb1) % 4 == 1 ? 0 : 1;
    int w2 = (sa2 + sb2) % 4 == 1 ? 0 : 1;
    require_site(w1 != w2, "the arcs do not bound a planar bigon");
    require_site(xs0[size_t(k1)].sign == -xs0[size_t(k2)].sign,
                 "bigon crossings must have opposite signs");

    int om = a_over ? ea : eb, um = a_over ? eb : ea;
    auto over_in = [&](int k) { return xs0[size_t(k)].sign > 0 ? 3 : 1; };
    auto over_out = [&](int k) { return xs0[size_t(k)].sign > 0 ? 1 : 3; };
    auto oo = occurrences_of(xs0, om);
    int kA = slot_at(oo, k1) == over_out(k1) ? k1 : k2;
    int kB = kA == k1 ? k2 : k1;
    if (slot_at(oo, kA) != over_out(kA) || slot_at(oo, kB) != over_in(kB))
        throw KhError("bigon middle arc is incoherently oriented");
    int m_in = xs0[size_t(kA)].e[size_t(over_in(kA))];
    int m_out = xs0[size_t(kB)].e[size_t(over_out(kB))];
    auto ou = occurrences_of(xs0, um);
    int kt = slot_at(ou, k1) == 2 ? k1 : k2;
    int kh = kt == k1 ? k2 : k1;
    if (slot_at(ou, kt) != 2 || slot_at(ou, kh) != 0)
        throw KhError("bigon middle arc is incoherently oriented");
    int s_t = xs0[size_t(kt)].e[0];
    int s_h = xs0[size_t(kh)].e[2];

    bool closed_m = m_in == m_out, closed_s = s_t == s_h;
    bool cycle = !closed_m && !closed_s && m_in == s_h && m_out == s_t;
    guard_bp(before, {om, um, m_out, s_h});

    std::vector<Crossing> xs = xs0;
    xs.erase(xs.begin() + std::max(k1, k2));
    xs.erase(xs.begin() + std::min(k1, k2));
    int fresh = 0;
    if (cycle) {
        fresh = 1;
    } else {
        std::map<int, int> ren;
        if (!closed_m) ren[m_out] = m_in;
        if (!closed_s) ren[s_h] = s_t;
        for (auto& x : xs)
            for (int& e : x.e) {
                int hops = 0;
                while (ren.count(e)) {
                    e = ren.at(e);
                    if (++hops > 4) throw KhError("bigon rename did not settle");
                }
            }
        fresh = int(closed_m) + int(closed_s);
    }
    Rebuilt rb = rebuild(before, std::move(xs), before.free_loops(), fresh, -1, -1);
    StepInfo st;
    st.mv = mv;
    st.before = before;
    st.after = std::move(rb.dia);
    st.loop_map = std::move(rb.loop_map);
    st.added_loops = fresh;
    st.k1 = std::min(k1, k2);
    st.k2 = std::max(k1, k2);
    st.mu = om;
    st.bm = um;
    st.m_in = m_in;
    st.m_out = m_out;
    st.s_t = s_t;
    st.s_h = s_h;
    st.r2_cycle = cycle;
    const auto& al = st.after.free_loops();
    int next = int(al.size()) - fresh;
    if (cycle) {
        st.fresh_moving = al[size_t(next)];
        st.anchor[st.fresh_moving] = m_in;
    } else {
        // anchor each fresh loop to the closed strand's outer piece: that is
        // the edge its circle keeps at the surviving mixed resolution
        if (closed_m) {
            st.fresh_moving = al[size_t(next++)];
            st.anchor[st.fresh_moving] = m_in;
        }
        if (closed_s) {
            st.fresh_static = al[size_t(next)];
            st.anchor[st.fresh_static] = s_t;
        }
    }
    return st;
}

inline StepInfo apply_r3(const Diagram& before, const Move& mv) {
    const std::array<int, 3>& e = mv.triangle;
    require_site(e[0] != e[1] && e[0] != e[2] && e[1] != e[2],
                 "the three triangle arcs must be distinct");
    for (int x : e)
        require_site(before.has_edge(x) && !is_loop(before, x),
                     "arc " + std::to_string(x) + " does not pass crossings");
    const auto& xs0 = before.crossings();
    auto pair_cross = [&](int x, int y) {
        int found = -1;
        for (int k = 0; k < int(xs0.size()); ++k) {
            bool hx = false, hy = false;
            for (int s = 0; s < 4; ++s) {
                hx |= xs0[size_t(k)].e[size_t(s)] == x;
                hy |= xs0[size_t(k)].e[size_t(s)] == y;
            }
            if (hx && hy) {
                require_site(found < 0, "arcs " + std::to_string(x) + "," +
                                            std::to_string(y) + " share two crossings");
                found = k;
            }
        }
        require_site(found >= 0, "arcs " + std::to_string(x) + "," + std::to_string(y) +
                                     " do not cross");
        return found;
    };
    int K[3] = {pair_cross(e[0], e[1]), pair_cross(e[0], e[2]), pair_cross(e[1], e[2])};
    require_site(K[0] != K[1] && K[0] != K[2] && K[1] != K[2],
                 "the three arcs do not form a triangle");
    auto slot_of = [&](int k, int edge) {
        for (int s = 0; s < 4; ++s)
            if (xs0[size_t(k)].e[size_t(s)] == edge) return s;
        throw CheckFailed("edge not at expected crossing");
    };
    // over-count of each arc's strand across its two triangle crossings
    int cnt[3];
    cnt[0] = slot_of(K[0], e[0]) % 2 + slot_of(K[1], e[0]) % 2;
    cnt[1] = slot_of(K[0], e[1]) % 2 + slot_of(K[2], e[1]) % 2;
    cnt[2] = slot_of(K[1], e[2]) % 2 + slot_of(K[2], e[2]) % 2;
    int top = -1, mid = -1, bot = -1;
    for (int t = 0; t < 3; ++t) {
        if (cnt[t] == 2) top = t;
        else if (cnt[t] == 1) mid = t;
        else bot = t;
    }
    require_site(top >= 0 && mid >= 0 && bot >= 0,
                 "the over-passages do not admit a triangle slide");
    int eT = e[size_t(top)], eM = e[size_t(mid)], eB = e[size_t(bot)];
    guard_bp(before, {e[0], e[1], e[2]});
    auto pair_pos = [&](int x, int y) {
        if ((x == e[0] && y == e[1]) || (x == e[1] && y == e[0])) return K[0];
        if ((x == e[0] && y == e[2]) || (x == e[2] && y == e[0])) return K[1];
        return K[2];
    };
    int p_tm = pair_pos(eT, eM), p_tb = pair_pos(eT, eB), p_mb = pair_pos(eM, eB);

    struct Passage {
        int k_first, k_second, s_in, s_out;
    };
    auto passage = [&](int es) {
        Occurrence t = before.tail_site(es), h = before.head_site(es);
        Passage p;
        p.k_first = t.crossing;
        p.k_second = h.crossing;
        if (t.slot == 2) p.s_in = xs0[size_t(t.crossing)].e[0];
        else p.s_in = xs0[size_t(t.crossing)].e[size_t(t.slot == 1 ? 3 : 1)];
        if (h.slot == 0) p.s_out = xs0[size_t(h.crossing)].e[2];
        else p.s_out = xs0[size_t(h.crossing)].e[size_t(h.slot == 3 ? 1 : 3)];
        return p;
    };
    Passage pT = passage(eT), pM = passage(eM), pB = passage(eB);

    std::vector<Crossing> xs = xs0;
    // each strand swaps the order of its two triangle crossings; the pair
    // at each crossing, its sign, and all edge ids are preserved
    auto rewrite = [&](int pos, int ep, const Passage& pp, int eq, const Passage& pq) {
        bool q_first = pos == pq.k_second;  // q's new first crossing
        int uin = q_first ? pq.s_in : eq;
        int uout = q_first ? eq : pq.s_out;
        bool p_first = pos == pp.k_second;
        int oin = p_first ? pp.s_in : ep;
        int oout = p_first ? ep : pp.s_out;
        Crossing c;
        if (xs0[size_t(pos)].sign > 0) c.e = {uin, oout, uout, oin};
        else c.e = {uin, oin, uout, oout};
        xs[size_t(pos)] = c;
    };
    rewrite(p_tm, eT, pT, eM, pM);
    rewrite(p_tb, eT, pT, eB, pB);
    rewrite(p_mb, eM, pM, eB, pB);

    Rebuilt rb = rebuild(before, std::move(xs), before.free_loops(), 0, 0, 0);
    StepInfo st;
    st.mv = mv;
    st.before = before;
    st.after = std::move(rb.dia);
    st.loop_map = std::move(rb.loop_map);
    st.p_tm = p_tm;
    st.p_tb = p_tb;
    st.p_mb = p_mb;
    st.e_top = eT;
    st.e_mid = eM;
    st.e_bot = eB;
    return st;
}

}  // namespace movedetail

// Apply one move, returning both frames plus bookkeeping.
inline StepInfo apply_step(const Diagram& d, const Move& mv) {
    using namespace movedetail;
    if (mv.kind == "birth") return apply_birth(d, mv);
    if (mv.kind == "death") return apply_death(d, mv);
    if (mv.kind == "saddle") return apply_saddle(d, mv);
    if (mv.kind == "r1_pos" || mv.kind == "r1_neg")
        return mv.elim ? apply_r1_elim(d, mv) : apply_r1_intro(d, mv);
    if (mv.kind == "r2_intro") return apply_r2_intro(d, mv);
    if (mv.kind == "r2_elim") return apply_r2_elim(d, mv);
    if (mv.kind == "r3") return apply_r3(d, mv);
    throw MalformedInput("unknown move kind \"" + mv.kind + "\"");
}

inline Diagram apply_move(const Diagram& d, const Move& mv) {
    return apply_step(d, mv).after;
}

// The move undoing a performed step, valid on the step's after frame.
inline Move invert_move(const StepInfo& st) {
    using namespace movedetail;
    const Move& m = st.mv;
    Move r;
    r.kind = m.kind;
    if (m.kind == "birth") {
        r.kind = "death";
        r.loop = m.loop;
    } else if (m.kind == "death") {
        r.kind = "birth";
        r.loop = fresh_loop_ids(st.after, 0, 1)[0];
    } else if (m.kind == "saddle") {
        r.edges = m.new_edges;
        bool la = is_loop(st.before, m.edges[0]);
        if (!la) {
            r.new_edges = m.edges;
        } else if (m.edges[0] == m.edges[1]) {
            int want = fresh_loop_ids(st.after, 2, 1)[0];
            r.new_edges = {want, want};
        } else {
            auto want = fresh_loop_ids(st.after, 1, 2);
            r.new_edges = {want[0], want[1]};
        }
    } else if (m.kind == "r1_pos" || m.kind == "r1_neg") {
        if (!m.elim) {
            r.elim = true;
            r.loop = m.new_edges[0];
        } else {
            r.edge = st.added_loops ? st.after.free_loops().back() : st.r1_in;
            r.variant = (st.curl_pattern == 1 || st.curl_pattern == 2) ? "under" : "over";
            r.new_edges = {m.loop, st.r1_out};
        }
    } else if (m.kind == "r2_intro") {
        r.kind = "r2_elim";
        r.edges = {m.new_edges4[0], m.new_edges4[2]};
    } else if (m.kind == "r2_elim") {
        if (st.r2_cycle)
            throw KhError("a bigon removal that closes both strands into one loop "
                          "has no single inverse move");
        r.kind = "r2_intro";
        int over_id = st.fresh_moving >= 0 ? st.fresh_moving : st.m_in;
        int under_id = st.fresh_static >= 0 ? st.fresh_static : st.s_t;
        int ka = st.before.head_site(st.m_in).crossing;  // over strand's tail crossing
        int kt = st.before.head_site(st.s_t).crossing;   // under strand's tail crossing
        r.tailfirst = ka == kt;
        // the push appends the static strand's tail crossing first, so give
        // the static role to the strand whose tail crossing was removed
        // first; that replays the original crossing order exactly
        if (kt == st.k1 || ka == kt) {
            r.over = true;
            r.moving = over_id;
            r.static_edge = under_id;
            r.side = st.before.crossings()[size_t(ka)].sign > 0 ? "L" : "R";
            r.new_edges4 = {st.mu, st.m_out, st.bm, st.s_h};
        } else {
            r.over = false;
            r.moving = under_id;
            r.static_edge = over_id;
            r.side = st.before.crossings()[size_t(kt)].sign > 0 ? "L" : "R";
            r.new_edges4 = {st.bm, st.s_h, st.mu, st.m_out};
        }
    }
    // r3 is its own inverse
    else if (m.kind == "r3") {
        r.triangle = m.triangle;
    }
    return r;
}

// ------------------------------------------------------------------- Movie

class Movie {
public:
    Movie(Diagram start, std::vector<Move> moves) : moves_(std::move(moves)) {
        frames_.push_back(std::move(start));
        for (const Move& m : moves_) {
            steps_.push_back(apply_step(frames_.back(), m));
            frames_.push_back(steps_.back().after);
        }
    }

    static Movie parse(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        std::optional<Diagram> start;
        std::vector<Move> moves;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& ex) {
                throw MalformedInput("line " + std::to_string(lineno) + ": " + ex.what());
            }
            try {
                if (!start) {
                    if (!j.is_object() || !j.contains("start") || !j.at("start").is_string())
                        throw MalformedInput("first record must be {\"start\":\"<diagram>\"}");
                    movedetail::jonly(j, {"start"});
                    start = Diagram::parse(j.at("start").get<std::string>());
                } else {
                    moves.push_back(move_from_json(j));
                }
            } catch (const MalformedInput& ex) {
                throw MalformedInput("line " + std::to_string(lineno) + ": " + ex.what());
            }
        }
        if (!start) throw MalformedInput("movie text has no records");
        return Movie(std::move(*start), std::move(moves));
    }

    static Movie from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw MalformedInput("cannot read movie file " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    std::string serialize() const {
        nlohmann::json hdr;
        hdr["start"] = frames_.front().serialize();
        std::string out = hdr.dump() + "\n";
        for (const Move& m : moves_) out += move_to_json(m).dump() + "\n";
        return out;
    }

    void to_file(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw KhError("cannot write movie file " + path);
        out << serialize();
    }

    const std::vector<Move>& moves() const { return moves_; }
    const std::vector<StepInfo>& steps() const { return steps_; }
    const std::vector<Diagram>& frames() const { return frames_; }
    const Diagram& start() const { return frames_.front(); }
    const Diagram& end() const { return frames_.back(); }

    // no deaths: every critical point has index 0 or 1
    bool is_ribbon() const {
        for (const Move& m : moves_)
            if (m.kind == "death") return false;
        return true;
    }

    // Euler characteristic of the traced surface; also the quantum shift
    // of the induced chain map.
    int euler_char() const {
        int chi = 0;
        for (const Move& m : moves_) {
            if (m.kind == "birth" || m.kind == "death") ++chi;
            else if (m.kind == "saddle") --chi;
        }
        return chi;
    }

    Movie reversed() const {
        std::vector<Move> rm;
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it)
            rm.push_back(invert_move(*it));
        return Movie(frames_.back(), std::move(rm));
    }

private:
    std::vector<Move> moves_;
    std::vector<StepInfo> steps_;
    std::vector<Diagram> frames_;
};

// ---------------------------------------------------- block cancellation

// Strong deformation retraction of a complex onto the complement of
// cancelled generator groups: the d-block from X(i,j) to Y(i+1,j) must be
// invertible.  include/project are (0,0) chain maps with project∘include
// the identity of the reduced complex.
struct Retraction {
    ComplexF2 reduced;
    ChainMapF2 include;   // reduced -> big
    ChainMapF2 project;   // big -> reduced
    std::map<Bidegree, std::vector<int>> rest;  // surviving big indices, ascending
};

namespace movedetail {

inline MatrixF2 submatrix(const MatrixF2& m, const std::vector<int>& rows,
                          const std::vector<int>& cols) {
    MatrixF2 out(int(rows.size()), int(cols.size()));
    for (int r = 0; r < int(rows.size()); ++r)
        for (int c = 0; c < int(cols.size()); ++c)
            if (m.get(rows[size_t(r)], cols[size_t(c)])) out.set(r, c, true);
    return out;
}

}  // namespace movedetail

inline Retraction cancel_groups(const ComplexF2& c,
                                const std::map<Bidegree, std::vector<int>>& xg,
                                const std::map<Bidegree, std::vector<int>>& yg) {
    using movedetail::submatrix;
    auto group = [](const std::map<Bidegree, std::vector<int>>& g, Bidegree ij)
        -> const std::vector<int>& {
        static const std::vector<int> none;
        auto it = g.find(ij);
        return it == g.end() ? none : it->second;
    };
    // complements, with sanity checks
    Retraction out;
    for (auto& [ij, n] : c.dims) {
        const auto& X = group(xg, ij);
        const auto& Y = group(yg, ij);
        std::vector<char> gone(size_t(n), 0);
        for (const auto* grp : {&X, &Y})
            for (int t : *grp) {
                if (t < 0 || t >= n || gone[size_t(t)])
                    throw CheckFailed("cancellation group index out of range or repeated");
                gone[size_t(t)] = 1;
            }
        std::vector<int> rest;
        for (int t = 0; t < n; ++t)
            if (!gone[size_t(t)]) rest.push_back(t);
        if (!rest.empty()) out.reduced.dims[ij] = int(rest.size());
        out.rest[ij] = std::move(rest);
    }
    for (auto& [ij, X] : xg) {
        if (!c.dims.count(ij)) throw CheckFailed("cancellation group at an empty bidegree");
        if (int(X.size()) != int(group(yg, {ij.first + 1, ij.second}).size()))
            throw CheckFailed("cancellation groups are not paired");
    }
    for (auto& [ij, Y] : yg)
        if (!Y.empty() && group(xg, {ij.first - 1, ij.second}).empty())
            throw CheckFailed("cancellation groups are not paired");

    // invert each cancelling block
    std::vector<Bidegree> keys;
    for (auto& [ij, X] : xg)
        if (!X.empty()) keys.push_back(ij);
    std::vector<MatrixF2> inv(keys.size());
    parallel_for(int(keys.size()), [&](int t) {
        auto [i, j] = keys[size_t(t)];
        MatrixF2 phi = submatrix(c.d(i, j), group(yg, {i + 1, j}), xg.at({i, j}));
        try {
            inv[size_t(t)] = inverse(phi);
        } catch (const CheckFailed&) {
            throw CheckFailed("cancelling block at (" + std::to_string(i) + "," +
                              std::to_string(j) + ") is not invertible");
        }
    });
    std::map<Bidegree, MatrixF2> phinv;
    for (size_t t = 0; t < keys.size(); ++t) phinv[keys[t]] = std::move(inv[t]);

    // assemble reduced differential, include and project
    std::vector<Bidegree> order;
    for (auto& [ij, _] : c.dims) order.push_back(ij);
    struct Slot {
        std::optional<MatrixF2> diff, inc, prj;
    };
    std::vector<Slot> slots(order.size());
    parallel_for(int(order.size()), [&](int t) {
        auto [i, j] = order[size_t(t)];
        int n = c.dim(i, j);
        const auto& R = out.rest.at({i, j});
        if (n == 0) return;
        const auto& X = group(xg, {i, j});
        const auto& Y = group(yg, {i, j});
        MatrixF2 A = c.d(i, j);
        std::vector<int> Rp;
        if (auto it = out.rest.find({i + 1, j}); it != out.rest.end()) Rp = it->second;
        const auto& Yp = group(yg, {i + 1, j});

        std::optional<MatrixF2> corr;  // phi^-1 * A[Y', R]
        if (!X.empty()) corr = phinv.at({i, j}) * submatrix(A, Yp, R);

        if (!R.empty() && !Rp.empty()) {
            MatrixF2 dred = submatrix(A, Rp, R);
            if (corr) dred = dred + submatrix(A, Rp, X) * *corr;
            slots[size_t(t)].diff = std::move(dred);
        }
        if (!R.empty()) {
            MatrixF2 inc(n, int(R.size()));
            for (int u = 0; u < int(R.size()); ++u) inc.set(R[size_t(u)], u, true);
            if (corr)
                for (int s = 0; s < int(X.size()); ++s)
                    for (int u = 0; u < int(R.size()); ++u)
                        if (corr->get(s, u)) inc.flip(X[size_t(s)], u);
            slots[size_t(t)].inc = std::move(inc);

            MatrixF2 prj(int(R.size()), n);
            for (int u = 0; u < int(R.size()); ++u) prj.set(u, R[size_t(u)], true);
            if (!Y.empty()) {
                // a cancelled partner maps to what its inverse image hits
                MatrixF2 Aprev = c.d(i - 1, j);
                MatrixF2 block =
                    submatrix(Aprev, R, group(xg, {i - 1, j})) * phinv.at({i - 1, j});
                for (int u = 0; u < int(R.size()); ++u)
                    for (int s = 0; s < int(Y.size()); ++s)
                        if (block.get(u, s)) prj.set(u, Y[size_t(s)], true);
            }
            slots[size_t(t)].prj = std::move(prj);
        }
    });
    for (size_t t = 0; t < order.size(); ++t) {
        if (slots[t].diff) out.reduced.diff[order[t]] = std::move(*slots[t].diff);
        if (slots[t].inc) out.include.mats[order[t]] = std::move(*slots[t].inc);
        if (slots[t].prj) out.project.mats[order[t]] = std::move(*slots[t].prj);
    }
    return out;
}

// ----------------------------------------------------- chain map builders

namespace movedetail {

// How small-cube generators embed among the survivors of the reduced big
// cube: insert fixed bits into the vertex, translate circle representative
// edges, and give the extra big circles their fixed labels.
struct LiftSpec {
    std::vector<std::pair<int, int>> bits;    // (crossing position, value), ascending
    std::map<int, int> xlat;                  // small edge -> big edge
    std::vector<std::pair<int, bool>> fixed;  // (big edge, label is X)
};

inline Gen lift_gen(const KhCube& small, const KhCube& big, Gen g, const LiftSpec& ls) {
    uint32_t v = g.v;
    for (auto& [p, val] : ls.bits) {
        uint32_t low = v & ((uint32_t(1) << p) - 1);
        v = ((v >> p) << (p + 1)) | (uint32_t(val) << p) | low;
    }
    uint32_t labels = 0, assigned = 0;
    auto take = [&](int circle, bool is_x) {
        uint32_t bit = uint32_t(1) << circle;
        if (assigned & bit) throw KhError("circle matching collapsed two circles");
        assigned |= bit;
        if (is_x) labels |= bit;
    };
    int nc = small.circle_count(g.v);
    for (int ci = 0; ci < nc; ++ci) {
        int rep = small.circle_mins(g.v)[size_t(ci)];
        if (auto it = ls.xlat.find(rep); it != ls.xlat.end()) rep = it->second;
        take(big.circle_of(v, rep), g.labels >> ci & 1);
    }
    for (auto& [e, isx] : ls.fixed) take(big.circle_of(v, e), isx);
    if (std::popcount(assigned) != big.circle_count(v))
        throw KhError("circle matching left a circle unlabeled");
    return Gen{v, labels};
}

inline std::map<int, int> build_xlat(const StepInfo& st, bool small_is_before) {
    std::map<int, int> x;
    const auto& bl = st.before.free_loops();
    const auto& al = st.after.free_loops();
    for (int r = 0; r < int(bl.size()); ++r) {
        int ar = st.loop_map[size_t(r)];
        if (ar < 0) continue;
        if (small_is_before) x[bl[size_t(r)]] = al[size_t(ar)];
        else x[al[size_t(ar)]] = bl[size_t(r)];
    }
    for (auto& [s, b] : st.anchor) x[s] = b;
    for (auto it = x.begin(); it != x.end();)
        it = it->first == it->second ? x.erase(it) : std::next(it);
    return x;
}

// The (0,0) chain map between the small cube and the big cube through a
// retraction whose survivors correspond one-to-one to small generators.
inline ChainMapF2 retract_transfer(const KhCube& small, const KhCube& big,
                                   const Retraction& ret, const LiftSpec& ls,
                                   bool into_big) {
    ChainMapF2 f;
    for (auto& [ij, rest] : ret.rest)
        if (!rest.empty() && small.complex_f2().dim(ij.first, ij.second) == 0)
            throw KhError("reduction survivors at a bidegree the small complex lacks");
    for (auto& [ij, n] : small.complex_f2().dims) {
        if (n == 0) continue;
        auto [i, j] = ij;
        auto rit = ret.rest.find(ij);
        if (rit == ret.rest.end() || int(rit->second.size()) != n)
            throw KhError("reduction survivors do not match the small complex at (" +
                          std::to_string(i) + "," + std::to_string(j) + ")");
        const std::vector<int>& rest = rit->second;
        MatrixF2 P(n, n);
        const auto& gs = small.gens(i, j);
        for (int t = 0; t < n; ++t) {
            Gen lifted = lift_gen(small, big, gs[size_t(t)], ls);
            auto bi = big.gen_index(i, j, lifted);
            if (!bi) throw KhError("lifted generator is missing from the big cube");
            auto pit = std::lower_bound(rest.begin(), rest.end(), *bi);
            if (pit == rest.end() || *pit != *bi)
                throw KhError("lifted generator was cancelled by the reduction");
            P.set(int(pit - rest.begin()), t, true);
        }
        if (into_big)
            f.mats[ij] = ret.include.at(ret.reduced, big.complex_f2(), i, j) * P;
        else
            f.mats[ij] =
                P.transpose() * ret.project.at(big.complex_f2(), ret.reduced, i, j);
    }
    return f;
}

// smoothing in which the two given edges of this crossing are joined
inline int joining_bit(const Crossing& x, int ea, int eb) {
    int sa = -1, sb = -1;
    for (int s = 0; s < 4; ++s) {
        if (x.e[size_t(s)] == ea) sa = s;
        else if (x.e[size_t(s)] == eb) sb = s;
    }
    if (sa < 0 || sb < 0) throw CheckFailed("edges not at the expected crossing");
    return (sa + sb) % 4 == 1 ? 0 : 1;
}

struct Groups {
    std::map<Bidegree, std::vector<int>> xg, yg;
};

// curl cancellation: positive curls cancel (curl circle labeled 1) against
// the whole merged half; negative curls cancel the whole split-source half
// against (curl circle labeled X)
inline Groups curl_groups(const KhCube& cc, int k, bool positive, int curl_edge) {
    Groups g;
    for (auto& [ij, n] : cc.complex_f2().dims) {
        if (n == 0) continue;
        const auto& gs = cc.gens(ij.first, ij.second);
        for (int t = 0; t < n; ++t) {
            const Gen& gen = gs[size_t(t)];
            bool hi = gen.v >> k & 1;
            if (positive) {
                if (hi) g.yg[ij].push_back(t);
                else if (!(gen.labels >> cc.circle_of(gen.v, curl_edge) & 1))
                    g.xg[ij].push_back(t);
            } else {
                if (!hi) g.xg[ij].push_back(t);
                else if (gen.labels >> cc.circle_of(gen.v, curl_edge) & 1)
                    g.yg[ij].push_back(t);
            }
        }
    }
    return g;
}

// bigon cancellation: with (w1,w2) the smoothings joining the two middle
// arcs at the two crossings (w1 != w2), the (0,0) corner cancels against
// the joined corner's X-labeled bigon circle, and the joined corner's
// 1-labeled half cancels against the (1,1) corner.  `keep` restricts the
// participating generators (the triangle slide uses its fused corner).
template <class Keep>
inline Groups bigon_groups(const KhCube& cc, int k1, int k2, int w1, int w2, int u_edge,
                           Keep&& keep) {
    Groups g;
    for (auto& [ij, n] : cc.complex_f2().dims) {
        if (n == 0) continue;
        const auto& gs = cc.gens(ij.first, ij.second);
        for (int t = 0; t < n; ++t) {
            const Gen& gen = gs[size_t(t)];
            if (!keep(gen)) continue;
            int b1 = gen.v >> k1 & 1, b2 = gen.v >> k2 & 1;
            if (b1 == 0 && b2 == 0) {
                g.xg[ij].push_back(t);
            } else if (b1 == 1 && b2 == 1) {
                g.yg[ij].push_back(t);
            } else if (b1 == w1 && b2 == w2) {
                if (gen.labels >> cc.circle_of(gen.v, u_edge) & 1) g.yg[ij].push_back(t);
                else g.xg[ij].push_back(t);
            }
        }
    }
    return g;
}

inline ChainMapF2 birth_map(const KhCube& cb, const KhCube& ca) {
    // the new circle has the largest id, hence the last index everywhere:
    // labeling it 1 keeps the label mask unchanged
    ChainMapF2 f;
    f.dj = 1;
    for (auto& [ij, n] : cb.complex_f2().dims) {
        if (n == 0) continue;
        auto [i, j] = ij;
        if (ca.complex_f2().dim(i, j + 1) == 0)
            throw KhError("loop birth target block is missing");
        MatrixF2 m(ca.complex_f2().dim(i, j + 1), n);
        const auto& gs = cb.gens(i, j);
        for (int t = 0; t < n; ++t) {
            auto bi = ca.gen_index(i, j + 1, gs[size_t(t)]);
            if (!bi) throw KhError("loop birth target generator is missing");
            m.set(*bi, t, true);
        }
        f.mats[ij] = std::move(m);
    }
    return f;
}

inline ChainMapF2 death_map(const StepInfo& st, const KhCube& cb, const KhCube& ca) {
    ChainMapF2 f;
    f.dj = 1;
    int lid = st.mv.loop;
    for (auto& [ij, n] : cb.complex_f2().dims) {
        if (n == 0) continue;
        auto [i, j] = ij;
        int rows = ca.complex_f2().dim(i, j + 1);
        if (rows == 0) continue;  // every generator here has the loop labeled 1
        MatrixF2 m(rows, n);
        const auto& gs = cb.gens(i, j);
        for (int t = 0; t < n; ++t) {
            const Gen& g = gs[size_t(t)];
            int ci = cb.circle_of(g.v, lid);
            if (!(g.labels >> ci & 1)) continue;  // 1 -> 0
            uint32_t low = g.labels & ((uint32_t(1) << ci) - 1);
            uint32_t lab = ((g.labels >> (ci + 1)) << ci) | low;
            auto bi = ca.gen_index(i, j + 1, Gen{g.v, lab});
            if (!bi) throw KhError("loop death target generator is missing");
            m.set(*bi, t, true);
        }
        f.mats[ij] = std::move(m);
    }
    return f;
}

inline ChainMapF2 saddle_map(const StepInfo& st, const KhCube& cb, const KhCube& ca) {
    ChainMapF2 f;
    f.dj = -1;
    int a = st.mv.edges[0], b = st.mv.edges[1];
    int c = st.mv.new_edges[0], d = st.mv.new_edges[1];
    std::map<int, int> xlat = build_xlat(st, true);
    for (auto& [ij, n] : cb.complex_f2().dims) {
        if (n == 0) continue;
        auto [i, j] = ij;
        // the target block may be absent when every generator here dies
        // (both band ends already labeled X under a merge)
        MatrixF2 m(ca.complex_f2().dim(i, j - 1), n);
        const auto& gs = cb.gens(i, j);
        for (int t = 0; t < n; ++t) {
            const Gen& g = gs[size_t(t)];
            int ca1 = cb.circle_of(g.v, a), ca2 = cb.circle_of(g.v, b);
            int ct1 = ca.circle_of(g.v, c), ct2 = ca.circle_of(g.v, d);
            uint32_t base = 0;
            for (int ci = 0; ci < cb.circle_count(g.v); ++ci) {
                if (ci == ca1 || ci == ca2) continue;
                if (!(g.labels >> ci & 1)) continue;
                int rep = cb.circle_mins(g.v)[size_t(ci)];
                if (auto it = xlat.find(rep); it != xlat.end()) rep = it->second;
                base |= uint32_t(1) << ca.circle_of(g.v, rep);
            }
            auto emit = [&](uint32_t extra) {
                auto bi = ca.gen_index(i, j - 1, Gen{g.v, base | extra});
                if (!bi) throw KhError("saddle target generator is missing");
                m.set(*bi, t, true);
            };
            if (ca1 != ca2) {
                // the band merges two circles
                if (ct1 != ct2)
                    throw KhError("saddle arcs rejoin non-planarly at a resolution");
                bool xa = g.labels >> ca1 & 1, xb = g.labels >> ca2 & 1;
                if (xa && xb) continue;
                emit(xa || xb ? uint32_t(1) << ct1 : 0);
            } else {
                // the band splits one circle
                if (ct1 == ct2)
                    throw KhError("saddle arcs split non-planarly at a resolution");
                if (g.labels >> ca1 & 1) {
                    emit((uint32_t(1) << ct1) | (uint32_t(1) << ct2));
                } else {
                    emit(uint32_t(1) << ct1);
                    emit(uint32_t(1) << ct2);
                }
            }
        }
        f.mats[ij] = std::move(m);
    }
    return f;
}

inline ChainMapF2 r1_map(const StepInfo& st, const KhCube& cb, const KhCube& ca) {
    bool pos = st.mv.kind == "r1_pos";
    bool intro = !st.mv.elim;
    const KhCube& curl = intro ? ca : cb;
    const KhCube& small = intro ? cb : ca;
    int lid = intro ? st.mv.new_edges[0] : st.mv.loop;
    Groups g = curl_groups(curl, st.curl_pos, pos, lid);
    Retraction ret = cancel_groups(curl.complex_f2(), g.xg, g.yg);
    LiftSpec ls;
    ls.bits = {{st.curl_pos, pos ? 0 : 1}};
    ls.fixed = {{lid, pos}};
    ls.xlat = build_xlat(st, intro);
    return retract_transfer(small, curl, ret, ls, intro);
}

inline ChainMapF2 r2_map(const StepInfo& st, const KhCube& cb, const KhCube& ca) {
    bool intro = st.mv.kind == "r2_intro";
    const KhCube& curl = intro ? ca : cb;
    const KhCube& small = intro ? cb : ca;
    const auto& xs = curl.diagram().crossings();
    int w1 = joining_bit(xs[size_t(st.k1)], st.mu, st.bm);
    int w2 = joining_bit(xs[size_t(st.k2)], st.mu, st.bm);
    if (w1 == w2) throw KhError("bigon corner smoothings coincide");
    Groups g = bigon_groups(curl, st.k1, st.k2, w1, w2, st.mu,
                            [](const Gen&) { return true; });
    Retraction ret = cancel_groups(curl.complex_f2(), g.xg, g.yg);
    LiftSpec ls;
    ls.bits = {{st.k1, 1 - w1}, {st.k2, 1 - w2}};
    ls.xlat = build_xlat(st, intro);
    return retract_transfer(small, curl, ret, ls, intro);
}

inline ChainMapF2 r3_map(const StepInfo& st, const KhCube& cb, const KhCube& ca) {
    const auto& xb = st.before.crossings();
    const auto& xa = st.after.crossings();
    int k = st.p_mb;
    int bad_b = joining_bit(xb[size_t(k)], st.e_mid, st.e_bot);
    int bad_a = joining_bit(xa[size_t(k)], st.e_mid, st.e_bot);
    if (bad_a != bad_b) throw KhError("triangle slide: fused corners disagree");
    int bad = bad_b;
    int w1b = joining_bit(xb[size_t(st.p_tm)], st.e_top, st.e_mid);
    int w2b = joining_bit(xb[size_t(st.p_tb)], st.e_top, st.e_bot);
    int w1a = joining_bit(xa[size_t(st.p_tm)], st.e_top, st.e_mid);
    int w2a = joining_bit(xa[size_t(st.p_tb)], st.e_top, st.e_bot);
    if (w1b == w2b || w1a == w2a)
        throw KhError("triangle slide: fused corner is not a planar bigon");

    auto keep_bad = [&](const Gen& g) { return int(g.v >> k & 1) == bad; };
    Groups gb = bigon_groups(cb, st.p_tm, st.p_tb, w1b, w2b, st.e_top, keep_bad);
    Groups ga = bigon_groups(ca, st.p_tm, st.p_tb, w1a, w2a, st.e_top, keep_bad);
    Retraction rb = cancel_groups(cb.complex_f2(), gb.xg, gb.yg);
    Retraction ra = cancel_groups(ca.complex_f2(), ga.xg, ga.yg);

    // identification of the survivors: at the untouched corner the slide
    // carries the top strand's crossing with the mid strand over to its
    // crossing with the bot strand, so those two cube bits swap; the fused
    // corner matches its parallel part to the parallel part on the far side
    auto set_bit = [](uint32_t v, int p, int val) {
        return val ? v | (uint32_t(1) << p) : v & ~(uint32_t(1) << p);
    };

    // arcs outside the triangle stay put under the slide and tie each
    // before-circle to its after-circle; the middle arcs can change circle
    // between the two frames, so they never vote.  a circle made of middle
    // arcs only has no outside tether and pairs with the one loose circle
    // on the far side.
    std::vector<int> tether;
    {
        std::set<int> ids;
        for (const auto& c : xb)
            for (int x : c.e) ids.insert(x);
        ids.erase(st.e_top);
        ids.erase(st.e_mid);
        ids.erase(st.e_bot);
        for (int l : st.before.free_loops()) ids.insert(l);
        tether.assign(ids.begin(), ids.end());
    }
    std::map<std::pair<uint32_t, uint32_t>, std::vector<int>> match_cache;
    auto circle_match = [&](uint32_t vb, uint32_t va) -> const std::vector<int>& {
        auto key = std::make_pair(vb, va);
        if (auto it = match_cache.find(key); it != match_cache.end()) return it->second;
        int nb = cb.circle_count(vb);
        if (nb != ca.circle_count(va))
            throw KhError("triangle slide: circle counts disagree");
        std::vector<int> m(size_t(nb), -1);
        std::vector<int> owner(size_t(nb), -1);
        for (int e : tether) {
            int s = cb.circle_of(vb, e), t = ca.circle_of(va, e);
            if (m[size_t(s)] < 0) {
                if (owner[size_t(t)] >= 0)
                    throw KhError("triangle slide: circle matching collapsed");
                m[size_t(s)] = t;
                owner[size_t(t)] = s;
            } else if (m[size_t(s)] != t) {
                throw KhError("triangle slide: outside arcs disagree across the slide");
            }
        }
        int loose_b = -1, loose_a = -1;
        for (int s = 0; s < nb; ++s)
            if (m[size_t(s)] < 0) {
                if (loose_b >= 0)
                    throw KhError("triangle slide: two circles lack outside arcs");
                loose_b = s;
            }
        for (int t = 0; t < nb; ++t)
            if (owner[size_t(t)] < 0) loose_a = t;
        if (loose_b >= 0) m[size_t(loose_b)] = loose_a;
        return match_cache.emplace(key, std::move(m)).first->second;
    };
    std::map<Bidegree, MatrixF2> phi;
    std::map<Bidegree, std::vector<char>> is_fused_b, is_fused_a;
    for (auto& [ij, restb] : rb.rest) {
        if (restb.empty()) continue;
        auto rit = ra.rest.find(ij);
        if (rit == ra.rest.end() || rit->second.size() != restb.size())
            throw KhError("triangle slide: survivor counts disagree at a bidegree");
        const auto& resta = rit->second;
        auto [i, j] = ij;
        MatrixF2 p(int(resta.size()), int(restb.size()));
        std::vector<char> fb(restb.size(), 0), fa(resta.size(), 0);
        for (size_t u = 0; u < resta.size(); ++u) {
            const Gen& g = ca.gens(i, j)[size_t(resta[u])];
            fa[u] = int(g.v >> k & 1) == bad;
        }
        std::vector<char> seen(resta.size(), 0);
        for (size_t t = 0; t < restb.size(); ++t) {
            const Gen& g = cb.gens(i, j)[size_t(restb[t])];
            bool fused = int(g.v >> k & 1) == bad;
            fb[t] = fused;
            uint32_t v2 = g.v;
            if (fused) {
                v2 = set_bit(v2, st.p_tm, 1 - w1a);
                v2 = set_bit(v2, st.p_tb, 1 - w2a);
            } else {
                int x1 = g.v >> st.p_tm & 1, x2 = g.v >> st.p_tb & 1;
                v2 = set_bit(v2, st.p_tm, x2);
                v2 = set_bit(v2, st.p_tb, x1);
            }
            const std::vector<int>& cm = circle_match(g.v, v2);
            uint32_t labels = 0;
            for (int ci = 0; ci < cb.circle_count(g.v); ++ci)
                if (g.labels >> ci & 1) labels |= uint32_t(1) << cm[size_t(ci)];
            auto bi = ca.gen_index(i, j, Gen{v2, labels});
            if (!bi) throw KhError("triangle slide: matched generator is missing");
            auto pit = std::lower_bound(resta.begin(), resta.end(), *bi);
            if (pit == resta.end() || *pit != *bi)
                throw KhError("triangle slide: matched generator was cancelled");
            size_t u = size_t(pit - resta.begin());
            if (seen[u]) throw KhError("triangle slide: matching is not injective");
            seen[u] = 1;
            p.set(int(u), int(t), true);
        }
        phi[ij] = std::move(p);
        is_fused_b[ij] = std::move(fb);
        is_fused_a[ij] = std::move(fa);
    }

    auto block = [&](const std::map<Bidegree, MatrixF2>& m, int i, int j) {
        auto it = m.find({i, j});
        if (it != m.end()) return it->second;
        return MatrixF2(ra.reduced.dim(i, j), rb.reduced.dim(i, j));
    };
    auto defect_at = [&](const std::map<Bidegree, MatrixF2>& F, int i, int j) {
        return ra.reduced.d(i, j) * block(F, i, j) + block(F, i + 1, j) * rb.reduced.d(i, j);
    };
    std::vector<Bidegree> keys;
    for (auto& [ij, n] : rb.reduced.dims)
        if (n > 0) keys.push_back(ij);
    bool clean = true;
    for (auto& [i, j] : keys)
        if (!defect_at(phi, i, j).is_zero()) clean = false;

    if (!clean) {
        // correct with a map from the untouched part into the fused part,
        // solved against the target differential from the top degree down
        std::map<Bidegree, MatrixF2> lam;
        std::sort(keys.begin(), keys.end(),
                  [](const Bidegree& a, const Bidegree& b) { return a.first > b.first; });
        for (auto& [i, j] : keys) {
            MatrixF2 rhs = defect_at(phi, i, j) + block(lam, i + 1, j) * rb.reduced.d(i, j);
            if (rhs.is_zero()) continue;
            std::vector<int> amenable;  // fused-part rows of the target
            const auto& fa = is_fused_a.at({i, j});
            for (int u = 0; u < int(fa.size()); ++u)
                if (fa[size_t(u)]) amenable.push_back(u);
            MatrixF2 dsel = ra.reduced.d(i, j).select_columns(amenable);
            SolverF2 solver(dsel);
            MatrixF2 l(ra.reduced.dim(i, j), rb.reduced.dim(i, j));
            const auto& fbv = is_fused_b.at({i, j});
            for (int cidx = 0; cidx < rhs.cols(); ++cidx) {
                VecF2 v = rhs.col_vec(cidx);
                if (v.is_zero()) continue;
                if (fbv[size_t(cidx)])
                    throw KhError("triangle slide: defect starts in the fused part");
                auto x = solver.solve(v);
                if (!x) throw KhError("triangle slide: no homotopy correction exists");
                for (int s = 0; s < int(amenable.size()); ++s)
                    if (x->get(s)) l.set(amenable[size_t(s)], cidx, true);
            }
            lam[{i, j}] = std::move(l);
        }
        for (auto& [ij, l] : lam) {
            auto it = phi.find(ij);
            if (it == phi.end()) phi[ij] = l;
            else it->second = it->second + l;
        }
        for (auto& [i, j] : keys)
            if (!defect_at(phi, i, j).is_zero())
                throw KhError("triangle slide: correction failed to close the square");
    }

    ChainMapF2 f;
    for (auto& [ij, n] : cb.complex_f2().dims) {
        if (n == 0) continue;
        auto [i, j] = ij;
        f.mats[ij] = ra.include.at(ra.reduced, ca.complex_f2(), i, j) * block(phi, i, j) *
                     rb.project.at(cb.complex_f2(), rb.reduced, i, j);
    }
    return f;
}

}  // namespace movedetail

// Chain map of one movie step, from the before-frame cube to the
// after-frame cube.
inline ChainMapF2 step_chain_map(const StepInfo& st, const KhCube& cb, const KhCube& ca) {
    using namespace movedetail;
    const std::string& k = st.mv.kind;
    if (k == "birth") return birth_map(cb, ca);
    if (k == "death") return death_map(st, cb, ca);
    if (k == "saddle") return saddle_map(st, cb, ca);
    if (k == "r1_pos" || k == "r1_neg") return r1_map(st, cb, ca);
    if (k == "r2_intro" || k == "r2_elim") return r2_map(st, cb, ca);
    if (k == "r3") return r3_map(st, cb, ca);
    throw MalformedInput("unknown move kind \"" + k + "\"");
}

// --------------------------------------------------------------- MovieMaps

// Cubes of every frame, the per-move chain maps, and their composite.
struct MovieMaps {
    std::vector<KhCube> cubes;
    std::vector<ChainMapF2> steps;
    ChainMapF2 total;
};

inline MovieMaps movie_chain_map(const Movie& mv) {
    MovieMaps out;
    out.cubes.reserve(mv.frames().size());
    for (const Diagram& d : mv.frames()) out.cubes.emplace_back(d);
    out.total = identity_map(out.cubes.front().complex_f2());
    for (size_t t = 0; t < mv.steps().size(); ++t) {
        const ComplexF2& src = out.cubes[t].complex_f2();
        const ComplexF2& tgt = out.cubes[t + 1].complex_f2();
        ChainMapF2 f = step_chain_map(mv.steps()[t], out.cubes[t], out.cubes[t + 1]);
        check_chain_map(src, tgt, f);
        out.total = compose(out.cubes.front().complex_f2(), src, tgt, f, out.total);
        out.steps.push_back(std::move(f));
    }
    if (out.total.dj != mv.euler_char())
        throw CheckFailed("composite quantum shift disagrees with the surface");
    return out;
}

}  // namespace kh

#pragma once

// Planar-diagram (PD) codes for links and 4-ended tangles.
//
// Conventions, fixed once for the whole library:
//  - X[a,b,c,d] lists the four edges counterclockwise around the crossing
//    starting at the incoming under-strand, so the under-strand runs a -> c
//    and the over-strand occupies slots b and d.
//  - A crossing is positive when the over-strand runs d -> b, negative when
//    it runs b -> d.
//  - "U" tokens denote crossingless circles; they receive synthetic edge
//    ids above every crossing edge, in token order.
//  - Text grammar: semicolon-separated tokens "X[a,b,c,d]", "U",
//    "ends[nw,ne,sw,se]" (tangles only), "bp=e", "or=e:+" / "or=e:-";
//    whitespace is ignored.
//
// Orientations: the under-strand slots force edge directions.  A component
// that never passes under any crossing is free; it defaults to the
// direction pointing its minimal edge from the lexicographically smaller
// of the edge's two sites to the larger one (polarity '+').  "or=e:-"
// flips such a component; flipping a constrained component raises
// OrientationConflict.  Crossing signs and n_plus/n_minus follow from the
// orientation.

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kh/errors.hpp"

namespace kh {

// A site where an edge is attached: a crossing slot, or (crossing == -1) a
// tangle boundary corner.
struct Occurrence {
    int crossing = -1;
    int slot = 0;
    friend auto operator<=>(const Occurrence&, const Occurrence&) = default;
};

struct Crossing {
    std::array<int, 4> e{};
    int sign = 0;  // computed from orientations, not parsed
    friend bool operator==(const Crossing& a, const Crossing& b) { return a.e == b.e; }
};

enum class ClosureKind { numerator, denominator };

enum Corner { NW = 0, NE = 1, SW = 2, SE = 3 };

namespace detail {

using OccMap = std::map<int, std::vector<Occurrence>>;

inline OccMap build_occ(const std::vector<Crossing>& xs,
                        const std::optional<std::array<int, 4>>& ends) {
    OccMap occ;
    for (int k = 0; k < int(xs.size()); ++k)
        for (int s = 0; s < 4; ++s) occ[xs[k].e[s]].push_back({k, s});
    if (ends)
        for (int corner = 0; corner < 4; ++corner)
            occ[(*ends)[corner]].push_back({-1, corner});
    for (auto& [e, sites] : occ) {
        if (sites.size() != 2)
            throw DanglingEdge("edge " + std::to_string(e) + " occurs " +
                               std::to_string(sites.size()) + " times, expected 2");
        std::sort(sites.begin(), sites.end());
    }
    return occ;
}

inline Occurrence other_site(const OccMap& occ, int e, const Occurrence& s) {
    const auto& v = occ.at(e);
    return v[0] == s ? v[1] : v[0];
}

// Strand components: edges joined through crossings (a~c, b~d).
inline std::vector<std::vector<int>> strand_components(
        const std::vector<Crossing>& xs, const OccMap& occ) {
    std::map<int, int> parent;
    for (auto& [e, _] : occ) parent[e] = e;
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (auto& x : xs) {
        parent[find(x.e[0])] = find(x.e[2]);
        parent[find(x.e[1])] = find(x.e[3]);
    }
    std::map<int, std::vector<int>> groups;
    for (auto& [e, _] : occ) groups[find(e)].push_back(e);
    std::vector<std::vector<int>> comps;
    for (auto& [_, g] : groups) {
        std::sort(g.begin(), g.end());
        comps.push_back(g);
    }
    std::sort(comps.begin(), comps.end(),
              [](auto& a, auto& b) { return a.front() < b.front(); });
    return comps;
}

struct PdAnalysis {
    OccMap occ;
    std::vector<std::vector<int>> components;  // incl. free loops, min-edge order
    std::map<int, int> comp_of;
    std::map<int, Occurrence> head;  // edge -> site it flows into (loops absent)
    std::set<int> flipped;           // free comps realized '-', keyed by min edge
    int n_plus = 0, n_minus = 0;
};

// Orient one strand component with the head of its minimal edge at the
// chosen site; returns the full head assignment or nothing when an
// under-slot constraint is violated.
inline std::optional<std::map<int, Occurrence>> try_orient(
        const std::vector<Crossing>& xs, const OccMap& occ,
        const std::vector<int>& comp, bool head_at_upper) {
    int m = comp.front();
    std::map<int, Occurrence> h;
    h[m] = occ.at(m)[head_at_upper ? 1 : 0];
    // downstream sweep from the head of m
    Occurrence site = h[m];
    while (site.crossing >= 0) {
        Occurrence nxt{site.crossing, site.slot ^ 2};
        int e2 = xs[site.crossing].e[nxt.slot];
        if (h.count(e2)) break;  // cycle closed
        h[e2] = other_site(occ, e2, nxt);
        site = h[e2];
    }
    // upstream sweep from the tail of m (reaches the rest of a strand)
    site = other_site(occ, m, h[m]);
    while (site.crossing >= 0) {
        Occurrence prev{site.crossing, site.slot ^ 2};
        int e2 = xs[prev.crossing].e[prev.slot];
        if (h.count(e2)) break;
        h[e2] = prev;
        site = other_site(occ, e2, prev);
    }
    for (int e : comp)
        for (const Occurrence& s : occ.at(e)) {
            if (s.crossing < 0) continue;
            if (s.slot == 0 && !(h.at(e) == s)) return std::nullopt;  // must flow in
            if (s.slot == 2 && h.at(e) == s) return std::nullopt;     // must flow out
        }
    return h;
}

inline PdAnalysis analyze(std::vector<Crossing>& xs,
                          const std::optional<std::array<int, 4>>& ends,
                          const std::vector<int>& loops,
                          const std::map<int, char>& overrides) {
    PdAnalysis an;
    an.occ = build_occ(xs, ends);
    for (int l : loops)
        if (an.occ.count(l))
            throw DanglingEdge("free loop id " + std::to_string(l) +
                               " collides with an edge");
    an.components = strand_components(xs, an.occ);
    for (int l : loops) an.components.push_back({l});
    std::sort(an.components.begin(), an.components.end(),
              [](auto& a, auto& b) { return a.front() < b.front(); });
    for (int i = 0; i < int(an.components.size()); ++i)
        for (int e : an.components[i]) an.comp_of[e] = i;

    std::set<int> loop_set(loops.begin(), loops.end());
    for (auto& comp : an.components) {
        if (loop_set.count(comp.front())) continue;  // free loop: no orientation
        bool constrained = false;
        for (int e : comp)
            for (const Occurrence& s : an.occ.at(e))
                if (s.crossing >= 0 && (s.slot == 0 || s.slot == 2)) constrained = true;

        char requested = 0;
        for (int e : comp) {
            auto it = overrides.find(e);
            if (it == overrides.end()) continue;
            if (requested && requested != it->second)
                throw OrientationConflict(
                    "conflicting or= overrides on one component (edge " +
                    std::to_string(e) + ")");
            requested = it->second;
        }

        auto h = try_orient(xs, an.occ, comp, true);
        char realized = '+';
        if (!h) {
            h = try_orient(xs, an.occ, comp, false);
            realized = '-';
        }
        if (!h)
            throw OrientationConflict(
                "component containing edge " + std::to_string(comp.front()) +
                " admits no orientation compatible with its under-strands");
        if (requested && requested != realized) {
            if (constrained)
                throw OrientationConflict(
                    "or=" + std::to_string(comp.front()) + ":" + requested +
                    " contradicts the orientation forced by the crossings");
            // free component: flip every head to the other site
            for (auto& [e, site] : *h) site = other_site(an.occ, e, site);
            realized = requested;
        }
        if (!constrained && realized == '-') an.flipped.insert(comp.front());
        for (auto& [e, site] : *h) an.head[e] = site;
    }

    for (int k = 0; k < int(xs.size()); ++k) {
        int b = xs[k].e[1], d = xs[k].e[3];
        bool d_in = an.head.at(d) == Occurrence{k, 3};
        bool b_in = an.head.at(b) == Occurrence{k, 1};
        if (d_in == b_in)
            throw OrientationConflict("over-strand of crossing " + std::to_string(k) +
                                      " is incoherently oriented");
        xs[k].sign = d_in ? +1 : -1;
        if (d_in) ++an.n_plus;
        else ++an.n_minus;
    }
    return an;
}

// Gluing can traverse a sub-tangle's strand against the direction it was
// written in, which would leave some crossing's under-strand running c -> a.
// This pass picks a direction per component (majority vote of its
// under-crossings, ties toward the '+' walk of the minimal edge) and
// rewrites each disagreeing crossing X[a,b,c,d] as X[c,d,a,b]: the same
// unoriented crossing, written for the reversed strand.
inline void normalize_under(std::vector<Crossing>& xs,
                            const std::optional<std::array<int, 4>>& ends) {
    if (xs.empty()) return;
    OccMap occ = build_occ(xs, ends);
    auto comps = strand_components(xs, occ);
    std::map<int, int> comp_of;
    for (int i = 0; i < int(comps.size()); ++i)
        for (int e : comps[i]) comp_of[e] = i;

    // Walk every component in its '+' direction, ignoring constraints.
    std::map<int, Occurrence> head;
    for (auto& comp : comps) {
        int m = comp.front();
        head[m] = occ.at(m)[1];
        Occurrence site = head[m];
        while (site.crossing >= 0) {
            Occurrence nxt{site.crossing, site.slot ^ 2};
            int e2 = xs[site.crossing].e[nxt.slot];
            if (head.count(e2)) break;
            head[e2] = other_site(occ, e2, nxt);
            site = head[e2];
        }
        site = other_site(occ, m, head[m]);
        while (site.crossing >= 0) {
            Occurrence prev{site.crossing, site.slot ^ 2};
            int e2 = xs[prev.crossing].e[prev.slot];
            if (head.count(e2)) break;
            head[e2] = prev;
            site = other_site(occ, e2, prev);
        }
    }

    // Vote: crossing k agrees with the '+' walk iff its written incoming
    // under-edge flows into slot 0 under that walk.
    std::vector<int> agree(comps.size(), 0), disagree(comps.size(), 0);
    std::vector<bool> agrees(xs.size());
    for (int k = 0; k < int(xs.size()); ++k) {
        int c = comp_of.at(xs[k].e[0]);
        agrees[k] = head.at(xs[k].e[0]) == Occurrence{k, 0};
        if (agrees[k]) ++agree[c];
        else ++disagree[c];
    }
    for (int k = 0; k < int(xs.size()); ++k) {
        int c = comp_of.at(xs[k].e[0]);
        bool keep_walk = agree[c] >= disagree[c];
        if (agrees[k] != keep_walk) {
            auto& e = xs[k].e;
            e = {e[2], e[3], e[0], e[1]};
        }
    }
}

struct ParsedText {
    std::vector<Crossing> xs;
    int u_count = 0;
    std::optional<std::array<int, 4>> ends;
    std::optional<int> bp;
    std::map<int, char> overrides;
};

inline long parse_int(const std::string& s, const char* what) {
    if (s.empty()) throw MalformedInput(std::string("empty integer in ") + what);
    size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(s, &pos);
    } catch (...) {
        throw MalformedInput("bad integer '" + s + "' in " + what);
    }
    if (pos != s.size()) throw MalformedInput("bad integer '" + s + "' in " + what);
    return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else cur += c;
    }
    out.push_back(cur);
    return out;
}

inline ParsedText parse_pd_text(const std::string& text) {
    std::string t;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) t += c;
    ParsedText p;
    if (t.empty()) return p;
    for (const std::string& tok : split(t, ';')) {
        if (tok.empty()) continue;
        if (tok == "U") {
            ++p.u_count;
        } else if (tok.rfind("X[", 0) == 0) {
            if (tok.back() != ']') throw MalformedCrossing("unterminated " + tok);
            auto parts = split(tok.substr(2, tok.size() - 3), ',');
            if (parts.size() != 4)
                throw MalformedCrossing("crossing " + tok + " has arity " +
                                        std::to_string(parts.size()) + ", expected 4");
            Crossing x;
            for (int i = 0; i < 4; ++i) {
                long v;
                try {
                    v = parse_int(parts[i], "crossing");
                } catch (const MalformedInput& e) {
                    throw MalformedCrossing(e.what());
                }
                if (v < 1) throw MalformedCrossing("edge ids must be >= 1 in " + tok);
                x.e[i] = int(v);
            }
            p.xs.push_back(x);
        } else if (tok.rfind("ends[", 0) == 0) {
            if (p.ends) throw MalformedInput("duplicate ends[...]");
            if (tok.back() != ']') throw MalformedInput("unterminated " + tok);
            auto parts = split(tok.substr(5, tok.size() - 6), ',');
            if (parts.size() != 4) throw MalformedInput("ends[...] must list 4 edges");
            std::array<int, 4> e;
            for (int i = 0; i < 4; ++i) {
                long v = parse_int(parts[i], "ends");
                if (v < 1) throw MalformedInput("edge ids must be >= 1 in " + tok);
                e[i] = int(v);
            }
            p.ends = e;
        } else if (tok.rfind("bp=", 0) == 0) {
            if (p.bp) throw MalformedInput("duplicate bp=");
            long v = parse_int(tok.substr(3), "bp");
            if (v < 1) throw MalformedInput("bp edge id must be >= 1");
            p.bp = int(v);
        } else if (tok.rfind("or=", 0) == 0) {
            auto parts = split(tok.substr(3), ':');
            if (parts.size() != 2 || (parts[1] != "+" && parts[1] != "-"))
                throw MalformedInput("orientation override must be or=e:+ or or=e:-");
            long v = parse_int(parts[0], "or");
            if (v < 1) throw MalformedInput("or= edge id must be >= 1");
            p.overrides[int(v)] = parts[1][0];
        } else {
            throw MalformedInput("unrecognized token '" + tok + "'");
        }
    }
    return p;
}

}  // namespace detail

// ----------------------------------------------------------------- Diagram

class Diagram {
public:
    Diagram() { analyze_(); }
    explicit Diagram(std::vector<Crossing> xs, std::vector<int> loops = {},
                     std::optional<int> bp = std::nullopt,
                     std::map<int, char> overrides = {})
        : xs_(std::move(xs)), loops_(std::move(loops)), bp_(bp),
          overrides_(std::move(overrides)) {
        analyze_();
    }

    static Diagram parse(const std::string& text) {
        auto p = detail::parse_pd_text(text);
        if (p.ends) throw MalformedInput("ends[...] is tangle syntax, not a diagram");
        int maxe = 0;
        for (auto& x : p.xs)
            for (int e : x.e) maxe = std::max(maxe, e);
        std::vector<int> loops;
        for (int i = 0; i < p.u_count; ++i) loops.push_back(maxe + 1 + i);
        return Diagram(std::move(p.xs), std::move(loops), p.bp, std::move(p.overrides));
    }

    std::string serialize() const {
        std::vector<std::string> parts;
        for (auto& x : xs_)
            parts.push_back("X[" + std::to_string(x.e[0]) + "," + std::to_string(x.e[1]) +
                            "," + std::to_string(x.e[2]) + "," + std::to_string(x.e[3]) +
                            "]");
        for (size_t i = 0; i < loops_.size(); ++i) parts.push_back("U");
        if (bp_) parts.push_back("bp=" + std::to_string(*bp_));
        for (auto& [m, s] : overrides_)
            parts.push_back("or=" + std::to_string(m) + ":" + s);
        std::string out;
        for (size_t i = 0; i < parts.size(); ++i) {
            if (i) out += ";";
            out += parts[i];
        }
        return out;
    }

    const std::vector<Crossing>& crossings() const { return xs_; }
    const std::vector<int>& free_loops() const { return loops_; }
    std::optional<int> basepoint() const { return bp_; }
    int n_plus() const { return an_.n_plus; }
    int n_minus() const { return an_.n_minus; }
    int writhe() const { return an_.n_plus - an_.n_minus; }

    // Free components realized with the '-' walk, as or= overrides.
    const std::map<int, char>& orientation_overrides() const { return overrides_; }

    const std::vector<std::vector<int>>& components() const { return an_.components; }
    int component_of(int edge) const {
        auto it = an_.comp_of.find(edge);
        if (it == an_.comp_of.end())
            throw DanglingEdge("unknown edge " + std::to_string(edge));
        return it->second;
    }

    // All edge ids including free loops, ascending.
    std::vector<int> edges() const {
        std::vector<int> out;
        for (auto& [e, _] : an_.occ) out.push_back(e);
        out.insert(out.end(), loops_.begin(), loops_.end());
        std::sort(out.begin(), out.end());
        return out;
    }
    int max_edge() const {
        auto e = edges();
        return e.empty() ? 0 : e.back();
    }
    bool has_edge(int e) const {
        return an_.occ.count(e) ||
               std::find(loops_.begin(), loops_.end(), e) != loops_.end();
    }

    // The site the edge flows into / out of; free loops have neither.
    Occurrence head_site(int edge) const {
        auto it = an_.head.find(edge);
        if (it == an_.head.end())
            throw DanglingEdge("edge " + std::to_string(edge) + " has no orientation");
        return it->second;
    }
    Occurrence tail_site(int edge) const {
        return detail::other_site(an_.occ, edge, head_site(edge));
    }
    const std::vector<Occurrence>& sites(int edge) const { return an_.occ.at(edge); }

    Diagram with_basepoint(int e) const {
        Diagram d = *this;
        d.bp_ = e;
        d.analyze_();
        return d;
    }
    Diagram without_basepoint() const {
        Diagram d = *this;
        d.bp_.reset();
        return d;
    }

    bool operator==(const Diagram& o) const {
        return xs_ == o.xs_ && loops_ == o.loops_ && bp_ == o.bp_ &&
               overrides_ == o.overrides_;
    }

private:
    void analyze_() {
        int maxe = 0;
        for (auto& x : xs_)
            for (int e : x.e) maxe = std::max(maxe, e);
        // free-loop ids are normalized to sit right above the crossing edges
        std::vector<int> old_loops = loops_;
        std::sort(old_loops.begin(), old_loops.end());
        std::map<int, int> remap;
        loops_.clear();
        for (int i = 0; i < int(old_loops.size()); ++i) {
            remap[old_loops[i]] = maxe + 1 + i;
            loops_.push_back(maxe + 1 + i);
        }
        if (bp_ && remap.count(*bp_)) {
            bool is_crossing_edge = false;
            for (auto& x : xs_)
                for (int e : x.e)
                    if (e == *bp_) is_crossing_edge = true;
            if (!is_crossing_edge) bp_ = remap[*bp_];
        }
        an_ = detail::analyze(xs_, std::nullopt, loops_, overrides_);
        if (bp_ && !has_edge(*bp_))
            throw DanglingEdge("basepoint edge " + std::to_string(*bp_) +
                               " is not in the diagram");
        // keep only the meaningful overrides: free components flipped to '-'
        std::map<int, char> norm;
        for (int m : an_.flipped) norm[m] = '-';
        overrides_ = std::move(norm);
    }

    std::vector<Crossing> xs_;
    std::vector<int> loops_;
    std::optional<int> bp_;
    std::map<int, char> overrides_;
    detail::PdAnalysis an_;
};

// ------------------------------------------------------------------ Tangle

// A 4-ended (2-strand) tangle.  Boundary corners are NW, NE, SW, SE; each
// corner names the edge leaving the tangle there.  No closed components.
class Tangle {
public:
    Tangle(std::vector<Crossing> xs, std::array<int, 4> ends,
           std::map<int, char> overrides = {})
        : xs_(std::move(xs)), ends_(ends), overrides_(std::move(overrides)) {
        analyze_();
    }

    static Tangle parse(const std::string& text) {
        auto p = detail::parse_pd_text(text);
        if (!p.ends) throw InvalidTangle("tangle text must declare ends[nw,ne,sw,se]");
        if (p.u_count) throw InvalidTangle("tangles cannot contain closed components");
        if (p.bp) throw MalformedInput("tangles do not carry basepoints");
        return Tangle(std::move(p.xs), *p.ends, std::move(p.overrides));
    }

    std::string serialize() const {
        std::string out;
        for (auto& x : xs_)
            out += "X[" + std::to_string(x.e[0]) + "," + std::to_string(x.e[1]) + "," +
                   std::to_string(x.e[2]) + "," + std::to_string(x.e[3]) + "];";
        out += "ends[" + std::to_string(ends_[NW]) + "," + std::to_string(ends_[NE]) +
               "," + std::to_string(ends_[SW]) + "," + std::to_string(ends_[SE]) + "]";
        for (auto& [m, s] : overrides_)
            out += ";or=" + std::to_string(m) + ":" + s;
        return out;
    }

    const std::vector<Crossing>& crossings() const { return xs_; }
    const std::array<int, 4>& ends() const { return ends_; }
    const std::vector<std::vector<int>>& strands() const { return an_.components; }
    int n_plus() const { return an_.n_plus; }
    int n_minus() const { return an_.n_minus; }

    int max_edge() const {
        int maxe = 0;
        for (auto& x : xs_)
            for (int e : x.e) maxe = std::max(maxe, e);
        for (int e : ends_) maxe = std::max(maxe, e);
        return maxe;
    }

    bool operator==(const Tangle& o) const {
        return xs_ == o.xs_ && ends_ == o.ends_ && overrides_ == o.overrides_;
    }

private:
    void analyze_() {
        an_ = detail::analyze(xs_, ends_, {}, overrides_);
        // exactly two strands, each touching the boundary; no closed parts
        std::set<int> end_edges(ends_.begin(), ends_.end());
        for (auto& comp : an_.components) {
            bool open = false;
            for (int e : comp)
                if (end_edges.count(e)) open = true;
            if (!open)
                throw InvalidTangle("tangle contains a closed component (edge " +
                                    std::to_string(comp.front()) + ")");
        }
        if (an_.components.size() != 2)
            throw InvalidTangle("tangle must have exactly 2 strands, found " +
                                std::to_string(an_.components.size()));
        std::map<int, char> norm;
        for (int m : an_.flipped) norm[m] = '-';
        overrides_ = std::move(norm);
    }

    std::vector<Crossing> xs_;
    std::array<int, 4> ends_{};
    std::map<int, char> overrides_;
    detail::PdAnalysis an_;
};

// ------------------------------------------------------------------ gluing

namespace detail {

struct GlueOut {
    std::vector<Crossing> xs;
    std::map<int, int> rep;        // every participating edge -> class min
    std::set<int> loop_classes;    // classes with no crossing occurrences
};

inline GlueOut glue(std::vector<Crossing> xs,
                    const std::vector<std::array<int, 2>>& joins,
                    const std::vector<int>& boundary) {
    std::map<int, int> parent;
    auto touch = [&](int e) { parent.try_emplace(e, e); };
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (auto& x : xs)
        for (int e : x.e) touch(e);
    for (int e : boundary) touch(e);
    for (auto& j : joins) {
        touch(j[0]);
        touch(j[1]);
        parent[find(j[0])] = find(j[1]);
    }
    GlueOut out;
    std::map<int, int> class_min;
    for (auto& [e, _] : parent) {
        int r = find(e);
        auto [it, fresh] = class_min.try_emplace(r, e);
        if (!fresh) it->second = std::min(it->second, e);
    }
    for (auto& [e, _] : parent) out.rep[e] = class_min.at(find(e));
    std::set<int> with_crossing;
    for (auto& x : xs)
        for (int& e : x.e) {
            e = out.rep.at(e);
            with_crossing.insert(e);
        }
    out.xs = std::move(xs);
    for (auto& [_, m] : class_min)
        if (!with_crossing.count(m)) out.loop_classes.insert(m);
    return out;
}

inline std::vector<Crossing> shifted_crossings(const Tangle& t, int by) {
    std::vector<Crossing> xs = t.crossings();
    for (auto& x : xs)
        for (int& e : x.e) e += by;
    return xs;
}

}  // namespace detail

// Side-by-side joining: t1's NE end to t2's NW end, t1's SE end to t2's SW
// end.  The result keeps t1's west corners and t2's east corners.
inline Tangle partial_sum(const Tangle& t1, const Tangle& t2) {
    int shift = t1.max_edge();
    auto xs = t1.crossings();
    auto xs2 = detail::shifted_crossings(t2, shift);
    xs.insert(xs.end(), xs2.begin(), xs2.end());
    std::array<int, 4> e2;
    for (int i = 0; i < 4; ++i) e2[i] = t2.ends()[i] + shift;
    auto g = detail::glue(std::move(xs),
                          {{t1.ends()[NE], e2[NW]}, {t1.ends()[SE], e2[SW]}},
                          {t1.ends()[NW], t1.ends()[SW], e2[NE], e2[SE]});
    std::array<int, 4> ends{g.rep.at(t1.ends()[NW]), g.rep.at(e2[NE]),
                            g.rep.at(t1.ends()[SW]), g.rep.at(e2[SE])};
    for (int m : g.loop_classes) {
        if (std::find(ends.begin(), ends.end(), m) == ends.end())
            throw InvalidTangle("partial sum created a closed component");
    }
    detail::normalize_under(g.xs, ends);
    return Tangle(std::move(g.xs), ends);
}

// Glue all four corners of t1 to the matching corners of t2.
inline Diagram tangle_sum(const Tangle& t1, const Tangle& t2) {
    int shift = t1.max_edge();
    auto xs = t1.crossings();
    auto xs2 = detail::shifted_crossings(t2, shift);
    xs.insert(xs.end(), xs2.begin(), xs2.end());
    std::vector<std::array<int, 2>> joins;
    for (int i = 0; i < 4; ++i) joins.push_back({t1.ends()[i], t2.ends()[i] + shift});
    auto g = detail::glue(std::move(xs), joins, {});
    detail::normalize_under(g.xs, std::nullopt);
    return Diagram(std::move(g.xs),
                   std::vector<int>(g.loop_classes.begin(), g.loop_classes.end()));
}

// Numerator closure joins NW-NE and SW-SE; denominator joins NW-SW, NE-SE.
inline Diagram closure(const Tangle& t, ClosureKind kind) {
    std::vector<std::array<int, 2>> joins;
    if (kind == ClosureKind::numerator)
        joins = {{t.ends()[NW], t.ends()[NE]}, {t.ends()[SW], t.ends()[SE]}};
    else
        joins = {{t.ends()[NW], t.ends()[SW]}, {t.ends()[NE], t.ends()[SE]}};
    auto g = detail::glue(t.crossings(), joins, {});
    detail::normalize_under(g.xs, std::nullopt);
    return Diagram(std::move(g.xs),
                   std::vector<int>(g.loop_classes.begin(), g.loop_classes.end()));
}

// --------------------------------------------------------- canonical form

// Text form invariant under edge relabeling, component ordering, and
// per-component orientation reversal: two diagrams yield the same string
// iff they are the same unoriented PD.  The basepoint is carried along
// ("bp=<new id>", or "bp=U" when it sits on a crossingless circle).
inline std::string canonical_form(const Diagram& dia) {
    const auto& xs = dia.crossings();
    detail::OccMap occ = detail::build_occ(xs, std::nullopt);
    auto comps = detail::strand_components(xs, occ);

    std::string best;
    bool have = false;
    long candidates = 1;
    for (auto& c : comps) candidates *= 2 * long(c.size());
    for (size_t i = 2; i <= comps.size(); ++i) candidates *= long(i);
    if (candidates > 200000)
        throw KhError("canonical_form: diagram too large to canonicalize");

    std::vector<int> order(comps.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);

    // label the comps in the given order with all start/direction choices
    auto run = [&](const std::vector<int>& ord, auto&& self, size_t idx,
                   std::map<int, int>& label, std::map<int, Occurrence>& head,
                   int next_id) -> void {
        if (idx == ord.size()) {
            std::vector<std::array<int, 4>> tuples;
            for (int k = 0; k < int(xs.size()); ++k) {
                const auto& e = xs[k].e;
                bool forward = head.at(e[0]) == Occurrence{k, 0};
                std::array<int, 4> t =
                    forward ? std::array<int, 4>{label.at(e[0]), label.at(e[1]),
                                                 label.at(e[2]), label.at(e[3])}
                            : std::array<int, 4>{label.at(e[2]), label.at(e[3]),
                                                 label.at(e[0]), label.at(e[1])};
                tuples.push_back(t);
            }
            std::sort(tuples.begin(), tuples.end());
            std::string s;
            for (auto& t : tuples)
                s += "X[" + std::to_string(t[0]) + "," + std::to_string(t[1]) + "," +
                     std::to_string(t[2]) + "," + std::to_string(t[3]) + "];";
            for (size_t i = 0; i < dia.free_loops().size(); ++i) s += "U;";
            if (dia.basepoint()) {
                auto it = label.find(*dia.basepoint());
                s += it != label.end() ? "bp=" + std::to_string(it->second) : "bp=U";
            }
            if (!have || s < best) {
                best = s;
                have = true;
            }
            return;
        }
        const auto& comp = comps[size_t(ord[idx])];
        for (int start : comp)
            for (int dir = 0; dir < 2; ++dir) {
                std::map<int, int> lab = label;
                std::map<int, Occurrence> hd = head;
                int id = next_id;
                int e = start;
                Occurrence site = occ.at(e)[dir];
                // cycle walk: label edges in traversal order
                do {
                    lab[e] = id++;
                    hd[e] = site;
                    Occurrence nxt{site.crossing, site.slot ^ 2};
                    e = xs[site.crossing].e[nxt.slot];
                    site = detail::other_site(occ, e, nxt);
                } while (e != start);
                self(ord, self, idx + 1, lab, hd, id);
            }
    };

    std::sort(order.begin(), order.end());
    do {
        std::map<int, int> label;
        std::map<int, Occurrence> head;
        run(order, run, 0, label, head, 1);
    } while (std::next_permutation(order.begin(), order.end()));
    if (!have) {
        // crossingless diagram
        std::string s;
        for (size_t i = 0; i < dia.free_loops().size(); ++i) s += "U;";
        if (dia.basepoint()) s += "bp=U";
        best = s;
    }
    return best;
}

}  // namespace kh

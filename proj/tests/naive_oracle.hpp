#pragma once

// Slow, independent computation of Khovanov homology dimensions over F2,
// used only as a test oracle.  Deliberately shares no machinery with the
// library implementation: circles are found by depth-first search on an
// edge-adjacency graph, generators carry explicit circle->label maps,
// circles are matched across cube edges by edge-set equality, and ranks
// come from a plain dense elimination.

#include <map>
#include <set>
#include <utility>
#include <vector>

#include "kh/diagram.hpp"

namespace naive {

using Circle = std::vector<int>;  // sorted edge ids

inline std::vector<Circle> circles_at(const kh::Diagram& d, unsigned v) {
    std::map<int, std::vector<int>> adj;
    for (int k = 0; k < int(d.crossings().size()); ++k) {
        const auto& e = d.crossings()[size_t(k)].e;
        std::pair<int, int> p1, p2;
        if (v >> k & 1) {
            p1 = {e[0], e[3]};
            p2 = {e[1], e[2]};
        } else {
            p1 = {e[0], e[1]};
            p2 = {e[2], e[3]};
        }
        adj[p1.first].push_back(p1.second);
        adj[p1.second].push_back(p1.first);
        adj[p2.first].push_back(p2.second);
        adj[p2.second].push_back(p2.first);
    }
    std::set<int> seen;
    std::vector<Circle> out;
    for (auto& [start, _] : adj) {
        if (seen.count(start)) continue;
        Circle comp;
        std::vector<int> stack{start};
        seen.insert(start);
        while (!stack.empty()) {
            int cur = stack.back();
            stack.pop_back();
            comp.push_back(cur);
            for (int nb : adj[cur])
                if (seen.insert(nb).second) stack.push_back(nb);
        }
        std::sort(comp.begin(), comp.end());
        out.push_back(comp);
    }
    // free loops are a circle at every vertex
    for (int l : d.free_loops()) out.push_back({l});
    std::sort(out.begin(), out.end());
    return out;
}

// a generator: resolution vertex plus min-edge -> '1'/'X' per circle
struct NGen {
    unsigned v = 0;
    std::map<int, char> lab;
    friend auto operator<=>(const NGen&, const NGen&) = default;
};

inline const Circle& circle_containing(const std::vector<Circle>& cs, int edge) {
    for (const auto& c : cs)
        if (std::find(c.begin(), c.end(), edge) != c.end()) return c;
    throw std::logic_error("edge not on any circle");
}

inline int naive_rank(std::vector<std::vector<unsigned char>> m) {
    if (m.empty() || m[0].empty()) return 0;
    int rows = int(m.size()), cols = int(m[0].size()), r = 0;
    for (int c = 0; c < cols && r < rows; ++c) {
        int piv = -1;
        for (int i = r; i < rows; ++i)
            if (m[size_t(i)][size_t(c)]) {
                piv = i;
                break;
            }
        if (piv < 0) continue;
        std::swap(m[size_t(piv)], m[size_t(r)]);
        for (int i = 0; i < rows; ++i)
            if (i != r && m[size_t(i)][size_t(c)])
                for (int k = c; k < cols; ++k) m[size_t(i)][size_t(k)] ^= m[size_t(r)][size_t(k)];
        ++r;
    }
    return r;
}

struct NaiveKh {
    std::map<std::pair<int, int>, int> unreduced;
    std::map<std::pair<int, int>, int> reduced;  // quantum grading already shifted by +1
};

inline NaiveKh naive_khovanov(const kh::Diagram& dia) {
    int n = int(dia.crossings().size());
    std::vector<std::vector<Circle>> circ(size_t(1) << n);
    for (unsigned v = 0; v < (1u << n); ++v) circ[v] = circles_at(dia, v);

    auto weight = [](unsigned v) {
        int w = 0;
        for (unsigned t = v; t; t >>= 1) w += int(t & 1);
        return w;
    };

    // enumerate generators into per-bidegree column registries
    std::map<std::pair<int, int>, std::map<NGen, int>> cols;
    for (unsigned v = 0; v < (1u << n); ++v) {
        int nc = int(circ[v].size());
        for (unsigned mask = 0; mask < (1u << nc); ++mask) {
            NGen g;
            g.v = v;
            int ones = 0, xs = 0;
            for (int c = 0; c < nc; ++c) {
                bool x = mask >> c & 1;
                g.lab[circ[v][size_t(c)].front()] = x ? 'X' : '1';
                (x ? xs : ones)++;
            }
            int i = weight(v) - dia.n_minus();
            int j = (ones - xs) + weight(v) + dia.n_plus() - 2 * dia.n_minus();
            auto& reg = cols[{i, j}];
            int idx = int(reg.size());
            reg.emplace(std::move(g), idx);
        }
    }

    // images of one generator under the full differential
    auto apply_d = [&](const NGen& g) {
        std::vector<NGen> out;
        for (int k = 0; k < n; ++k) {
            if (g.v >> k & 1) continue;
            unsigned v2 = g.v | (1u << k);
            const auto& e = dia.crossings()[size_t(k)].e;
            const Circle& c1 = circle_containing(circ[g.v], e[0]);
            const Circle& c2 = circle_containing(circ[g.v], e[2]);
            // labels transported to every circle of v2 with an unchanged edge set
            NGen base;
            base.v = v2;
            for (const auto& c : circ[v2]) {
                bool untouched = false;
                for (const auto& old : circ[g.v])
                    if (old == c) {
                        untouched = true;
                        break;
                    }
                if (untouched) base.lab[c.front()] = g.lab.at(c.front());
            }
            if (c1 != c2) {
                char l1 = g.lab.at(c1.front()), l2 = g.lab.at(c2.front());
                if (l1 == 'X' && l2 == 'X') continue;
                char prod = (l1 == 'X' || l2 == 'X') ? 'X' : '1';
                NGen o = base;
                o.lab[circle_containing(circ[v2], e[0]).front()] = prod;
                out.push_back(std::move(o));
            } else {
                const Circle& d1 = circle_containing(circ[v2], e[0]);
                const Circle& d2 = circle_containing(circ[v2], e[1]);
                char l = g.lab.at(c1.front());
                if (l == 'X') {
                    NGen o = base;
                    o.lab[d1.front()] = 'X';
                    o.lab[d2.front()] = 'X';
                    out.push_back(std::move(o));
                } else {
                    NGen o1 = base;
                    o1.lab[d1.front()] = '1';
                    o1.lab[d2.front()] = 'X';
                    out.push_back(std::move(o1));
                    NGen o2 = base;
                    o2.lab[d1.front()] = 'X';
                    o2.lab[d2.front()] = '1';
                    out.push_back(std::move(o2));
                }
            }
        }
        return out;
    };

    // dense differentials keyed by source bidegree
    std::map<std::pair<int, int>, std::vector<std::vector<unsigned char>>> diff;
    for (auto& [ij, reg] : cols) {
        auto [i, j] = ij;
        auto tgt = cols.find({i + 1, j});
        if (tgt == cols.end()) continue;
        std::vector<std::vector<unsigned char>> m(tgt->second.size(),
                                                  std::vector<unsigned char>(reg.size(), 0));
        for (auto& [g, col] : reg)
            for (auto& o : apply_d(g)) m[size_t(tgt->second.at(o))][size_t(col)] ^= 1;
        diff[ij] = std::move(m);
    }

    auto block_dims = [&](const std::map<std::pair<int, int>, std::map<NGen, int>>& registry,
                          const std::map<std::pair<int, int>, std::vector<std::vector<unsigned char>>>&
                              mats) {
        std::map<std::pair<int, int>, int> dims;
        for (auto& [ij, reg] : registry) {
            auto [i, j] = ij;
            int cdim = int(reg.size());
            int rout = 0, rin = 0;
            if (auto it = mats.find(ij); it != mats.end()) rout = naive_rank(it->second);
            if (auto it = mats.find({i - 1, j}); it != mats.end()) rin = naive_rank(it->second);
            int h = (cdim - rout) - rin;
            if (h > 0) dims[ij] = h;
        }
        return dims;
    };

    NaiveKh result;
    result.unreduced = block_dims(cols, diff);

    if (dia.basepoint()) {
        int bp = *dia.basepoint();
        auto keeps = [&](const NGen& g) {
            return g.lab.at(circle_containing(circ[g.v], bp).front()) == 'X';
        };
        // subcomplex of generators labeling the basepoint circle X
        std::map<std::pair<int, int>, std::map<NGen, int>> rcols;
        std::map<std::pair<int, int>, std::vector<int>> kept;  // old column ids
        for (auto& [ij, reg] : cols) {
            for (auto& [g, col] : reg)
                if (keeps(g)) {
                    int idx = int(rcols[ij].size());
                    rcols[ij].emplace(g, idx);
                    kept[ij].push_back(col);
                }
        }
        std::map<std::pair<int, int>, std::vector<std::vector<unsigned char>>> rdiff;
        for (auto& [ij, m] : diff) {
            auto [i, j] = ij;
            auto ks = kept.find(ij);
            auto kt = kept.find({i + 1, j});
            if (ks == kept.end() || kt == kept.end()) continue;
            if (ks->second.empty() || kt->second.empty()) continue;
            std::vector<std::vector<unsigned char>> sub(
                kt->second.size(), std::vector<unsigned char>(ks->second.size(), 0));
            for (size_t r = 0; r < kt->second.size(); ++r)
                for (size_t c = 0; c < ks->second.size(); ++c)
                    sub[r][c] = m[size_t(kt->second[r])][size_t(ks->second[c])];
            rdiff[ij] = std::move(sub);
        }
        auto rd = block_dims(rcols, rdiff);
        for (auto& [ij, h] : rd) result.reduced[{ij.first, ij.second + 1}] = h;
    }
    return result;
}

}  // namespace naive

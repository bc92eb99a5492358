#pragma once

// The cube of resolutions and its homology.
//
// Vertices v of {0,1}^n smooth crossing k by bit k (crossings in diagram
// order): the 0-smoothing of X[a,b,c,d] joins (a,b),(c,d), the 1-smoothing
// joins (a,d),(b,c).  Circles at a vertex are indexed by their minimal edge
// id, ascending.  A generator assigns each circle 1 or X (bit set = X).
//
// Gradings: i = |v| - n_minus, j = (#1 - #X) + |v| + n_plus - 2 n_minus.
//
// Edge maps are the Frobenius algebra structure maps
//   m(1,1)=1, m(1,X)=m(X,1)=X, m(X,X)=0,
//   delta(1)=1(x)X + X(x)1, delta(X)=X(x)X,
// with the integral sign (-1)^(#1-bits of v below position k) on the cube
// edge flipping crossing k.
//
// The basepoint action X relabels the basepoint circle 1 -> X, X -> 0: a
// chain map of bidegree (0,-2).  Generators whose basepoint circle is X
// form a subcomplex (over Z as well); stored with the quantum grading
// already shifted by +1 it is the reduced complex.  The complementary
// quotient is stored shifted by -1.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "kh/diagram.hpp"
#include "kh/errors.hpp"
#include "kh/linalg.hpp"
#include "kh/parallel.hpp"

namespace kh {

using Bidegree = std::pair<int, int>;

// ------------------------------------------------------ bigraded complexes

// Cochain complex with d of bidegree (1,0), differentials keyed by source.
// Missing entries are zero maps; dims holds every bidegree with generators.
template <class Mat>
struct BigradedComplex {
    std::map<Bidegree, int> dims;
    std::map<Bidegree, Mat> diff;

    int dim(int i, int j) const {
        auto it = dims.find({i, j});
        return it == dims.end() ? 0 : it->second;
    }
    Mat d(int i, int j) const {
        auto it = diff.find({i, j});
        if (it != diff.end()) return it->second;
        return Mat(dim(i + 1, j), dim(i, j));
    }
    std::vector<Bidegree> bidegrees() const {
        std::vector<Bidegree> out;
        for (auto& [ij, n] : dims)
            if (n > 0) out.push_back(ij);
        return out;
    }
    int total_dim() const {
        int t = 0;
        for (auto& [_, n] : dims) t += n;
        return t;
    }

    // Shape consistency of the stored matrices.
    void validate() const {
        for (auto& [ij, m] : diff) {
            if (m.rows() != dim(ij.first + 1, ij.second) || m.cols() != dim(ij.first, ij.second))
                throw LengthMismatch("differential at (" + std::to_string(ij.first) + "," +
                                     std::to_string(ij.second) + ") has shape " +
                                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                     ", expected " + std::to_string(dim(ij.first + 1, ij.second)) +
                                     "x" + std::to_string(dim(ij.first, ij.second)));
        }
    }
    // d^2 = 0 at every bidegree.
    bool d_squared_zero() const {
        for (auto& [ij, _] : dims) {
            auto [i, j] = ij;
            if (!(d(i + 1, j) * d(i, j)).is_zero()) return false;
        }
        return true;
    }
};

using ComplexF2 = BigradedComplex<MatrixF2>;
using ComplexZ = BigradedComplex<MatrixZ>;

// ----------------------------------------------------------- chain maps F2

// Per-bidegree matrices of a degree-(di,dj) map, keyed by source bidegree.
struct ChainMapF2 {
    int di = 0, dj = 0;
    std::map<Bidegree, MatrixF2> mats;

    MatrixF2 at(const ComplexF2& src, const ComplexF2& tgt, int i, int j) const {
        auto it = mats.find({i, j});
        if (it != mats.end()) return it->second;
        return MatrixF2(tgt.dim(i + di, j + dj), src.dim(i, j));
    }
};

inline ChainMapF2 identity_map(const ComplexF2& c) {
    ChainMapF2 f;
    for (auto& [ij, n] : c.dims)
        if (n > 0) f.mats[ij] = MatrixF2::identity(n);
    return f;
}

// Throws NotAChainMap unless d_tgt f = f d_src at every bidegree.
inline void check_chain_map(const ComplexF2& src, const ComplexF2& tgt,
                            const ChainMapF2& f) {
    std::set<Bidegree> keys;
    for (auto& [ij, _] : src.dims) keys.insert(ij);
    for (auto& [ij, _] : f.mats) keys.insert(ij);
    for (auto& [i, j] : keys) {
        MatrixF2 lhs = tgt.d(i + f.di, j + f.dj) * f.at(src, tgt, i, j);
        MatrixF2 rhs = f.at(src, tgt, i + 1, j) * src.d(i, j);
        if (!(lhs + rhs).is_zero())
            throw NotAChainMap("square fails at bidegree (" + std::to_string(i) + "," +
                               std::to_string(j) + ")");
    }
}

// g after f; complexes are needed only to size absent blocks.
inline ChainMapF2 compose(const ComplexF2& a, const ComplexF2& b, const ComplexF2& c,
                          const ChainMapF2& g, const ChainMapF2& f) {
    ChainMapF2 h;
    h.di = f.di + g.di;
    h.dj = f.dj + g.dj;
    for (auto& [ij, n] : a.dims) {
        auto [i, j] = ij;
        if (n == 0) continue;
        if (c.dim(i + h.di, j + h.dj) == 0) continue;
        h.mats[ij] = g.at(b, c, i + f.di, j + f.dj) * f.at(a, b, i, j);
    }
    return h;
}

// ------------------------------------------------------------- homology F2

struct HomologyF2 {
    struct Block {
        int dim = 0;
        MatrixF2 reps;  // chain-dim x dim, cycle representatives
        std::optional<SolverF2> solver;  // over [boundary basis | reps]
        int boundary_rank = 0;
    };
    std::map<Bidegree, Block> blocks;

    int dim(int i, int j) const {
        auto it = blocks.find({i, j});
        return it == blocks.end() ? 0 : it->second.dim;
    }
    std::vector<Bidegree> bidegrees() const {
        std::vector<Bidegree> out;
        for (auto& [ij, b] : blocks)
            if (b.dim > 0) out.push_back(ij);
        return out;
    }
    int total_dim() const {
        int t = 0;
        for (auto& [_, b] : blocks) t += b.dim;
        return t;
    }

    // Coordinates of a cycle in the representative basis.
    VecF2 coords(int i, int j, const VecF2& z) const {
        auto it = blocks.find({i, j});
        if (it == blocks.end() || !it->second.solver) {
            if (!z.is_zero())
                throw CheckFailed("nonzero vector in a zero homology block (" +
                                  std::to_string(i) + "," + std::to_string(j) + ")");
            return VecF2(0);
        }
        const Block& b = it->second;
        auto x = b.solver->solve(z);
        if (!x)
            throw CheckFailed("vector is not a cycle mod boundaries at (" +
                              std::to_string(i) + "," + std::to_string(j) + ")");
        VecF2 out(b.dim);
        for (int t = 0; t < b.dim; ++t)
            if (x->get(b.boundary_rank + t)) out.set(t, true);
        return out;
    }
};

inline HomologyF2 homology(const ComplexF2& c) {
    std::set<Bidegree> keys;
    for (auto& [ij, n] : c.dims)
        if (n > 0) keys.insert(ij);
    std::vector<Bidegree> order(keys.begin(), keys.end());
    std::vector<std::pair<Bidegree, HomologyF2::Block>> slots(order.size());
    parallel_for(int(order.size()), [&](int t) {
        auto [i, j] = order[size_t(t)];
        HomologyF2::Block blk;
        MatrixF2 dout = c.d(i, j);
        MatrixF2 din = c.d(i - 1, j);
        MatrixF2 kern = kernel_basis(dout);
        MatrixF2 bnd = image_basis(din);
        // representatives: kernel columns that extend the boundary basis
        SolverF2 ext(MatrixF2::hconcat(bnd, kern));
        std::vector<int> rep_cols;
        for (int p : ext.pivot_columns())
            if (p >= bnd.cols()) rep_cols.push_back(p - bnd.cols());
        blk.dim = int(rep_cols.size());
        blk.reps = kern.select_columns(rep_cols);
        blk.boundary_rank = bnd.cols();
        blk.solver.emplace(MatrixF2::hconcat(bnd, blk.reps));
        slots[size_t(t)] = {{i, j}, std::move(blk)};
    });
    HomologyF2 h;
    for (auto& [ij, blk] : slots) h.blocks[ij] = std::move(blk);
    return h;
}

// A map on homology itself, one matrix per source bidegree.
struct HomMapF2 {
    int di = 0, dj = 0;
    std::map<Bidegree, MatrixF2> mats;

    MatrixF2 at(const HomologyF2& src, const HomologyF2& tgt, int i, int j) const {
        auto it = mats.find({i, j});
        if (it != mats.end()) return it->second;
        return MatrixF2(tgt.dim(i + di, j + dj), src.dim(i, j));
    }
};

// Matrix of the map induced on homology by a chain map.
inline MatrixF2 induced_map(const HomologyF2& hsrc, const HomologyF2& htgt,
                            const ComplexF2& src, const ComplexF2& tgt,
                            const ChainMapF2& f, int i, int j) {
    auto it = hsrc.blocks.find({i, j});
    int ns = it == hsrc.blocks.end() ? 0 : it->second.dim;
    int nt = htgt.dim(i + f.di, j + f.dj);
    MatrixF2 out(nt, ns);
    if (ns == 0 || tgt.dim(i + f.di, j + f.dj) == 0) return out;
    MatrixF2 fm = f.at(src, tgt, i, j);
    for (int k = 0; k < ns; ++k) {
        VecF2 img = fm * it->second.reps.col_vec(k);
        out.set_col(k, htgt.coords(i + f.di, j + f.dj, img));
    }
    return out;
}

// The whole induced map, one block per source bidegree with generators.
inline HomMapF2 on_homology(const HomologyF2& hsrc, const HomologyF2& htgt,
                            const ComplexF2& src, const ComplexF2& tgt,
                            const ChainMapF2& f) {
    HomMapF2 out;
    out.di = f.di;
    out.dj = f.dj;
    for (auto& [i, j] : hsrc.bidegrees())
        out.mats[{i, j}] = induced_map(hsrc, htgt, src, tgt, f, i, j);
    return out;
}

// -------------------------------------------------------------- homology Z

struct HomologyZ {
    struct Block {
        std::vector<bigint> torsion;  // invariant factors > 1, divisibility order
        int free_rank = 0;
        bool trivial() const { return torsion.empty() && free_rank == 0; }
        // report form: torsion factors then one 0 per free summand
        std::vector<bigint> factors() const {
            std::vector<bigint> f = torsion;
            for (int k = 0; k < free_rank; ++k) f.push_back(0);
            return f;
        }
    };
    std::map<Bidegree, Block> blocks;

    const Block& at(int i, int j) const {
        static const Block empty;
        auto it = blocks.find({i, j});
        return it == blocks.end() ? empty : it->second;
    }
    // number of Z/2 summands at a bidegree
    int two_torsion(int i, int j) const {
        int c = 0;
        for (auto& f : at(i, j).torsion)
            if (f == 2) ++c;
        return c;
    }
};

inline HomologyZ homology(const ComplexZ& c) {
    std::set<Bidegree> keys;
    for (auto& [ij, n] : c.dims)
        if (n > 0) keys.insert(ij);
    std::vector<Bidegree> order(keys.begin(), keys.end());
    std::vector<std::pair<Bidegree, HomologyZ::Block>> slots(order.size());
    parallel_for(int(order.size()), [&](int t) {
        auto [i, j] = order[size_t(t)];
        HomologyZ::Block blk;
        int n = c.dim(i, j);
        MatrixZ dout = c.d(i, j);
        MatrixZ din = c.d(i - 1, j);
        SmithForm s = smith_normal_form(dout);
        int r = s.rank();
        int kdim = n - r;  // kernel = span of the last kdim columns of s.r
        if (kdim > 0) {
            // relations of the kernel lattice: rows >= r of r_inv * d_in
            MatrixZ q(kdim, din.cols());
            MatrixZ qf = s.r_inv * din;
            for (int row = 0; row < n; ++row)
                for (auto& [col, v] : qf.row(row)) {
                    if (row < r) {
                        if (v != 0)
                            throw CheckFailed("d^2 != 0 over Z near bidegree (" +
                                              std::to_string(i) + "," + std::to_string(j) + ")");
                    } else {
                        q.set(row - r, col, v);
                    }
                }
            SmithForm sq = smith_normal_form(q);
            for (auto& f : sq.factors)
                if (f > 1) blk.torsion.push_back(f);
            blk.free_rank = kdim - sq.rank();
        }
        slots[size_t(t)] = {{i, j}, std::move(blk)};
    });
    HomologyZ h;
    for (auto& [ij, blk] : slots)
        if (!blk.trivial()) h.blocks[ij] = std::move(blk);
    return h;
}

// ------------------------------------------------------------------- cube

struct Gen {
    uint32_t v = 0;       // resolution vertex
    uint32_t labels = 0;  // bit per circle index, set = X
    friend auto operator<=>(const Gen&, const Gen&) = default;
};

class KhCube {
public:
    explicit KhCube(const Diagram& d) : dia_(d) {
        n_ = int(d.crossings().size());
        if (n_ > 24) throw KhError("diagram too large: " + std::to_string(n_) + " crossings");
        edges_ = d.edges();
        for (int p = 0; p < int(edges_.size()); ++p) epos_[edges_[p]] = p;
        build_vertices_();
        build_blocks_();
        build_diffs_f2_();
    }

    const Diagram& diagram() const { return dia_; }
    int crossing_count() const { return n_; }
    const std::vector<int>& edges() const { return edges_; }

    int circle_count(uint32_t v) const { return vinfo_[v].n_circ; }
    int circle_of(uint32_t v, int edge) const {
        return vinfo_[v].circ_of_edge[size_t(epos_.at(edge))];
    }
    // minimal edge id of each circle at v, ascending (defines circle order)
    const std::vector<int>& circle_mins(uint32_t v) const { return vinfo_[v].mins; }

    const ComplexF2& complex_f2() const { return cf2_; }
    // The integral complex is built on first use: it is much heavier than
    // the F2 one and many callers (movie maps in particular) never need it.
    // The first call must not race another call on the same cube.
    const ComplexZ& complex_z() const {
        if (!z_built_) {
            build_diffs_z_();
            z_built_ = true;
        }
        return cz_;
    }

    const std::vector<Gen>& gens(int i, int j) const {
        static const std::vector<Gen> none;
        auto it = gens_.find({i, j});
        return it == gens_.end() ? none : it->second;
    }
    std::optional<int> gen_index(int i, int j, Gen g) const {
        const auto& gs = gens(i, j);
        auto it = std::lower_bound(gs.begin(), gs.end(), g);
        if (it == gs.end() || !(*it == g)) return std::nullopt;
        return int(it - gs.begin());
    }
    Bidegree bidegree_of(Gen g) const {
        int w = std::popcount(g.v);
        int c = circle_count(g.v);
        int x = std::popcount(g.labels);
        return {w - dia_.n_minus(), (c - 2 * x) + w + dia_.n_plus() - 2 * dia_.n_minus()};
    }

    int basepoint_edge() const {
        if (!dia_.basepoint()) throw MissingBasepoint("diagram has no basepoint");
        return *dia_.basepoint();
    }

    // X relabels the basepoint circle: bidegree (0,-2) chain map.
    ChainMapF2 x_action() const {
        int bp = basepoint_edge();
        ChainMapF2 f;
        f.dj = -2;
        for (auto& [ij, gs] : gens_) {
            auto [i, j] = ij;
            if (cf2_.dim(i, j - 2) == 0 || gs.empty()) continue;
            MatrixF2 m(cf2_.dim(i, j - 2), int(gs.size()));
            for (int col = 0; col < int(gs.size()); ++col) {
                Gen g = gs[size_t(col)];
                uint32_t bit = uint32_t(1) << circle_of(g.v, bp);
                if (g.labels & bit) continue;  // X -> 0
                Gen out{g.v, g.labels | bit};
                m.set(*gen_index(i, j - 2, out), col, true);
            }
            f.mats[ij] = std::move(m);
        }
        return f;
    }

    // Subcomplex of generators whose basepoint circle is X, quantum-shifted
    // by +1.  sub_index maps (stored bidegree, reduced index) -> full index.
    struct Reduced {
        ComplexF2 complex;
        std::map<Bidegree, std::vector<int>> full_index;
    };
    Reduced reduced_f2() const { return project_(true, +1); }
    // Quotient by that subcomplex (basepoint circle = 1), shifted by -1.
    Reduced quotient_f2() const { return project_(false, -1); }

    ComplexZ reduced_z() const {
        const ComplexZ& cz = complex_z();
        ComplexZ out;
        std::map<Bidegree, std::vector<int>> keep = kept_indices_(true);
        for (auto& [ij, idx] : keep)
            if (!idx.empty()) out.dims[{ij.first, ij.second + 1}] = int(idx.size());
        for (auto& [ij, idx] : keep) {
            auto [i, j] = ij;
            auto nxt = keep.find({i + 1, j});
            if (idx.empty() || nxt == keep.end() || nxt->second.empty()) continue;
            MatrixZ full = cz.d(i, j);
            MatrixZ m(int(nxt->second.size()), int(idx.size()));
            for (int rr = 0; rr < int(nxt->second.size()); ++rr)
                for (int cc = 0; cc < int(idx.size()); ++cc) {
                    bigint v = full.get(nxt->second[size_t(rr)], idx[size_t(cc)]);
                    if (v != 0) m.set(rr, cc, v);
                }
            out.diff[{i, j + 1}] = std::move(m);
        }
        return out;
    }

    // Inclusion of the reduced subcomplex into the full complex, (0,-1).
    ChainMapF2 inclusion(const Reduced& red) const {
        ChainMapF2 f;
        f.dj = -1;
        for (auto& [ij, idx] : red.full_index) {
            auto [i, j] = ij;
            if (idx.empty()) continue;
            MatrixF2 m(cf2_.dim(i, j - 1), int(idx.size()));
            for (int cc = 0; cc < int(idx.size()); ++cc) m.set(idx[size_t(cc)], cc, true);
            f.mats[ij] = std::move(m);
        }
        return f;
    }
    // Projection of the full complex onto the quotient, (0,-1).
    ChainMapF2 projection(const Reduced& quot) const {
        ChainMapF2 f;
        f.dj = -1;
        for (auto& [ij, idx] : quot.full_index) {
            auto [i, j] = ij;  // stored quotient bidegree; full source is (i, j+1)
            if (idx.empty()) continue;
            MatrixF2 m(int(idx.size()), cf2_.dim(i, j + 1));
            for (int rr = 0; rr < int(idx.size()); ++rr) m.set(rr, idx[size_t(rr)], true);
            f.mats[{i, j + 1}] = std::move(m);
        }
        return f;
    }

private:
    struct VertexInfo {
        std::vector<int> circ_of_edge;  // by edge position
        std::vector<int> mins;          // min edge id per circle
        int n_circ = 0;
    };

    void build_vertices_() {
        vinfo_.resize(size_t(1) << n_);
        parallel_for(int(vinfo_.size()), [&](int vi) {
            uint32_t v = uint32_t(vi);
            int ne = int(edges_.size());
            std::vector<int> parent(ne);
            for (int p = 0; p < ne; ++p) parent[p] = p;
            auto find = [&](int x) {
                while (parent[x] != x) x = parent[x] = parent[parent[x]];
                return x;
            };
            auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
            for (int k = 0; k < n_; ++k) {
                const auto& e = dia_.crossings()[size_t(k)].e;
                int a = epos_.at(e[0]), b = epos_.at(e[1]), c = epos_.at(e[2]),
                    d = epos_.at(e[3]);
                if (v >> k & 1) {
                    unite(a, d);
                    unite(b, c);
                } else {
                    unite(a, b);
                    unite(c, d);
                }
            }
            VertexInfo info;
            info.circ_of_edge.assign(size_t(ne), -1);
            std::map<int, int> root_min;  // root -> min edge id
            for (int p = 0; p < ne; ++p) {
                int r = find(p);
                auto [it, fresh] = root_min.try_emplace(r, edges_[size_t(p)]);
                if (!fresh) it->second = std::min(it->second, edges_[size_t(p)]);
            }
            std::map<int, int> min_to_idx;  // sorted by min edge id
            for (auto& [_, m] : root_min) min_to_idx[m] = 0;
            int idx = 0;
            for (auto& [m, slot] : min_to_idx) {
                slot = idx++;
                info.mins.push_back(m);
            }
            info.n_circ = idx;
            for (int p = 0; p < ne; ++p)
                info.circ_of_edge[size_t(p)] = min_to_idx.at(root_min.at(find(p)));
            vinfo_[size_t(vi)] = std::move(info);
        });
    }

    void build_blocks_() {
        for (uint32_t v = 0; v < (uint32_t(1) << n_); ++v) {
            int c = vinfo_[v].n_circ;
            for (uint32_t labels = 0; labels < (uint32_t(1) << c); ++labels) {
                Gen g{v, labels};
                gens_[bidegree_of(g)].push_back(g);
            }
        }
        for (auto& [ij, gs] : gens_) {
            std::sort(gs.begin(), gs.end());
            cf2_.dims[ij] = int(gs.size());
        }
    }

    // Every nonzero entry of d out of bidegree (i,j): emit(row, col, sign).
    // Distinct crossings give distinct target vertices, so entries never
    // collide.
    template <class Emit>
    void diff_entries_(int i, int j, Emit&& emit) const {
        const auto& src = gens_.at({i, j});
        for (int col = 0; col < int(src.size()); ++col) {
            Gen g = src[size_t(col)];
            for (int k = 0; k < n_; ++k) {
                if (g.v >> k & 1) continue;
                uint32_t v2 = g.v | (uint32_t(1) << k);
                int sign = std::popcount(g.v & ((uint32_t(1) << k) - 1)) % 2 ? -1 : 1;
                const auto& e = dia_.crossings()[size_t(k)].e;
                int ca = circle_of(g.v, e[0]);
                int cc = circle_of(g.v, e[2]);
                // transport labels of circles untouched by this smoothing
                auto transport = [&](uint32_t tgt_labels, int skip1, int skip2,
                                     uint32_t extra) {
                    for (int ci = 0; ci < circle_count(g.v); ++ci) {
                        if (ci == skip1 || ci == skip2) continue;
                        if (g.labels >> ci & 1) {
                            int t2 = circle_of(v2, circle_mins(g.v)[size_t(ci)]);
                            tgt_labels |= uint32_t(1) << t2;
                        }
                    }
                    Gen out{v2, tgt_labels | extra};
                    emit(*gen_index(i + 1, j, out), col, sign);
                };
                if (ca != cc) {
                    // merge: both circles land on one circle of v2
                    int tc = circle_of(v2, e[0]);
                    bool xa = g.labels >> ca & 1, xc = g.labels >> cc & 1;
                    if (xa && xc) continue;  // m(X,X) = 0
                    uint32_t lab = (xa || xc) ? (uint32_t(1) << tc) : 0;
                    transport(lab, ca, cc, 0);
                } else {
                    // split: the circle separates into those of a and b
                    int t1 = circle_of(v2, e[0]);
                    int t2 = circle_of(v2, e[1]);
                    if (t1 == t2)
                        throw KhError("resolution change neither merges nor splits; "
                                      "PD data is not planar");
                    bool x = g.labels >> ca & 1;
                    if (x) {
                        transport(uint32_t(1) << t1, ca, -1, uint32_t(1) << t2);
                    } else {
                        transport(uint32_t(1) << t1, ca, -1, 0);
                        transport(uint32_t(1) << t2, ca, -1, 0);
                    }
                }
            }
        }
    }

    void build_diffs_f2_() {
        std::vector<Bidegree> order;
        for (auto& [ij, _] : gens_) order.push_back(ij);
        std::vector<MatrixF2> slot(order.size());
        parallel_for(int(order.size()), [&](int t) {
            auto [i, j] = order[size_t(t)];
            auto tg = gens_.find({i + 1, j});
            if (tg == gens_.end()) return;
            MatrixF2 mf(int(tg->second.size()), int(gens_.at({i, j}).size()));
            diff_entries_(i, j, [&](int r, int c, int) { mf.flip(r, c); });
            slot[size_t(t)] = std::move(mf);
        });
        for (size_t t = 0; t < order.size(); ++t) {
            auto [i, j] = order[t];
            if (!gens_.count({i + 1, j})) continue;
            cf2_.diff[order[t]] = std::move(slot[t]);
        }
    }

    void build_diffs_z_() const {
        for (auto& [ij, gs] : gens_) cz_.dims[ij] = int(gs.size());
        std::vector<Bidegree> order;
        for (auto& [ij, _] : gens_) order.push_back(ij);
        std::vector<MatrixZ> slot(order.size());
        parallel_for(int(order.size()), [&](int t) {
            auto [i, j] = order[size_t(t)];
            auto tg = gens_.find({i + 1, j});
            if (tg == gens_.end()) return;
            MatrixZ mz(int(tg->second.size()), int(gens_.at({i, j}).size()));
            diff_entries_(i, j, [&](int r, int c, int s) { mz.add(r, c, s); });
            slot[size_t(t)] = std::move(mz);
        });
        for (size_t t = 0; t < order.size(); ++t) {
            auto [i, j] = order[t];
            if (!gens_.count({i + 1, j})) continue;
            cz_.diff[order[t]] = std::move(slot[t]);
        }
    }

    std::map<Bidegree, std::vector<int>> kept_indices_(bool want_x) const {
        int bp = basepoint_edge();
        std::map<Bidegree, std::vector<int>> keep;
        for (auto& [ij, gs] : gens_) {
            auto& lst = keep[ij];
            for (int t = 0; t < int(gs.size()); ++t) {
                bool is_x = gs[size_t(t)].labels >> circle_of(gs[size_t(t)].v, bp) & 1;
                if (is_x == want_x) lst.push_back(t);
            }
        }
        return keep;
    }

    Reduced project_(bool want_x, int shift) const {
        Reduced out;
        auto keep = kept_indices_(want_x);
        for (auto& [ij, idx] : keep) {
            if (idx.empty()) continue;
            Bidegree stored{ij.first, ij.second + shift};
            out.complex.dims[stored] = int(idx.size());
            out.full_index[stored] = idx;
        }
        for (auto& [ij, idx] : keep) {
            auto [i, j] = ij;
            auto nxt = keep.find({i + 1, j});
            if (idx.empty() || nxt == keep.end() || nxt->second.empty()) continue;
            MatrixF2 full = cf2_.d(i, j);
            MatrixF2 m(int(nxt->second.size()), int(idx.size()));
            for (int rr = 0; rr < int(nxt->second.size()); ++rr)
                for (int cc = 0; cc < int(idx.size()); ++cc)
                    if (full.get(nxt->second[size_t(rr)], idx[size_t(cc)]))
                        m.set(rr, cc, true);
            out.complex.diff[{i, j + shift}] = std::move(m);
        }
        return out;
    }

    Diagram dia_;
    int n_ = 0;
    std::vector<int> edges_;
    std::map<int, int> epos_;
    std::vector<VertexInfo> vinfo_;
    std::map<Bidegree, std::vector<Gen>> gens_;
    ComplexF2 cf2_;
    mutable ComplexZ cz_;
    mutable bool z_built_ = false;
};

// ------------------------------------------------- basepoint verification

// The three checks behind the reduced/unreduced relationship over F2:
//  (1) the X-sequence is exact on homology:
//      rank X(i,j) + rank X(i,j+2) = dim Kh(i,j),
//  (2) dim Kh(i,j) = dim redKh(i,j-1) + dim redKh(i,j+1),
//  (3) the reduced inclusion is injective and the quotient projection is
//      surjective on homology.
// Throws CheckFailed naming the first offending bidegree.
inline void verify_basepoint_split(const KhCube& cube) {
    const ComplexF2& c = cube.complex_f2();
    HomologyF2 h = homology(c);
    auto red = cube.reduced_f2();
    auto quo = cube.quotient_f2();
    HomologyF2 hred = homology(red.complex);
    HomologyF2 hquo = homology(quo.complex);
    ChainMapF2 x = cube.x_action();

    std::set<Bidegree> bids;
    for (auto& ij : h.bidegrees()) bids.insert(ij);
    for (auto& ij : hred.bidegrees()) {
        bids.insert({ij.first, ij.second - 1});
        bids.insert({ij.first, ij.second + 1});
    }

    for (auto& [i, j] : bids) {
        int full = h.dim(i, j);
        int rx_here = rank(induced_map(h, h, c, c, x, i, j));
        int rx_above = rank(induced_map(h, h, c, c, x, i, j + 2));
        if (rx_here + rx_above != full)
            throw CheckFailed("X-sequence not exact at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
        if (hred.dim(i, j - 1) + hred.dim(i, j + 1) != full)
            throw CheckFailed("reduced splitting dims fail at (" + std::to_string(i) +
                              "," + std::to_string(j) + ")");
    }
    ChainMapF2 inc = cube.inclusion(red);
    ChainMapF2 prj = cube.projection(quo);
    check_chain_map(red.complex, c, inc);
    check_chain_map(c, quo.complex, prj);
    for (auto& [i, j] : hred.bidegrees()) {
        MatrixF2 m = induced_map(hred, h, red.complex, c, inc, i, j);
        if (rank(m) != m.cols())
            throw CheckFailed("reduced inclusion not injective at (" + std::to_string(i) +
                              "," + std::to_string(j) + ")");
    }
    for (auto& [i, j] : hquo.bidegrees()) {
        // surjectivity of the projection onto each quotient block
        MatrixF2 m = induced_map(h, hquo, c, quo.complex, prj, i, j + 1);
        if (rank(m) != hquo.dim(i, j))
            throw CheckFailed("quotient projection not surjective at (" +
                              std::to_string(i) + "," + std::to_string(j) + ")");
    }
}

// ------------------------------------------------- reduced functoriality

// Map induced on reduced homology by a chain map f of the full complexes.
//
// Over F2 the inclusion iota of the reduced subcomplex is injective on
// homology with image ker(X); whenever f commutes with the basepoint
// actions on homology, f maps ker(X) into ker(X'), so each reduced class
// hr has a unique hr' with iota'(hr') = f(iota(hr)).  That hr' is found
// by solving against the target inclusion's homology matrix.  If f does
// not preserve the reduced image (wrong basepoints, or f not a module
// map), the solve fails and CheckFailed is thrown.
inline HomMapF2 reduced_induced(const KhCube& a, const KhCube& b, const ChainMapF2& f) {
    const ComplexF2& ca = a.complex_f2();
    const ComplexF2& cb = b.complex_f2();
    KhCube::Reduced reda = a.reduced_f2();
    KhCube::Reduced redb = b.reduced_f2();
    HomologyF2 ha = homology(ca), hb = homology(cb);
    HomologyF2 hra = homology(reda.complex), hrb = homology(redb.complex);
    ChainMapF2 ia = a.inclusion(reda), ib = b.inclusion(redb);

    HomMapF2 out;
    out.di = f.di;
    out.dj = f.dj;
    for (auto& [i, j] : hra.bidegrees()) {
        // classes pushed through iota, then f, landing in H(b) at (i+di, j-1+dj)
        MatrixF2 ma = induced_map(hra, ha, reda.complex, ca, ia, i, j);
        MatrixF2 fm = induced_map(ha, hb, ca, cb, f, i, j - 1);
        MatrixF2 pushed = fm * ma;
        // coordinates against the target inclusion
        int ti = i + f.di, tj = j + f.dj;
        MatrixF2 mb = induced_map(hrb, hb, redb.complex, cb, ib, ti, tj);
        if (rank(mb) != mb.cols())
            throw CheckFailed("reduced inclusion not injective at (" +
                              std::to_string(ti) + "," + std::to_string(tj) + ")");
        SolverF2 s(mb);
        MatrixF2 block(hrb.dim(ti, tj), hra.dim(i, j));
        for (int c = 0; c < pushed.cols(); ++c) {
            auto x = s.solve(pushed.col_vec(c));
            if (!x)
                throw CheckFailed("image of a reduced class leaves the reduced "
                                  "subspace at (" + std::to_string(i) + "," +
                                  std::to_string(j) + ")");
            block.set_col(c, *x);
        }
        out.mats[{i, j}] = std::move(block);
    }
    return out;
}

}  // namespace kh

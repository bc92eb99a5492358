#pragma once

// The first Steenrod square on mod-2 Khovanov homology, computed as the
// Bockstein of the integral complex: lift a mod-2 cycle z to an integer
// chain with 0/1 entries, observe that its integral boundary is exactly
// twice some chain y, and take the class of y mod 2.  The result is
// independent of the lift and of the representative; rank Sq^1 at (i,j)
// equals the number of Z/2 summands of the integral homology at (i+1,j).

#include <string>
#include <vector>

#include "kh/errors.hpp"
#include "kh/khcomplex.hpp"
#include "kh/linalg.hpp"

namespace kh {

// Bockstein on the homology of cf, which must be the mod-2 reduction of cz
// (same generators in the same order).  Output blocks are written in the
// representative basis of h, with di = +1.
inline HomMapF2 sq1(const ComplexF2& cf, const ComplexZ& cz, const HomologyF2& h) {
    for (auto& [ij, n] : cf.dims)
        if (cz.dim(ij.first, ij.second) != n)
            throw LengthMismatch("mod-2 and integral complexes disagree at (" +
                                 std::to_string(ij.first) + "," + std::to_string(ij.second) +
                                 ")");
    for (auto& [ij, n] : cz.dims)
        if (cf.dim(ij.first, ij.second) != n)
            throw LengthMismatch("mod-2 and integral complexes disagree at (" +
                                 std::to_string(ij.first) + "," + std::to_string(ij.second) +
                                 ")");

    HomMapF2 out;
    out.di = 1;
    for (auto& [i, j] : h.bidegrees()) {
        const auto& blk = h.blocks.at({i, j});
        MatrixF2 m(h.dim(i + 1, j), blk.dim);
        MatrixZ dz = cz.d(i, j);
        for (int k = 0; k < blk.dim; ++k) {
            VecF2 z = blk.reps.col_vec(k);
            std::vector<bigint> lift(size_t(cf.dim(i, j)), 0);
            for (int t = 0; t < cf.dim(i, j); ++t)
                if (z.get(t)) lift[size_t(t)] = 1;
            std::vector<bigint> w = dz * lift;
            VecF2 y(cf.dim(i + 1, j));
            for (int t = 0; t < int(w.size()); ++t) {
                if (w[size_t(t)] % 2 != 0)
                    throw LiftInconsistency("integral boundary of a lifted cycle is odd in "
                                            "coordinate " +
                                            std::to_string(t) + " at bidegree (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")");
                bigint half = w[size_t(t)] / 2;
                if (half % 2 != 0) y.set(t, true);
            }
            if (!(cf.d(i + 1, j) * y).is_zero())
                throw LiftInconsistency("halved boundary is not a cycle at bidegree (" +
                                        std::to_string(i) + "," + std::to_string(j) + ")");
            m.set_col(k, h.coords(i + 1, j, y));
        }
        out.mats[{i, j}] = std::move(m);
    }
    return out;
}

// Sq^1 on the unreduced homology of a cube.
inline HomMapF2 sq1(const KhCube& cube, const HomologyF2& h) {
    return sq1(cube.complex_f2(), cube.complex_z(), h);
}

// Sq^1 on reduced homology; hred must be the homology of cube.reduced_f2().
inline HomMapF2 sq1_reduced(const KhCube& cube, const HomologyF2& hred) {
    return sq1(cube.reduced_f2().complex, cube.reduced_z(), hred);
}

// Naturality of the Bockstein along a homology-level map f: hsrc -> htgt:
//   sq1_tgt . f = f . sq1_src  blockwise.
// Throws CheckFailed naming the first offending source bidegree.
inline void check_sq1_natural(const HomologyF2& hsrc, const HomologyF2& htgt,
                              const HomMapF2& sq_src, const HomMapF2& sq_tgt,
                              const HomMapF2& f) {
    for (auto& [i, j] : hsrc.bidegrees()) {
        MatrixF2 lhs = sq_tgt.at(htgt, htgt, i + f.di, j + f.dj) * f.at(hsrc, htgt, i, j);
        MatrixF2 rhs = f.at(hsrc, htgt, i + 1, j) * sq_src.at(hsrc, hsrc, i, j);
        if (!(lhs + rhs).is_zero())
            throw CheckFailed("Sq^1 does not commute with the map at bidegree (" +
                              std::to_string(i) + "," + std::to_string(j) + ")");
    }
}

}  // namespace kh

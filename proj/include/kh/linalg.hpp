#pragma once

// Exact linear algebra over F2 and over the integers.
//
// F2 side: VecF2 / MatrixF2 are dense with bit-packed rows.  Row reduction
// always takes the first usable row for the leftmost open column, so ranks,
// pivot lists, kernel and image bases are deterministic.  SolverF2 keeps the
// reduced form together with the row transform and answers repeated
// solve/membership queries against one matrix.
//
// Z side: MatrixZ is sparse with arbitrary-precision entries.
// smith_normal_form returns D = L·A·R with L, R unimodular plus R⁻¹, which
// is exactly what expressing kernels and relation matrices needs.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "kh/errors.hpp"

namespace kh {

using bigint = boost::multiprecision::cpp_int;

// ----------------------------------------------------------------- VecF2

class VecF2 {
public:
    VecF2() = default;
    explicit VecF2(int n) : n_(n), w_((n + 63) / 64, 0) {}

    int size() const { return n_; }

    bool get(int i) const { return (w_[i >> 6] >> (i & 63)) & 1u; }
    void set(int i, bool v) {
        uint64_t m = uint64_t(1) << (i & 63);
        if (v) w_[i >> 6] |= m;
        else w_[i >> 6] &= ~m;
    }
    void flip(int i) { w_[i >> 6] ^= uint64_t(1) << (i & 63); }

    VecF2& operator^=(const VecF2& o) {
        for (size_t k = 0; k < w_.size(); ++k) w_[k] ^= o.w_[k];
        return *this;
    }
    friend VecF2 operator^(VecF2 a, const VecF2& b) {
        a ^= b;
        return a;
    }

    bool is_zero() const {
        for (uint64_t x : w_)
            if (x) return false;
        return true;
    }
    bool operator==(const VecF2&) const = default;

    int popcount() const {
        int c = 0;
        for (uint64_t x : w_) c += std::popcount(x);
        return c;
    }

    // Indices of the set bits, ascending.
    std::vector<int> support() const {
        std::vector<int> s;
        for (int i = 0; i < n_; ++i)
            if (get(i)) s.push_back(i);
        return s;
    }

    const std::vector<uint64_t>& words() const { return w_; }
    std::vector<uint64_t>& words() { return w_; }

private:
    int n_ = 0;
    std::vector<uint64_t> w_;
};

// ---------------------------------------------------------------- MatrixF2

class MatrixF2 {
public:
    MatrixF2() = default;
    MatrixF2(int rows, int cols)
        : rows_(rows), cols_(cols), words_((cols + 63) / 64),
          data_(size_t(rows) * words_, 0) {}

    static MatrixF2 identity(int n) {
        MatrixF2 m(n, n);
        for (int i = 0; i < n; ++i) m.set(i, i, true);
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    bool get(int r, int c) const {
        return (word(r, c >> 6) >> (c & 63)) & 1u;
    }
    void set(int r, int c, bool v) {
        uint64_t m = uint64_t(1) << (c & 63);
        if (v) word(r, c >> 6) |= m;
        else word(r, c >> 6) &= ~m;
    }
    void flip(int r, int c) { word(r, c >> 6) ^= uint64_t(1) << (c & 63); }

    // row r += row s
    void row_xor(int r, int s) {
        uint64_t* a = &data_[size_t(r) * words_];
        const uint64_t* b = &data_[size_t(s) * words_];
        for (int k = 0; k < words_; ++k) a[k] ^= b[k];
    }
    void swap_rows(int r, int s) {
        if (r == s) return;
        uint64_t* a = &data_[size_t(r) * words_];
        uint64_t* b = &data_[size_t(s) * words_];
        for (int k = 0; k < words_; ++k) std::swap(a[k], b[k]);
    }

    VecF2 row_vec(int r) const {
        VecF2 v(cols_);
        std::copy(&data_[size_t(r) * words_], &data_[size_t(r) * words_] + words_,
                  v.words().begin());
        return v;
    }
    VecF2 col_vec(int c) const {
        VecF2 v(rows_);
        for (int r = 0; r < rows_; ++r)
            if (get(r, c)) v.set(r, true);
        return v;
    }
    void set_col(int c, const VecF2& v) {
        for (int r = 0; r < rows_; ++r) set(r, c, v.get(r));
    }
    void set_row(int r, const VecF2& v) {
        std::copy(v.words().begin(), v.words().end(), &data_[size_t(r) * words_]);
    }

    MatrixF2 operator*(const MatrixF2& b) const {
        MatrixF2 c(rows_, b.cols_);
        for (int i = 0; i < rows_; ++i) {
            const uint64_t* ar = &data_[size_t(i) * words_];
            for (int w = 0; w < words_; ++w) {
                uint64_t bits = ar[w];
                while (bits) {
                    int k = (w << 6) + std::countr_zero(bits);
                    bits &= bits - 1;
                    uint64_t* cr = &c.data_[size_t(i) * c.words_];
                    const uint64_t* br = &b.data_[size_t(k) * b.words_];
                    for (int t = 0; t < b.words_; ++t) cr[t] ^= br[t];
                }
            }
        }
        return c;
    }

    VecF2 operator*(const VecF2& v) const {
        VecF2 out(rows_);
        for (int r = 0; r < rows_; ++r) {
            const uint64_t* a = &data_[size_t(r) * words_];
            int parity = 0;
            for (int k = 0; k < words_; ++k)
                parity ^= std::popcount(a[k] & v.words()[k]) & 1;
            if (parity) out.set(r, true);
        }
        return out;
    }

    MatrixF2 operator+(const MatrixF2& b) const {
        MatrixF2 c = *this;
        for (size_t k = 0; k < data_.size(); ++k) c.data_[k] ^= b.data_[k];
        return c;
    }

    bool operator==(const MatrixF2&) const = default;

    bool is_zero() const {
        for (uint64_t x : data_)
            if (x) return false;
        return true;
    }

    MatrixF2 transpose() const {
        MatrixF2 t(cols_, rows_);
        for (int r = 0; r < rows_; ++r)
            for (int c = 0; c < cols_; ++c)
                if (get(r, c)) t.set(c, r, true);
        return t;
    }

    MatrixF2 select_columns(const std::vector<int>& cols) const {
        MatrixF2 out(rows_, int(cols.size()));
        for (int k = 0; k < int(cols.size()); ++k)
            for (int r = 0; r < rows_; ++r)
                if (get(r, cols[k])) out.set(r, k, true);
        return out;
    }

    static MatrixF2 hconcat(const MatrixF2& a, const MatrixF2& b) {
        MatrixF2 out(a.rows(), a.cols() + b.cols());
        for (int r = 0; r < a.rows(); ++r) {
            for (int c = 0; c < a.cols(); ++c)
                if (a.get(r, c)) out.set(r, c, true);
            for (int c = 0; c < b.cols(); ++c)
                if (b.get(r, c)) out.set(r, a.cols() + c, true);
        }
        return out;
    }

private:
    uint64_t& word(int r, int w) { return data_[size_t(r) * words_ + w]; }
    const uint64_t& word(int r, int w) const { return data_[size_t(r) * words_ + w]; }

    int rows_ = 0, cols_ = 0, words_ = 0;
    std::vector<uint64_t> data_;
};

// ---------------------------------------------------------------- SolverF2

// Reduced row echelon form of a fixed matrix A with the row transform
// recorded, so T·A = R holds throughout.  solve() answers A·x = b with free
// coordinates pinned to zero; kernel() returns the standard rref basis.
class SolverF2 {
public:
    explicit SolverF2(const MatrixF2& a)
        : r_(a), t_(MatrixF2::identity(a.rows())) {
        int row = 0;
        for (int c = 0; c < r_.cols() && row < r_.rows(); ++c) {
            int p = -1;
            for (int i = row; i < r_.rows(); ++i)
                if (r_.get(i, c)) { p = i; break; }
            if (p < 0) continue;
            r_.swap_rows(p, row);
            t_.swap_rows(p, row);
            for (int i = 0; i < r_.rows(); ++i)
                if (i != row && r_.get(i, c)) {
                    r_.row_xor(i, row);
                    t_.row_xor(i, row);
                }
            pivots_.push_back(c);
            ++row;
        }
    }

    int rank() const { return int(pivots_.size()); }
    const std::vector<int>& pivot_columns() const { return pivots_; }

    // T·A = R; for square full-rank A this makes rref() the identity and
    // transform() the inverse of A.
    const MatrixF2& rref() const { return r_; }
    const MatrixF2& transform() const { return t_; }

    std::optional<VecF2> solve(const VecF2& b) const {
        VecF2 tb = t_ * b;
        for (int i = rank(); i < r_.rows(); ++i)
            if (tb.get(i)) return std::nullopt;
        VecF2 x(r_.cols());
        for (int i = 0; i < rank(); ++i)
            if (tb.get(i)) x.set(pivots_[i], true);
        return x;
    }

    bool in_image(const VecF2& b) const { return solve(b).has_value(); }

    // Columns form a basis of ker A: one vector per free column, with a 1
    // in the free slot and the rref column copied into the pivot slots.
    MatrixF2 kernel() const {
        int n = r_.cols();
        std::vector<bool> is_pivot(n, false);
        for (int c : pivots_) is_pivot[c] = true;
        std::vector<int> free_cols;
        for (int c = 0; c < n; ++c)
            if (!is_pivot[c]) free_cols.push_back(c);
        MatrixF2 k(n, int(free_cols.size()));
        for (int j = 0; j < int(free_cols.size()); ++j) {
            int f = free_cols[j];
            k.set(f, j, true);
            for (int i = 0; i < rank(); ++i)
                if (r_.get(i, f)) k.set(pivots_[i], j, true);
        }
        return k;
    }

private:
    MatrixF2 r_, t_;
    std::vector<int> pivots_;
};

inline int rank(const MatrixF2& a) { return SolverF2(a).rank(); }
inline MatrixF2 kernel_basis(const MatrixF2& a) { return SolverF2(a).kernel(); }

// Inverse of a square invertible matrix over F2.
inline MatrixF2 inverse(const MatrixF2& a) {
    if (a.rows() != a.cols())
        throw CheckFailed("inverse: matrix is not square");
    SolverF2 s(a);
    if (s.rank() != a.rows())
        throw CheckFailed("inverse: matrix is singular");
    return s.transform();
}
inline MatrixF2 image_basis(const MatrixF2& a) {
    return a.select_columns(SolverF2(a).pivot_columns());
}

// ----------------------------------------------------------------- MatrixZ

// Sparse row-major integer matrix; stored entries are always nonzero.
class MatrixZ {
public:
    MatrixZ() = default;
    MatrixZ(int rows, int cols) : rows_(rows), cols_(cols), row_(rows) {}

    static MatrixZ identity(int n) {
        MatrixZ m(n, n);
        for (int i = 0; i < n; ++i) m.set(i, i, 1);
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    bigint get(int r, int c) const {
        auto it = row_[r].find(c);
        return it == row_[r].end() ? bigint(0) : it->second;
    }
    void set(int r, int c, bigint v) {
        if (v == 0) row_[r].erase(c);
        else row_[r][c] = std::move(v);
    }
    void add(int r, int c, const bigint& v) {
        if (v == 0) return;
        auto [it, fresh] = row_[r].try_emplace(c, v);
        if (!fresh) {
            it->second += v;
            if (it->second == 0) row_[r].erase(it);
        }
    }

    const std::map<int, bigint>& row(int r) const { return row_[r]; }

    bool operator==(const MatrixZ&) const = default;

    bool is_zero() const {
        for (auto& r : row_)
            if (!r.empty()) return false;
        return true;
    }

    MatrixZ operator*(const MatrixZ& b) const {
        MatrixZ c(rows_, b.cols_);
        for (int i = 0; i < rows_; ++i)
            for (auto& [k, v] : row_[i])
                for (auto& [j, w] : b.row_[k]) c.add(i, j, v * w);
        return c;
    }

    std::vector<bigint> operator*(const std::vector<bigint>& v) const {
        std::vector<bigint> out(rows_, 0);
        for (int i = 0; i < rows_; ++i)
            for (auto& [k, a] : row_[i]) out[i] += a * v[size_t(k)];
        return out;
    }

    MatrixZ operator+(const MatrixZ& b) const {
        MatrixZ c = *this;
        for (int i = 0; i < rows_; ++i)
            for (auto& [j, v] : b.row_[i]) c.add(i, j, v);
        return c;
    }
    MatrixZ operator-() const {
        MatrixZ c = *this;
        for (auto& r : c.row_)
            for (auto& [j, v] : r) v = -v;
        return c;
    }

    MatrixF2 mod2() const {
        MatrixF2 m(rows_, cols_);
        for (int i = 0; i < rows_; ++i)
            for (auto& [j, v] : row_[i])
                if (v % 2 != 0) m.set(i, j, true);
        return m;
    }

    void swap_rows(int r, int s) {
        if (r != s) std::swap(row_[r], row_[s]);
    }
    void swap_cols(int c, int d) {
        if (c == d) return;
        for (auto& r : row_) {
            auto ic = r.find(c), id = r.find(d);
            bigint vc = ic == r.end() ? bigint(0) : ic->second;
            bigint vd = id == r.end() ? bigint(0) : id->second;
            if (ic != r.end()) r.erase(ic);
            if ((id = r.find(d)) != r.end()) r.erase(id);
            if (vd != 0) r[c] = vd;
            if (vc != 0) r[d] = vc;
        }
    }
    // row dst += q · row src
    void add_row_multiple(int dst, int src, const bigint& q) {
        if (q == 0) return;
        std::vector<std::pair<int, bigint>> extras(row_[src].begin(), row_[src].end());
        for (auto& [j, v] : extras) add(dst, j, q * v);
    }
    // col dst += q · col src
    void add_col_multiple(int dst, int src, const bigint& q) {
        if (q == 0) return;
        for (auto& r : row_) {
            auto it = r.find(src);
            if (it == r.end()) continue;
            bigint delta = q * it->second;
            auto [jt, fresh] = r.try_emplace(dst, delta);
            if (!fresh) {
                jt->second += delta;
                if (jt->second == 0) r.erase(jt);
            }
        }
    }
    void negate_row(int r) {
        for (auto& [j, v] : row_[r]) v = -v;
    }
    void negate_col(int c) {
        for (auto& r : row_) {
            auto it = r.find(c);
            if (it != r.end()) it->second = -it->second;
        }
    }

private:
    int rows_ = 0, cols_ = 0;
    std::vector<std::map<int, bigint>> row_;
};

// ---------------------------------------------------------------- SmithForm

// D = L·A·R with L, R unimodular and D diagonal, d₁ | d₂ | ….  R⁻¹ is
// tracked alongside because kernel/relation computations need it.
struct SmithForm {
    MatrixZ d, l, r, r_inv;
    std::vector<bigint> factors;  // the nonzero diagonal entries, in order
    int rank() const { return int(factors.size()); }
};

inline SmithForm smith_normal_form(const MatrixZ& a) {
    SmithForm s;
    s.d = a;
    s.l = MatrixZ::identity(a.rows());
    s.r = MatrixZ::identity(a.cols());
    s.r_inv = MatrixZ::identity(a.cols());
    MatrixZ& d = s.d;

    auto row_op = [&](int dst, int src, const bigint& q) {
        d.add_row_multiple(dst, src, q);
        s.l.add_row_multiple(dst, src, q);
    };
    auto col_op = [&](int dst, int src, const bigint& q) {
        d.add_col_multiple(dst, src, q);
        s.r.add_col_multiple(dst, src, q);
        s.r_inv.add_row_multiple(src, dst, -q);  // inverse elementary op
    };
    auto swap_rows = [&](int i, int j) {
        d.swap_rows(i, j);
        s.l.swap_rows(i, j);
    };
    auto swap_cols = [&](int i, int j) {
        d.swap_cols(i, j);
        s.r.swap_cols(i, j);
        s.r_inv.swap_rows(i, j);
    };

    int nmin = std::min(a.rows(), a.cols());
    for (int t = 0; t < nmin; ++t) {
        for (;;) {
            // Smallest nonzero |entry| of the trailing submatrix to (t,t).
            int pr = -1, pc = -1;
            bigint best = 0;
            for (int r = t; r < d.rows(); ++r)
                for (auto& [c, v] : d.row(r)) {
                    if (c < t) continue;
                    bigint av = abs(v);
                    if (pr < 0 || av < best) { pr = r; pc = c; best = av; }
                }
            if (pr < 0) { t = nmin; break; }  // trailing submatrix is zero
            swap_rows(t, pr);
            swap_cols(t, pc);
            if (d.get(t, t) < 0) {
                d.negate_row(t);
                s.l.negate_row(t);
            }
            bigint piv = d.get(t, t);

            // Clear column t and row t with quotient steps; remainders make
            // the next pivot strictly smaller, so this loop terminates.
            bool clean = true;
            std::vector<std::pair<int, bigint>> col_entries;
            for (int r = t + 1; r < d.rows(); ++r) {
                bigint v = d.get(r, t);
                if (v != 0) col_entries.emplace_back(r, v);
            }
            for (auto& [r, v] : col_entries) {
                row_op(r, t, -(v / piv));
                if (d.get(r, t) != 0) clean = false;
            }
            std::vector<std::pair<int, bigint>> row_entries;
            for (auto& [c, v] : d.row(t))
                if (c > t) row_entries.emplace_back(c, v);
            for (auto& [c, v] : row_entries) {
                col_op(c, t, -(v / piv));
                if (d.get(t, c) != 0) clean = false;
            }
            if (!clean) continue;

            // Divisibility: piv must divide the whole trailing submatrix.
            bool fixed_up = false;
            for (int r = t + 1; r < d.rows() && !fixed_up; ++r)
                for (auto& [c, v] : d.row(r)) {
                    if (c <= t) continue;
                    if (v % piv != 0) {
                        row_op(t, r, 1);
                        fixed_up = true;
                        break;
                    }
                }
            if (!fixed_up) {
                s.factors.push_back(piv);
                break;
            }
        }
        if (t >= nmin) break;
    }
    return s;
}

// Determinant by fraction-free (Bareiss) elimination; meant for the small
// change-of-basis matrices in tests.
inline bigint det(const MatrixZ& a) {
    if (a.rows() != a.cols()) throw LengthMismatch("det: matrix not square");
    int n = a.rows();
    if (n == 0) return 1;
    std::vector<std::vector<bigint>> m(n, std::vector<bigint>(n, 0));
    for (int i = 0; i < n; ++i)
        for (auto& [j, v] : a.row(i)) m[i][size_t(j)] = v;
    bigint prev = 1;
    int sign = 1;
    for (int k = 0; k < n - 1; ++k) {
        if (m[k][k] == 0) {
            int p = -1;
            for (int i = k + 1; i < n; ++i)
                if (m[i][k] != 0) { p = i; break; }
            if (p < 0) return 0;
            std::swap(m[k], m[p]);
            sign = -sign;
        }
        for (int i = k + 1; i < n; ++i)
            for (int j = k + 1; j < n; ++j)
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
        prev = m[k][k];
    }
    return sign > 0 ? m[n - 1][n - 1] : -m[n - 1][n - 1];
}

}  // namespace kh

#include "opal/sparse.hpp"

#include <stdexcept>

namespace opal {

SparseMatrix::SparseMatrix(int rows, int cols) : rows_(rows), cols_(cols), row_(rows) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("negative matrix dimension");
}

SparseMatrix SparseMatrix::identity(int n) {
    SparseMatrix m(n, n);
    for (int i = 0; i < n; ++i) m.set(i, i, Rat(1));
    return m;
}

Rat SparseMatrix::get(int r, int c) const {
    return row_[r].at(c);
}

void SparseMatrix::set(int r, int c, const Rat &v) {
    row_[r].set(c, v);
}

void SparseMatrix::add_to(int r, int c, const Rat &v) {
    row_[r].add(c, v);
}

void SparseMatrix::set_col(int c, const Vec &v) {
    for (int r = 0; r < rows_; ++r) row_[r].set(c, Rat(0));
    for (const auto &[r, x] : v.entries()) row_[r].set(c, x);
}

Vec SparseMatrix::col(int c) const {
    Vec v;
    for (int r = 0; r < rows_; ++r) v.set(r, row_[r].at(c));
    return v;
}

bool SparseMatrix::is_zero() const {
    for (const auto &r : row_)
        if (!r.is_zero()) return false;
    return true;
}

int SparseMatrix::nnz() const {
    int n = 0;
    for (const auto &r : row_) n += r.support_size();
    return n;
}

Vec SparseMatrix::apply(const Vec &x) const {
    Vec y;
    for (int r = 0; r < rows_; ++r) {
        Rat acc(0);
        // dot of sparse row with sparse x: iterate the smaller support
        const auto &re = row_[r].entries();
        const auto &xe = x.entries();
        if (re.size() <= xe.size()) {
            for (const auto &[c, v] : re) acc += v * x.at(c);
        } else {
            for (const auto &[c, v] : xe) acc += row_[r].at(c) * v;
        }
        y.set(r, acc);
    }
    return y;
}

SparseMatrix SparseMatrix::mul(const SparseMatrix &o) const {
    if (cols_ != o.rows_) throw std::invalid_argument("matrix product shape mismatch");
    SparseMatrix out(rows_, o.cols_);
    for (int r = 0; r < rows_; ++r) {
        for (const auto &[k, v] : row_[r].entries()) out.row_[r].axpy(v, o.row_[k]);
    }
    return out;
}

SparseMatrix SparseMatrix::add(const SparseMatrix &o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw std::invalid_argument("matrix sum shape mismatch");
    SparseMatrix out = *this;
    for (int r = 0; r < rows_; ++r) out.row_[r] += o.row_[r];
    return out;
}

SparseMatrix SparseMatrix::sub(const SparseMatrix &o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw std::invalid_argument("matrix diff shape mismatch");
    SparseMatrix out = *this;
    for (int r = 0; r < rows_; ++r) out.row_[r] -= o.row_[r];
    return out;
}

SparseMatrix SparseMatrix::scaled(const Rat &a) const {
    SparseMatrix out = *this;
    for (int r = 0; r < rows_; ++r) out.row_[r].scale(a);
    return out;
}

SparseMatrix SparseMatrix::transpose() const {
    SparseMatrix out(cols_, rows_);
    for (int r = 0; r < rows_; ++r)
        for (const auto &[c, v] : row_[r].entries()) out.row_[c].set(r, v);
    return out;
}

SparseMatrix SparseMatrix::hstack(const SparseMatrix &o) const {
    if (rows_ != o.rows_) throw std::invalid_argument("hstack shape mismatch");
    SparseMatrix out(rows_, cols_ + o.cols_);
    for (int r = 0; r < rows_; ++r) {
        out.row_[r] = row_[r];
        for (const auto &[c, v] : o.row_[r].entries()) out.row_[r].set(cols_ + c, v);
    }
    return out;
}

bool operator==(const SparseMatrix &a, const SparseMatrix &b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_) return false;
    for (int r = 0; r < a.rows_; ++r)
        if (!(a.row_[r] == b.row_[r])) return false;
    return true;
}

SparseMatrix::Rref SparseMatrix::rref() const {
    Rref out;
    out.r = *this;
    std::vector<bool> used(rows_, false);
    for (int c = 0; c < cols_; ++c) {
        int piv = -1;
        for (int r = 0; r < rows_; ++r) {
            if (!used[r] && !out.r.row_[r].at(c).is_zero()) {
                piv = r;
                break;
            }
        }
        if (piv < 0) continue;
        used[piv] = true;
        Rat inv = out.r.row_[piv].at(c).inverse();
        out.r.row_[piv].scale(inv);
        for (int r = 0; r < rows_; ++r) {
            if (r == piv) continue;
            Rat f = out.r.row_[r].at(c);
            if (!f.is_zero()) out.r.row_[r].axpy(-f, out.r.row_[piv]);
        }
        out.pivot_cols.push_back(c);
        out.pivot_row_in_r.push_back(piv);
    }
    return out;
}

int SparseMatrix::rank() const { return rref().rank(); }

std::optional<Vec> SparseMatrix::solve(const Vec &b) const {
    // Eliminate on [A | b] jointly. Track b through the same row ops.
    SparseMatrix a = *this;
    Vec rhs = b;
    std::vector<bool> used(rows_, false);
    std::vector<std::pair<int, int>> pivots;  // (col, row)
    for (int c = 0; c < cols_; ++c) {
        int piv = -1;
        for (int r = 0; r < rows_; ++r) {
            if (!used[r] && !a.row_[r].at(c).is_zero()) {
                piv = r;
                break;
            }
        }
        if (piv < 0) continue;
        used[piv] = true;
        Rat inv = a.row_[piv].at(c).inverse();
        a.row_[piv].scale(inv);
        rhs.set(piv, rhs.at(piv) * inv);
        for (int r = 0; r < rows_; ++r) {
            if (r == piv) continue;
            Rat f = a.row_[r].at(c);
            if (!f.is_zero()) {
                a.row_[r].axpy(-f, a.row_[piv]);
                rhs.add(r, -f * rhs.at(piv));
            }
        }
        pivots.emplace_back(c, piv);
    }
    // Inconsistent iff some unused row has zero A-part but nonzero rhs.
    for (int r = 0; r < rows_; ++r) {
        if (!used[r] && !rhs.at(r).is_zero()) return std::nullopt;
    }
    Vec x;
    for (const auto &[c, r] : pivots) x.set(c, rhs.at(r));
    return x;
}

std::vector<Vec> SparseMatrix::kernel_basis() const {
    Rref e = rref();
    std::vector<bool> is_pivot(cols_, false);
    std::map<int, int> pivot_row;  // pivot col -> row of e.r
    for (size_t k = 0; k < e.pivot_cols.size(); ++k) {
        is_pivot[e.pivot_cols[k]] = true;
        pivot_row[e.pivot_cols[k]] = e.pivot_row_in_r[k];
    }
    std::vector<Vec> basis;
    for (int f = 0; f < cols_; ++f) {
        if (is_pivot[f]) continue;
        Vec v;
        v.set(f, Rat(1));
        for (const auto &[pc, pr] : pivot_row) v.set(pc, -e.r.row_[pr].at(f));
        basis.push_back(v);
    }
    return basis;
}

std::vector<Vec> SparseMatrix::image_basis() const {
    Rref e = rref();
    std::vector<Vec> basis;
    for (int c : e.pivot_cols) basis.push_back(col(c));
    return basis;
}

Vec RowSpace::reduce(const Vec &v) const {
    // Stored rows are fully reduced: row with lead l has no entry at any other
    // stored lead, and none below l. One ascending pass over stored leads is
    // therefore complete (eliminating lead l only introduces indices > l that
    // are not stored leads themselves).
    Vec w = v;
    for (const auto &[lead, ri] : lead_to_row_) {
        Rat c = w.at(lead);
        if (!c.is_zero()) w.axpy(-c, rows_[ri]);
    }
    return w;
}

bool RowSpace::insert(const Vec &v) {
    Vec w = reduce(v);
    auto l = w.leading();
    if (!l) return false;
    w.scale(w.at(*l).inverse());
    // Back-substitute into existing rows to keep the space fully reduced.
    for (auto &r : rows_) {
        Rat c = r.at(*l);
        if (!c.is_zero()) r.axpy(-c, w);
    }
    rows_.push_back(w);
    lead_to_row_[*l] = (int)rows_.size() - 1;
    return true;
}

}  // namespace opal

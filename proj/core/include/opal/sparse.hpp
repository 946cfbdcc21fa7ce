#pragma once

#include <map>
#include <optional>
#include <vector>

#include "opal/rational.hpp"

namespace opal {

/* Sparse vector over Q, indexed by non-negative ints. Zero entries are absent. */
class Vec {
  public:
    Vec() = default;
    static Vec unit(int i) {
        Vec v;
        v.c_[i] = Rat(1);
        return v;
    }

    bool is_zero() const { return c_.empty(); }
    int support_size() const { return (int)c_.size(); }
    Rat at(int i) const {
        auto it = c_.find(i);
        return it == c_.end() ? Rat(0) : it->second;
    }
    void set(int i, const Rat &v) {
        if (v.is_zero())
            c_.erase(i);
        else
            c_[i] = v;
    }
    void add(int i, const Rat &v) {
        if (v.is_zero()) return;
        auto it = c_.find(i);
        if (it == c_.end()) {
            c_[i] = v;
        } else {
            it->second += v;
            if (it->second.is_zero()) c_.erase(it);
        }
    }
    Vec &axpy(const Rat &a, const Vec &x) {  // this += a*x
        if (a.is_zero()) return *this;
        for (const auto &[i, v] : x.c_) add(i, a * v);
        return *this;
    }
    Vec &operator+=(const Vec &x) { return axpy(Rat(1), x); }
    Vec &operator-=(const Vec &x) { return axpy(Rat(-1), x); }
    Vec &scale(const Rat &a) {
        if (a.is_zero()) {
            c_.clear();
            return *this;
        }
        for (auto &[i, v] : c_) v *= a;
        return *this;
    }
    friend Vec operator*(const Rat &a, Vec x) { return x.scale(a); }
    friend Vec operator+(Vec a, const Vec &b) { return a += b; }
    friend Vec operator-(Vec a, const Vec &b) { return a -= b; }
    friend bool operator==(const Vec &a, const Vec &b) { return a.c_ == b.c_; }

    // Lowest index with nonzero entry, or nullopt.
    std::optional<int> leading() const {
        if (c_.empty()) return std::nullopt;
        return c_.begin()->first;
    }

    const std::map<int, Rat> &entries() const { return c_; }

  private:
    std::map<int, Rat> c_;
};

/* Row-major sparse matrix over Q. */
class SparseMatrix {
  public:
    SparseMatrix() : rows_(0), cols_(0) {}
    SparseMatrix(int rows, int cols);
    static SparseMatrix identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    Rat get(int r, int c) const;
    void set(int r, int c, const Rat &v);
    void add_to(int r, int c, const Rat &v);
    void set_col(int c, const Vec &v);
    Vec col(int c) const;
    const Vec &row(int r) const { return row_[r]; }

    bool is_zero() const;
    int nnz() const;

    Vec apply(const Vec &x) const;  // this * x
    SparseMatrix mul(const SparseMatrix &o) const;
    SparseMatrix add(const SparseMatrix &o) const;
    SparseMatrix sub(const SparseMatrix &o) const;
    SparseMatrix scaled(const Rat &a) const;
    SparseMatrix transpose() const;
    SparseMatrix hstack(const SparseMatrix &o) const;  // [this | o]

    friend bool operator==(const SparseMatrix &a, const SparseMatrix &b);

    /* Reduced row echelon form. Pivot rule: sweep columns left to right; among
       not-yet-used rows with a nonzero entry in the current column pick the one
       with the lowest row index. Fully deterministic. */
    struct Rref;
    Rref rref() const;

    int rank() const;

    // Solves this*x = b. Returns the representative with zeros in all
    // non-pivot coordinates, or nullopt when inconsistent.
    std::optional<Vec> solve(const Vec &b) const;

    // Kernel basis, one vector per free column, ascending free-column order.
    std::vector<Vec> kernel_basis() const;

    // Basis of the column span: the columns of this matrix at the rref pivot columns.
    std::vector<Vec> image_basis() const;

  private:
    int rows_, cols_;
    std::vector<Vec> row_;
};

struct SparseMatrix::Rref {
    SparseMatrix r;
    std::vector<int> pivot_cols;      // ascending
    std::vector<int> pivot_row_in_r;  // row of r holding pivot k
    int rank() const { return (int)pivot_cols.size(); }
};

/* Incremental row space in reduced echelon form; used for quotients and spans. */
class RowSpace {
  public:
    // Reduces v against the current space (eliminating leading entries).
    Vec reduce(const Vec &v) const;
    // Reduce, and if nonzero insert (normalized to leading coefficient 1).
    // Returns true when v was independent of the current space.
    bool insert(const Vec &v);
    bool contains(const Vec &v) const { return reduce(v).is_zero(); }
    int dim() const { return (int)rows_.size(); }
    const std::vector<Vec> &rows() const { return rows_; }

  private:
    std::vector<Vec> rows_;          // reduced, normalized, sorted by leading index
    std::map<int, int> lead_to_row_;
};

}  // namespace opal

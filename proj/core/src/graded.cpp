#include "opal/graded.hpp"

#include <stdexcept>
#include <string>

namespace opal {

void ChainComplex::set_dim(int n, int dim) {
    if (dim < 0) throw std::invalid_argument("negative dimension");
    if (dim == 0)
        dims_.erase(n);
    else
        dims_[n] = dim;
}

int ChainComplex::dim(int n) const {
    auto it = dims_.find(n);
    return it == dims_.end() ? 0 : it->second;
}

void ChainComplex::set_d(int n, SparseMatrix m) {
    if (m.rows() != dim(n - 1) || m.cols() != dim(n))
        throw std::invalid_argument("differential shape mismatch at degree " + std::to_string(n));
    if (m.is_zero())
        diff_.erase(n);
    else
        diff_[n] = std::move(m);
}

SparseMatrix ChainComplex::d(int n) const {
    auto it = diff_.find(n);
    if (it != diff_.end()) return it->second;
    return SparseMatrix(dim(n - 1), dim(n));
}

void ChainComplex::validate() const {
    for (const auto &[n, m] : diff_) {
        if (m.rows() != dim(n - 1) || m.cols() != dim(n))
            throw std::runtime_error("differential shape mismatch at degree " + std::to_string(n));
        if (!d(n - 1).mul(m).is_zero())
            throw std::runtime_error("d*d != 0 at degree " + std::to_string(n));
    }
}

ChainComplex ChainComplex::sphere(int k) {
    ChainComplex c;
    c.set_dim(k, 1);
    return c;
}

ChainComplex ChainComplex::disk(int k) {
    ChainComplex c;
    c.set_dim(k, 1);
    c.set_dim(k - 1, 1);
    SparseMatrix d(1, 1);
    d.set(0, 0, Rat(1));
    c.set_d(k, d);
    return c;
}

std::map<int, int> ChainComplex::homology_dims() const {
    std::map<int, int> h;
    for (const auto &[n, m] : dims_) {
        int cycles = dim(n) - d(n).rank();
        int boundaries = d(n + 1).rank();
        int hd = cycles - boundaries;
        if (hd != 0) h[n] = hd;
    }
    return h;
}

SparseMatrix ChainMap::at_or_zero(int n, int rows, int cols) const {
    auto it = comp.find(n);
    if (it != comp.end()) return it->second;
    return SparseMatrix(rows, cols);
}

void validate_chain_map(const ChainComplex &v, const ChainComplex &w, const ChainMap &f) {
    for (const auto &[n, m] : f.comp)
        if (m.rows() != w.dim(n) || m.cols() != v.dim(n))
            throw std::runtime_error("chain map shape mismatch in degree " + std::to_string(n));
    auto at = [&](int n) { return f.at_or_zero(n, w.dim(n), v.dim(n)); };
    std::map<int, int> degs;
    for (const auto &[n, d] : v.dims()) degs[n] = 1;
    for (const auto &[n, d] : w.dims()) degs[n] = 1;
    for (const auto &[n, unused] : degs)
        if (!(w.d(n).mul(at(n)) == at(n - 1).mul(v.d(n))))
            throw std::runtime_error("chain map does not commute with d in degree " + std::to_string(n));
}

Contraction homology_splitting(const ChainComplex &c) {
    Contraction out;
    for (const auto &[n, m] : c.dims()) {
        int dn = c.dim(n);
        SparseMatrix d_here = c.d(n);        // C_n -> C_{n-1}
        SparseMatrix d_above = c.d(n + 1);   // C_{n+1} -> C_n

        // Boundaries: pivot columns of d_{n+1}, remembering the pivot column
        // index (its standard vector upstairs is the homotopy preimage).
        auto e_above = d_above.rref();
        std::vector<Vec> bdry;
        std::vector<int> bdry_src;
        for (int pc : e_above.pivot_cols) {
            bdry.push_back(d_above.col(pc));
            bdry_src.push_back(pc);
        }

        // Cycles: kernel of d_n. When d_n = 0 that is all of C_n.
        std::vector<Vec> cycles = d_here.kernel_basis();

        // Representatives: cycle vectors surviving reduction against the
        // boundary span, taken in kernel-basis order, normalized.
        RowSpace rs;
        for (const auto &b : bdry) rs.insert(b);
        std::vector<Vec> reps;
        for (const auto &z : cycles) {
            Vec w = rs.reduce(z);
            auto l = w.leading();
            if (!l) continue;
            w.scale(w.at(*l).inverse());
            reps.push_back(w);
            rs.insert(w);
        }

        // Complement of the cycles: standard vectors at pivot columns of d_n.
        auto e_here = d_here.rref();
        std::vector<int> comp = e_here.pivot_cols;

        int nb = (int)bdry.size(), nh = (int)reps.size(), nc = (int)comp.size();
        if (nb + nh + nc != dn)
            throw std::runtime_error("splitting basis count mismatch at degree " + std::to_string(n));

        if (nh > 0) {
            out.h_dims[n] = nh;
            SparseMatrix incl(dn, nh);
            for (int j = 0; j < nh; ++j) incl.set_col(j, reps[j]);
            out.incl[n] = std::move(incl);
        }

        // Change of basis M = [bdry | reps | comp], invert via rref([M | I]).
        SparseMatrix mm(dn, dn);
        for (int j = 0; j < nb; ++j) mm.set_col(j, bdry[j]);
        for (int j = 0; j < nh; ++j) mm.set_col(nb + j, reps[j]);
        for (int j = 0; j < nc; ++j) mm.set_col(nb + nh + j, Vec::unit(comp[j]));
        auto aug = mm.hstack(SparseMatrix::identity(dn)).rref();
        // M is invertible iff every left-block column is a pivot column. The
        // rref leaves pivot rows in place, so the true inverse row for pivot
        // column pc is the right block of the row owning that pivot.
        SparseMatrix minv(dn, dn);
        int left_pivots = 0;
        for (size_t k = 0; k < aug.pivot_cols.size(); ++k) {
            int pc = aug.pivot_cols[k];
            if (pc >= dn) break;
            ++left_pivots;
            for (const auto &[cc, v] : aug.r.row(aug.pivot_row_in_r[k]).entries())
                if (cc >= dn) minv.set(pc, cc - dn, v);
        }
        if (left_pivots != dn)
            throw std::runtime_error("splitting basis not invertible at degree " + std::to_string(n));

        if (nh > 0) {
            SparseMatrix proj(nh, dn);
            for (int j = 0; j < nh; ++j)
                for (const auto &[cc, v] : minv.row(nb + j).entries()) proj.set(j, cc, v);
            out.proj[n] = std::move(proj);
        }

        if (nb > 0) {
            // h_n = (columns e_{bdry_src[j]} upstairs) * (boundary rows of M^{-1}).
            SparseMatrix hmat(c.dim(n + 1), dn);
            for (int j = 0; j < nb; ++j)
                for (const auto &[cc, v] : minv.row(j).entries())
                    hmat.add_to(bdry_src[j], cc, v);
            out.hom[n] = std::move(hmat);
        }
    }
    return out;
}

static SparseMatrix get_or_zero(const std::map<int, SparseMatrix> &m, int n, int rows, int cols) {
    auto it = m.find(n);
    if (it != m.end()) return it->second;
    return SparseMatrix(rows, cols);
}

void check_contraction(const ChainComplex &c, const Contraction &k) {
    auto hdim = [&](int n) {
        auto it = k.h_dims.find(n);
        return it == k.h_dims.end() ? 0 : it->second;
    };
    for (const auto &[n, dn] : c.dims()) {
        int hn = hdim(n);
        SparseMatrix i_n = get_or_zero(k.incl, n, dn, hn);
        SparseMatrix p_n = get_or_zero(k.proj, n, hn, dn);
        SparseMatrix h_n = get_or_zero(k.hom, n, c.dim(n + 1), dn);
        SparseMatrix h_below = get_or_zero(k.hom, n - 1, dn, c.dim(n - 1));
        SparseMatrix d_n = c.d(n);
        SparseMatrix d_above = c.d(n + 1);

        auto fail = [&](const std::string &what) {
            throw std::runtime_error("contraction check failed at degree " + std::to_string(n) + ": " + what);
        };
        if (!(p_n.mul(i_n) == SparseMatrix::identity(hn))) fail("p i != id");
        if (!d_n.mul(i_n).is_zero()) fail("d i != 0");
        if (!p_n.mul(d_above).is_zero()) fail("p d != 0");
        SparseMatrix lhs = SparseMatrix::identity(dn).sub(i_n.mul(p_n));
        SparseMatrix rhs = d_above.mul(h_n).add(h_below.mul(d_n));
        if (!(lhs == rhs)) fail("id - i p != d h + h d");
        if (!h_n.mul(i_n).is_zero()) fail("h i != 0");
        if (!get_or_zero(k.proj, n + 1, hdim(n + 1), c.dim(n + 1)).mul(h_n).is_zero()) fail("p h != 0");
        if (!get_or_zero(k.hom, n + 1, c.dim(n + 2), c.dim(n + 1)).mul(h_n).is_zero()) fail("h h != 0");
    }
}

}  // namespace opal

#pragma once

#include <map>

#include "opal/sparse.hpp"

namespace opal {

/* Chain complex of finite-dimensional Q-vector spaces, homological grading:
   d_n : C_n -> C_{n-1}, d^2 = 0. Absent degrees are zero. */
class ChainComplex {
  public:
    void set_dim(int n, int dim);
    int dim(int n) const;
    const std::map<int, int> &dims() const { return dims_; }

    void set_d(int n, SparseMatrix m);  // d_n : C_n -> C_{n-1}
    SparseMatrix d(int n) const;        // zero matrix of the right shape if unset

    // Throws std::runtime_error on shape mismatch or d*d != 0.
    void validate() const;

    static ChainComplex sphere(int k);  // one generator in degree k, d = 0
    static ChainComplex disk(int k);    // generators in degrees k, k-1, d = id

    std::map<int, int> homology_dims() const;

  private:
    std::map<int, int> dims_;
    std::map<int, SparseMatrix> diff_;
};

/* Deformation retract of a complex onto its homology (zero differential):
     p_n i_n = Id,     Id - i_n p_n = d h + h d,
   with the side conditions h i = 0, p h = 0, h h = 0. All maps chain maps
   (p d = 0, d i = 0 since H carries zero differential). */
struct Contraction {
    std::map<int, int> h_dims;            // dim H_n
    std::map<int, SparseMatrix> incl;     // i_n : H_n -> C_n
    std::map<int, SparseMatrix> proj;     // p_n : C_n -> H_n
    std::map<int, SparseMatrix> hom;      // h_n : C_n -> C_{n+1}
};

/* Degree-0 chain map between complexes; absent degrees are zero. */
struct ChainMap {
    std::map<int, SparseMatrix> comp;  // n -> dim W_n x dim V_n

    SparseMatrix at_or_zero(int n, int rows, int cols) const;
};

/* Shapes and commuting squares d_W f = f d_V; throws std::runtime_error
   with a description on failure. */
void validate_chain_map(const ChainComplex &v, const ChainComplex &w, const ChainMap &f);

/* Deterministic construction: boundaries are the pivot columns of d_{n+1};
   cycle representatives are kernel-basis vectors reduced against the growing
   boundary row space; the complement of the cycles is spanned by the standard
   vectors at the pivot columns of d_n, and the homotopy sends the j-th
   boundary basis vector to the standard vector at its pivot column. */
Contraction homology_splitting(const ChainComplex &c);

/* Checks every identity in the Contraction docstring exactly; throws with a
   description on the first failure. */
void check_contraction(const ChainComplex &c, const Contraction &k);

}  // namespace opal

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "opal/graded.hpp"
#include "opal/perm.hpp"
#include "opal/sparse.hpp"

namespace opal {

/* Finiteness contract shared by every construction: arity cap, weight cap
   (weights count tree vertices), homological degree window. */
struct Truncation {
    int max_arity = 1;
    int max_weight = 1;
    int degree_min = 0;
    int degree_max = 0;

    void validate() const;
    bool degree_in(int d) const { return degree_min <= d && d <= degree_max; }
    bool keeps(int arity, int weight, int degree) const {
        return arity <= max_arity && weight <= max_weight && degree_in(degree);
    }
};

/* Arity-indexed graded vector spaces with symmetric-group actions.

   Each arity holds one flat basis (mixed degrees); the differential is a
   square degree(-1) matrix on it, and the S_n-action is stored on the
   adjacent transpositions s_0 .. s_{n-2} only, with general permutations
   composed on demand. Unset actions mean the trivial action. action(n, p)
   is the matrix of "relabel the inputs by p", a left action:
   action(p after q) = action(p) * action(q). The contravariant (right)
   action of p is action(p.inverse()). */
class SModule {
  public:
    struct Elt {
        std::string name;
        int degree = 0;
        int weight = 1;
    };
    struct Component {
        std::vector<Elt> basis;
        SparseMatrix d;                        // square; zero-sized means zero
        std::vector<SparseMatrix> gen_action;  // may be empty: trivial action
    };

    bool has(int arity) const { return comp_.count(arity) > 0; }
    const std::map<int, Component> &components() const { return comp_; }
    const Component &at(int arity) const;

    int add_element(int arity, std::string name, int degree, int weight = 1);
    int dim(int arity) const;
    int dim(int arity, int degree) const;
    int find(int arity, const std::string &name) const;  // -1 when absent
    const Elt &elt(int arity, int i) const { return at(arity).basis[i]; }

    void set_d(int arity, SparseMatrix m);
    SparseMatrix d(int arity) const;  // zero matrix when unset

    void set_gen_action(int arity, int i, SparseMatrix m);
    void set_sign_action(int arity);  // every adjacent transposition acts by -1
    SparseMatrix action(int arity, const Perm &p) const;

    /* Checks: square shapes; d lowers degree by exactly 1 and d*d = 0;
       action matrices are degree-0 and weight-0 and satisfy the involution,
       braid, and distant-commutation relations; d is equivariant. Pass
       false to skip the d*d = 0 requirement (curved coderivations). */
    void validate(bool d_squares_to_zero = true) const;

    ChainComplex chain(int arity) const;
    std::vector<int> degree_indices(int arity, int degree) const;

    static SModule unit();  // Q in arity 1, degree 0, weight 0

  private:
    std::map<int, Component> comp_;
};

/* Map of S-modules of a fixed homological degree. */
struct SModuleMap {
    int degree = 0;
    std::map<int, SparseMatrix> comp;  // arity -> matrix, target dim x source dim

    SparseMatrix at_or_zero(int arity, int rows, int cols) const;
};

/* Shape, degree homogeneity, and equivariance on adjacent transpositions;
   throws std::runtime_error with a description on failure. */
void validate_map(const SModule &src, const SModule &tgt, const SModuleMap &f);

/* Composite product V∘W within the truncation. Basis: (v-element of arity k,
   ordered partition X_1 ⊔ ... ⊔ X_k of {1..n} with possibly empty blocks,
   w-elements). Representatives sort blocks by minimal element with empty
   blocks last; when several empty blocks make the representative non-unique
   the block-permutation coinvariants are realized by the image basis of the
   stabilizer averaging projector. */
SModule compose_product(const SModule &v, const SModule &w, const Truncation &t);

/* The name of a composite basis element, e.g. "m(1,3:x)(2:y)"; blocks listed
   in representative order, leaf labels 1-based. */
std::string composite_name(const std::string &vname, const std::vector<std::vector<int>> &blocks,
                           const std::vector<std::string> &wnames);

/* Composite product that keeps its expression machinery: arbitrary tuples
   (v-element, representative blocks, w-elements) can be expressed in the
   basis of module(), with stabilizer projection where empty blocks repeat. */
class Composite {
  public:
    Composite(const SModule &v, const SModule &w, const Truncation &t);
    const SModule &module() const;
    /* coeff * (v basis element va at arity k over the given leaf blocks,
       w basis elements ws per block) as a vector in module()'s arity-n
       basis. Blocks must be in representative order (ascending minima,
       empty blocks last); n = total leaf count. Tuples outside the
       truncation give zero. */
    Vec express(int n, int k, const std::vector<std::vector<int>> &blocks, int va,
                const std::vector<int> &ws, const Rat &coeff = Rat(1)) const;

    /* One labelled tuple of a composite basis element: a v element of
       arity k over leaf blocks (representative order), with one w element
       per block. */
    struct Summand {
        int k = 0;
        std::vector<std::vector<int>> blocks;
        int va = 0;
        std::vector<int> ws;
        Rat coeff;
    };
    /* Decompose basis element basis_index of module() at arity n into
       labelled tuples; express(expand(x)) returns the x basis vector. */
    std::vector<Summand> expand(int n, int basis_index) const;

  private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

/* Identity S-module map on v. */
SModuleMap identity_map(const SModule &v);

/* Functorial f∘g : V∘W -> V2∘W2 for f : V -> V2, g : W -> W2 (g degree 0).
   Bases are the ones compose_product builds for the given arguments. */
SModuleMap compose_prod_map(const SModule &v, const SModule &w, const SModule &v2, const SModule &w2,
                            const SModuleMap &f, const SModuleMap &g, const Truncation &t);

/* f∘(g;h) = sum over slots j of f ⊗ (g^(j-1) ⊗ h ⊗ g^(rest)) with Koszul
   signs, a map V∘W -> V2∘W2; g must have degree 0. g = identity realizes
   the infinitesimal f∘'h. */
SModuleMap circ_map(const SModule &v, const SModule &w, const SModule &v2, const SModule &w2,
                    const SModuleMap &f, const SModuleMap &g, const SModuleMap &h, const Truncation &t);

/* Equivariant hom complex [V,W] within the truncation. */
struct HomBasisMap {
    int arity = 0;
    SparseMatrix mat;  // dim W(arity) x dim V(arity), degree-homogeneous
};
struct HomComplex {
    ChainComplex cx;
    std::map<int, std::vector<HomBasisMap>> basis;  // degree -> flat basis

    /* Assemble a degree-homogeneous element of [V,W] from coordinates. */
    SModuleMap assemble(int degree, const Vec &coords, const SModule &v, const SModule &w) const;
    /* Coordinates of an equivariant map in the degree-d basis; throws when
       the map is not in the span. */
    Vec coordinates(int degree, const SModuleMap &f) const;
};
HomComplex hom_complex(const SModule &v, const SModule &w, const Truncation &t);

}  // namespace opal

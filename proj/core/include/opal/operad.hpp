#pragma once

#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "opal/graded.hpp"
#include "opal/smodule.hpp"
#include "opal/treemod.hpp"

namespace opal {

/* Dg operad over Q within a truncation: an S-module with a unit element in
   arity 1 and stored partial compositions; the full structure map is
   derived from them. A partial composition table

       comp[(n,m,i)] : P(n) (x) P(m) -> P(n+m-1),   i in [0,n),

   is a matrix of shape dim(n+m-1) x dim(n)*dim(m) whose column a*dim(m)+b
   is the value on the basis pair (a,b). Missing keys are zero matrices,
   except that when the unit is a single basis element the unit laws fill
   the corresponding columns of missing tables. Values landing outside the
   truncation are quotiented away, which is exact for weight-monotone data;
   a degree window that is not closed under composition makes the quotient
   lossy, so keep windows wide enough for the composites of interest. */
class DgOperad {
  public:
    DgOperad(SModule underlying, Vec unit, std::map<std::tuple<int, int, int>, SparseMatrix> comp,
             Truncation t);

    const SModule &underlying() const { return und_; }
    const Truncation &truncation() const { return trunc_; }
    const Vec &unit() const { return unit_; }
    const std::map<std::tuple<int, int, int>, SparseMatrix> &tables() const { return comp_; }

    /* x o_i y for x of arity n, y of arity m, slot i in [0,n). */
    Vec compose(int n, const Vec &x, int i, int m, const Vec &y) const;

    /* Full structure map gamma(x; w_0..w_{k-1}) with interleaved leaf
       blocks: ws[j].first is the arity of ws[j].second, blocks[j] lists the
       leaves fed to slot j in the input order of that factor. Computed as
       the right-to-left iterated partial composition followed by the leaf
       relabelling action. */
    Vec gamma_blocks(int k, const Vec &x, const std::vector<std::vector<int>> &blocks,
                     const std::vector<std::pair<int, Vec>> &ws) const;

    /* The structure map as a map of S-modules from the composite product
       P∘P built on the same truncation. */
    SModuleMap gamma_map(const Composite &cc) const;

    /* Axiom check: unit degree and cycle condition, unit laws, the nested
       and disjoint partial-composition associativity identities on all
       basis triples whose every stage stays inside the truncation, the
       Leibniz rule on all stored composites, and equivariance of the full
       structure map against the composite product. Returns human-readable
       violations with witnesses; empty means the operad passes. */
    std::vector<std::string> axiom_violations() const;
    /* Throws std::runtime_error listing the violations, if any. */
    void validate() const;

  private:
    SModule und_;
    Vec unit_;
    std::map<std::tuple<int, int, int>, SparseMatrix> comp_;
    Truncation trunc_;
};

/* Explicit operad data: underlying S-module (with its differential and
   actions), unit vector in arity 1, and partial composition tables keyed
   by (n, m, i) as in DgOperad. */
struct OperadData {
    SModule underlying;
    Vec unit;
    std::map<std::tuple<int, int, int>, SparseMatrix> comp;
};

/* Builds the operad and runs the full axiom check; throws
   std::runtime_error listing every violated axiom with its witness
   composite. */
DgOperad tabulated_operad(const OperadData &data, const Truncation &t);

/* Operad freely generated by an S-module of generators within a
   truncation. Underlying module: the unital tree module on the generators;
   compositions graft trees, with the Koszul sign of the reordering of
   vertices into canonical order weighted by generator degrees. The
   differential is the derivation extending the degree -1 seed
   u : generators -> tree module plus the generators' internal
   differential; the constructor verifies it squares to zero and reports an
   offending generator otherwise. */
class FreeOperad {
  public:
    FreeOperad(const SModule &gens, const SModuleMap &u, const Truncation &t);

    const TreeModule &trees() const { return tm_; }
    const DgOperad &operad() const { return op_; }
    const SModule &underlying() const { return op_.underlying(); }
    /* The effective seed: the given u plus corolla differential. */
    const SModuleMap &seed() const { return seed_; }

    /* Universal property: extend a degree-0 equivariant map
       phi : generators -> q.underlying() to the map of operads on
       underlying modules, evaluating each basis tree bottom-up by q's
       compositions. The extension is the unique operad map restricting to
       phi; it is a chain map exactly when phi intertwines the seed with
       q's differential. */
    SModuleMap extend(const DgOperad &q, const SModuleMap &phi) const;

  private:
    TreeModule tm_;
    SModuleMap seed_;
    DgOperad op_;
};

FreeOperad free_operad(const SModule &gens, const SModuleMap &u, const Truncation &t);

/* One elementary multilinear map between chain complexes: sends the basis
   tensor ins to out, all other basis tensors to zero. Basis elements of
   the source and target are addressed as (degree, position). */
struct ElementaryMap {
    std::pair<int, int> out;
    std::vector<std::pair<int, int>> ins;

    bool operator==(const ElementaryMap &o) const { return out == o.out && ins == o.ins; }
    bool operator<(const ElementaryMap &o) const {
        return out != o.out ? out < o.out : ins < o.ins;
    }
};

/* The S-module [V^{(x)n}, W] of elementary multilinear maps from tensor
   powers of one complex into another, within the truncation (all elements
   weight 1; arities 0..max_arity; degree |out| - sum |ins| must lie in the
   window). The symmetric action permutes inputs with Koszul signs; the
   differential is d_W o g - (-1)^{|g|} g o d_{V^{(x)n}}. */
struct EndModule {
    SModule mod;
    std::map<int, std::vector<ElementaryMap>> basis;  // arity -> basis data

    int find(int arity, const ElementaryMap &e) const;  // -1 when absent
};

EndModule end_module(const ChainComplex &src, const ChainComplex &tgt, const Truncation &t);

/* Endomorphism operad of a chain complex: End(n) = [c^{(x)n}, c] with
   composition the substitution of multilinear maps and unit the identity
   map (a sum of elementary maps, one per basis element). */
class EndOperad {
  public:
    EndOperad(const ChainComplex &carrier, const Truncation &t);

    const DgOperad &operad() const { return op_; }
    const ChainComplex &carrier() const { return carrier_; }
    const EndModule &elements() const { return em_; }

  private:
    ChainComplex carrier_;
    EndModule em_;
    DgOperad op_;
};

EndOperad end_operad(const ChainComplex &c, const Truncation &t);

/* Pullback operad of End_V and End_W along a chain map f : V -> W: arity n
   holds the pairs (g_V, g_W) with f o g_V = g_W o f^{(x)n}. The basis is a
   deterministic kernel basis of that constraint, computed per degree on
   End_V(n) (+) End_W(n); differential, action, and compositions are
   computed componentwise and expressed through the basis. */
struct EndPullback {
    EndModule ev, ew;
    /* arity -> inclusion matrix, (dim End_V(n) + dim End_W(n)) x dim(n),
       columns = the chosen kernel basis in concatenated coordinates. */
    std::map<int, SparseMatrix> incl;
    DgOperad op;
};

EndPullback end_pullback(const ChainComplex &v, const ChainComplex &w, const ChainMap &f,
                         const Truncation &t);

/* Arity-wise homology with the symmetric action induced through the
   canonical contraction (p o action o i). Zero differential; all weights
   1; basis named h<degree>_<position>. Arities with vanishing homology are
   absent. */
SModule operad_homology(const DgOperad &p);

}  // namespace opal

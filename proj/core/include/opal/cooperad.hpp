#pragma once

#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "opal/smodule.hpp"
#include "opal/treemod.hpp"

namespace opal {

/* Curved conilpotent cooperad presented over an adapted basis.

   The coaugmentation is a single basis element of the arity-1 component
   (degree 0, weight 0) and the counit is its dual functional; the reduced
   part is spanned by every other basis element. Conilpotency is enforced
   structurally: every reduced basis element must have weight >= 1, so the
   complete decomposition of an element lands in trees with boundedly many
   vertices inside the truncation.

   Primary data is the complete decomposition delta : C -> T(C-reduced)
   into the labelled-tree module on the reduced part: the tree-shaped sum
   of all iterated decompositions in normalized form (no unit labels). The
   two-level decompositions are derived views: two_level() produces
   Delta : C -> C∘C (trivial terms included) from the components of delta
   with at most two vertices, and cuts() lists the reduced single-cut
   terms. The coderivation is the differential installed on the underlying
   S-module; it need not square to zero: the curvature, a functional on
   the arity-1 basis pairing nontrivially only with degree-2 elements,
   measures the defect via d^2 = (theta x Id - Id x theta) Delta_2.

   Degree windows behave as everywhere else: basis elements outside the
   truncation are quotiented away, so checks certify the truncated
   structure. Callers pick windows wide enough for their instances. */
class CurvedCooperad {
  public:
    CurvedCooperad(SModule underlying, int unit_index, SModuleMap delta, Vec curvature,
                   Truncation trunc);

    const SModule &underlying() const { return und_; }
    int unit_index() const { return unit_; }
    const Truncation &truncation() const { return trunc_; }
    const SModule &reduced() const { return trees_.generators(); }
    /* The labelled-tree module on the reduced part, delta's codomain. */
    const TreeModule &trees() const { return trees_; }
    const SModuleMap &delta() const { return delta_; }
    const Vec &curvature() const { return theta_; }

    /* Index of an underlying arity-1/i basis element inside the reduced
       module (-1 for the unit); other arities coincide. */
    int reduced_index(int arity, int i) const;
    int ambient_index(int arity, int r) const;
    Vec to_reduced(int arity, const Vec &x) const;
    Vec from_reduced(int arity, const Vec &x) const;

    /* Two-level decomposition Delta : C -> C∘C including the trivial
       terms, as a map into cc.module() where cc = Composite(underlying,
       underlying, truncation). */
    SModuleMap two_level(const Composite &cc) const;

    /* One reduced single-cut term coeff * (upper over blocks, lower in
       the slot-th block); indices refer to the underlying module. */
    struct Cut {
        int k = 0;  // upper arity
        int upper = 0;
        std::vector<std::vector<int>> blocks;
        int slot = 0;  // block holding the lower factor
        int m = 0;     // lower arity
        int lower = 0;
        Rat coeff;
    };
    /* The reduced infinitesimal decomposition of basis element (n, i):
       the two-vertex components of delta. */
    std::vector<Cut> cuts(int n, int i) const;

  private:
    SModule und_;
    int unit_ = 0;
    Vec theta_;
    Truncation trunc_;
    TreeModule trees_;
    SModuleMap delta_;
};

/* Outcome of the axiom checker: either a certificate naming every
   inspected (arity, degree, weight) cell, or a list of violations each
   carrying the axiom and a witness basis element. */
struct CooperadReport {
    std::vector<std::string> violations;
    std::vector<std::tuple<int, int, int>> cells;  // (arity, degree, weight)

    bool ok() const { return violations.empty(); }
    std::string text() const;
};

/* Checks, within the truncation: underlying S-module structure (without
   requiring d^2 = 0), unit normalization and d(1) = 0, equivariance and
   counit/corolla normalization of delta, the morphism property of delta
   into the cofree cooperad (coassociativity at every level), the
   co-Leibniz rule for the coderivation, the curvature identities
   d^2 = (theta x Id - Id x theta) Delta_2 and theta d = 0, and the
   degree restriction on theta. */
CooperadReport check_curved_axioms(const CurvedCooperad &c);

/* Cofree conilpotent cooperad on a cogenerator module, carrying the
   coderivation extending a degree -1 seed u : T(V) -> V and a supplied
   curvature. `trees` is the labelled-tree basis of the underlying. */
struct CofreeCooperad {
    TreeModule trees;
    SModuleMap seed;
    CurvedCooperad coop;
};
CofreeCooperad cofree_cooperad(const SModule &cogens, const SModuleMap &seed, const Vec &curvature,
                               const Truncation &trunc);

/* Square-zero coaugmented cooperad I ⊕ V: every reduced decomposition is
   the corolla, the coderivation is V's differential. */
CurvedCooperad square_zero_cooperad(const SModule &v, const Vec &curvature, const Truncation &trunc);

/* Increasing exhaustive filtration of an S-module by arity-wise spanning
   sets. levels[n][arity] spans F_n(arity); missing arities span zero, and
   requests beyond the last level return the last level. */
struct Filtration {
    std::vector<std::map<int, SparseMatrix>> levels;

    int top() const { return (int)levels.size() - 1; }
    const SparseMatrix *span(int n, int arity) const;  // null: zero space
    bool contains(int n, int arity, const Vec &x) const;
    /* Smallest level containing the vector, or nullopt. */
    std::optional<int> level_of(int arity, const Vec &x) const;
};

/* The coradical filtration F_n = {x : delta(x) has at most n vertices in
   every term}. Throws when the decomposition is not a conilpotent one:
   a reduced element sitting in F_0 (its corolla term is missing), or
   levels that fail to exhaust the module within the truncation weight. */
Filtration coradical_filtration(const CurvedCooperad &c);

/* Admissibility of a filtration: F_0 is exactly the unit line, levels
   increase and exhaust the module, d preserves every level, and each
   two-level decomposition term of an F_n element has factor levels
   summing to at most n (checked term-by-term on spanning vectors, which
   is exact for the basis-adapted filtrations produced here). Returns the
   violations. */
std::vector<std::string> check_admissible(const CurvedCooperad &c, const Filtration &f);

/* Morphism of curved conilpotent cooperads src -> tgt: degree-0
   equivariant, unit/counit compatible, commutes with coderivations,
   pulls the curvature back, and intertwines the complete decompositions
   (delta_tgt ∘ f = T(f-reduced) ∘ delta_src). Returns the violations. */
std::vector<std::string> check_cooperad_morphism(const CurvedCooperad &src, const CurvedCooperad &tgt,
                                                 const SModuleMap &f);

/* Graded-piece comparison of a filtration-preserving morphism. */
struct GradedCell {
    int level = 0;
    int arity = 0;
    int degree = 0;
    int rank_src = 0;  // homology rank of the graded piece of the source
    int rank_tgt = 0;
    bool iso = false;  // induced map on graded homology is an isomorphism
};
struct FilteredQisReport {
    std::vector<std::string> failures;  // preservation / stability violations
    std::vector<GradedCell> cells;
    bool filtered_qis = false;
    /* Independent verdict on the underlying complexes; absent when either
       coderivation fails to square to zero. */
    std::optional<bool> total_qis;

    std::string text() const;
};

/* Checks that f preserves the filtrations, forms the graded pieces
   G_n = F_n/F_{n-1} with their induced differentials, compares homology
   ranks per (level, arity, degree), and tests whether the induced map on
   graded homology is an isomorphism. When both coderivations square to
   zero the underlying homology comparison is run independently. */
FilteredQisReport check_filtered_qis(const SModuleMap &f, const CurvedCooperad &src,
                                     const Filtration &fsrc, const CurvedCooperad &tgt,
                                     const Filtration &ftgt);

/* Product of two coderivation-stable dg cooperads (zero curvature): the
   alternated tree module on the two reduced parts, with the complete
   decomposition given by degrafting combined with the decompositions
   inside each factor, computed through the embedding into the cofree
   cooperad on the direct sum of the reduced parts. */
struct CooperadProduct {
    CurvedCooperad product;
    SModuleMap to_left;
    SModuleMap to_right;
};
CooperadProduct cooperad_product(const CurvedCooperad &c, const CurvedCooperad &d,
                                 const Truncation &trunc);

/* The pairing morphism E -> C x D induced by morphisms u : E -> C and
   v : E -> D: each complete-decomposition term of E is expanded over all
   alternating assignments of its vertices to the two factors. */
SModuleMap into_product(const CurvedCooperad &e, const SModuleMap &u, const SModuleMap &v,
                        const CurvedCooperad &c, const CurvedCooperad &d, const CooperadProduct &p);

}  // namespace opal

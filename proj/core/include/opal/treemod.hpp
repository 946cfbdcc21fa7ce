#pragma once

#include <string>
#include <vector>

#include "opal/smodule.hpp"
#include "opal/tree.hpp"

namespace opal {

/* A non-unit basis element of a tree module: a canonical tree with one
   generator index per vertex, in DF order. */
struct LabelledTree {
    Tree tree;
    std::vector<int> labels;
};

/* Free S-module on generator-labelled trees within a truncation.

   Basis at arity n: the optional unit (bare leaf, degree 0, weight 0,
   arity 1 only, listed first), then canonical trees with n leaves carrying
   one generator per vertex, in enumeration order with the label odometer
   running over DF vertices. Degree and weight are the sums over vertices;
   generators must have weight >= 1. Labellings outside the truncation are
   dropped. Trees admitting a nontrivial automorphism (possible only with
   arity-0 generators) would need coinvariants and are rejected.

   The symmetric action relabels leaves; it is installed on the module. No
   differential is installed: build one with derivation/coderivation. */
class TreeModule;

/* Label-wise extension of a degree-0 generator map f : src.generators()
   -> tgt.generators(): every tree keeps its shape, each vertex label is
   pushed through f multilinearly, and the unit maps to the unit. */
SModuleMap tree_map_of_labels(const TreeModule &src, const TreeModule &tgt, const SModuleMap &f);

class TreeModule {
  public:
    TreeModule(const SModule &gens, const Truncation &trunc, bool with_unit = true);

    const SModule &module() const { return mod_; }
    const SModule &generators() const { return gens_; }
    const Truncation &truncation() const { return trunc_; }
    bool with_unit() const { return with_unit_; }

    bool is_unit(int arity, int index) const;
    /* The labelled tree behind a basis element; throws for the unit. */
    const LabelledTree &at(int arity, int index) const;
    int find(const Tree &t, const std::vector<int> &labels) const;  // -1 when absent
    int unit_index() const;                                         // -1 without unit

    /* Interpret a planar tree whose vertices carry generator vectors as an
       element of the module. Tags 0..m-1 give the caller's tensor order;
       labels[tag] is a degree-homogeneous vector over generators(arity of
       that vertex). Handles canonicalization: slot permutations act on the
       generators, the tag -> DF reordering contributes the Koszul sign, and
       labellings outside the truncation vanish. A bare leaf gives the unit. */
    Vec embed(const PTree &p, const std::vector<Vec> &labels) const;

    /* Derivation extending u : generators -> module (odd degree): replace
       one vertex by u of its generator, sign (-1)^{|u| * (degrees before
       the vertex in DF order)}. */
    SModuleMap derivation(const SModuleMap &u) const;

    /* Coderivation with cogenerator projection u : module -> generators:
       collapse one connected set of vertices to a single vertex labelled by
       u of the collapsed branch. */
    SModuleMap coderivation(const SModuleMap &u) const;

    /* Two-level decomposition into cc = Composite(module(), module(), ...):
       cut each basis tree along every parent-closed vertex subset. The
       trivial cuts (empty set / all vertices) pair with the unit and are
       included only when include_trivial is set. Degree 0. */
    SModuleMap full_delta(const Composite &cc, bool include_trivial) const;

    /* One term of the reduced infinitesimal decomposition: a single inner
       edge is cut; every other slot of the upper part keeps a trivial
       branch. presign is the Koszul sign of gathering the two factor groups
       out of DF order; blocks[j] lists the original leaves below upper
       leaf j, and slot is the upper leaf holding the nontrivial branch. */
    struct BranchTerm {
        Rat presign;
        int slot = 0;
        std::vector<std::vector<int>> blocks;
        Vec upper;
        Vec branch;
    };
    std::vector<BranchTerm> single_branch_terms(int arity, int index) const;

    /* Corollas to their generator, everything else to zero. Degree 0. */
    SModuleMap projection_to_generators() const;
    /* Generators to corollas. Degree 0. */
    SModuleMap inclusion_of_generators() const;

    /* Partial composition x o_slot y on basis vectors: splice trees, leaves
       of y replacing leaf `slot` of x with the standard relabelling. */
    Vec graft_elements(int n, const Vec &x, int slot, int m, const Vec &y) const;

  private:
    SModule gens_;
    Truncation trunc_;
    bool with_unit_;
    SModule mod_;
    std::map<int, std::vector<LabelledTree>> trees_;  // arity -> non-unit basis data
};

}  // namespace opal

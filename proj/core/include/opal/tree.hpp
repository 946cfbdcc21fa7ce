#pragma once

#include <string>
#include <vector>

#include "opal/perm.hpp"

namespace opal {

/* Planar rooted tree with labelled leaves (0-based labels). Input form for
   canonicalization; `tag` is internal bookkeeping for vertex tracking. */
struct PTree {
    bool leaf = false;
    int label = -1;
    std::vector<PTree> kids;
    int tag = -1;

    static PTree make_leaf(int l);
    static PTree make_vertex(std::vector<PTree> kids);
};

/* Nonplanar rooted tree with leaves labelled bijectively by {0..q-1}, stored
   as its canonical planar representative: children of every vertex sorted by
   (minimal leaf below, then leafless subtrees last ordered by encoding).
   Vertices are indexed in depth-first preorder of the canonical form; all
   tensor-factor conventions elsewhere refer to this order. The trivial tree
   (a bare leaf, no vertices) is a distinguished value. */
class Tree {
  public:
    Tree();  // trivial tree
    static Tree trivial() { return Tree(); }
    static Tree corolla(int arity);
    static Tree parse(const std::string &s);

    struct Canon;
    static Canon canonicalize(const PTree &p);

    struct CanonSlots;
    static CanonSlots canonicalize_slots(const PTree &p);

    bool is_trivial() const { return nv_ == 0; }
    int leaf_count() const { return q_; }
    int vertex_count() const { return nv_; }
    int arity(int v) const { return (int)slots_[v].size(); }
    int parent(int v) const { return parent_[v]; }

    struct Slot {
        bool is_leaf;
        int id;  // leaf label or child vertex id
    };
    const std::vector<Slot> &slots(int v) const { return slots_[v]; }
    std::vector<int> arities() const;  // per vertex, DF order

    const std::string &encode() const { return enc_; }
    PTree planar() const;

    /* True when some vertex has two identical (necessarily leafless) child
       subtrees; labelled-tree bases refuse such shapes. */
    bool has_nontrivial_automorphism() const;

    friend bool operator==(const Tree &a, const Tree &b) { return a.enc_ == b.enc_; }
    friend bool operator!=(const Tree &a, const Tree &b) { return !(a == b); }
    friend bool operator<(const Tree &a, const Tree &b) { return a.enc_ < b.enc_; }

  private:
    int q_ = 1;
    int nv_ = 0;
    std::vector<int> parent_;
    std::vector<std::vector<Slot>> slots_;
    std::string enc_;

    friend struct TreeBuilder;
};

struct Tree::Canon {
    Tree tree;
    Perm vperm;  // planar DF position -> canonical DF position
};

/* Canonical form plus, per vertex, the permutation its slots underwent while
   sorting children (old slot -> canonical slot). Vertex tags must be
   preassigned and distinct 0..vertex_count-1. */
struct Tree::CanonSlots {
    Tree tree;
    Perm vperm;                    // tag -> canonical DF position
    std::vector<Perm> slot_perms;  // indexed by tag
};

/* All canonical trees with `leaves` labelled leaves, between 1 and
   max_vertices vertices, every vertex arity within [min_arity, max_arity].
   The trivial tree is never included. Throws when the request is too large
   (leaves > 8 or max_vertices > 8). */
std::vector<Tree> enumerate_trees(int leaves, int max_vertices, int min_arity = 0, int max_arity = 1 << 20);

/* Grafting inner into the leaf of outer labelled `leaf_label` (0-based);
   leaf labels shuffle in the standard way. vperm relates the tensor order
   (outer vertices in outer-DF order, then inner vertices in inner-DF order)
   to the DF order of the result. */
struct Graft {
    Tree tree;
    Perm vperm;
};
Graft graft(const Tree &outer, int leaf_label, const Tree &inner);

/* Collapse of a connected vertex set to a single vertex.
     branch: the set as a standalone tree, leaves = outgoing edges labelled
       in the block order described at split_at;
     quotient: t with the set replaced by one vertex of arity = branch leaf
       count. The naive quotient order is t's DF order with non-set vertices
       kept and the whole set represented at its root's position. */
struct Collapse {
    Tree branch;
    Perm branch_vperm;  // position-within-set (t-DF order) -> branch-DF
    PTree branch_naive;  // planar branch, tags = position within the set
    Tree quotient;
    Perm quotient_vperm;    // naive contracted order -> quotient-DF
    PTree quotient_naive;   // planar quotient, tags = naive positions
    int collapsed_vertex;   // vertex id in quotient
    std::vector<int> old_to_new;  // t-vertex -> naive contracted position
};
Collapse collapse(const Tree &t, const std::vector<int> &vertices);

/* All connected vertex subsets with at least min_vertices vertices, each
   sorted ascending; deterministic order. */
std::vector<std::vector<int>> subtrees(const Tree &t, int min_vertices);

/* Cut below a parent-closed vertex set: the upper part becomes a tree whose
   leaves are the cut edges and the retained original leaves, labelled
   0..k-1 in representative block order (blocks = original leaf sets below
   each upper leaf, sorted by minimal element, empty blocks last by branch
   encoding); the lower part is the list of hanging branches, with the
   trivial tree under every retained original leaf. */
struct Split {
    Tree upper;
    Perm upper_vperm;  // position-within-upper-set (t-DF order) -> upper-DF
    PTree upper_naive;  // planar upper part, tags = position within the set
    std::vector<int> upper_set;
    std::vector<std::vector<int>> blocks;    // t-leaves below each upper leaf
    std::vector<Tree> lower;                 // one per upper leaf
    std::vector<Perm> lower_vperms;          // set order -> branch-DF
    std::vector<PTree> lower_naive;          // planar branches, tags = set positions
    std::vector<std::vector<int>> lower_sets;  // t-vertices per branch, t-DF order
};
Split split_at(const Tree &t, const std::vector<int> &upper_set);

/* All parent-closed vertex subsets (including empty and full), each sorted;
   deterministic order. */
std::vector<std::vector<int>> parent_closed_subsets(const Tree &t);

/* Partitions of the vertex set into `parts` connected pieces; each part
   sorted, parts ordered by the DF position of their root. */
std::vector<std::vector<std::vector<int>>> tree_partitions(const Tree &t, int parts);

/* Substitute a tree with arity(v) leaves for vertex v: leaf i of `sub`
   takes over child slot i of v. vperm relates the tensor order (t vertices
   in t-DF order with v's position expanded to sub's vertices in sub-DF
   order) to the result's DF order. */
struct Expand {
    Tree tree;
    Perm vperm;
};
Expand expand_vertex(const Tree &t, int v, const Tree &sub);

int inner_edge_count(const Tree &t);

}  // namespace opal

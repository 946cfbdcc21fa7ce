#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "opal/tree.hpp"

using namespace opal;

namespace {

std::vector<std::string> encodings(const std::vector<Tree> &ts) {
    std::vector<std::string> out;
    for (const auto &t : ts) out.push_back(t.encode());
    return out;
}

void shuffle_planar(PTree &p, std::mt19937 &rng) {
    if (p.leaf) return;
    std::shuffle(p.kids.begin(), p.kids.end(), rng);
    for (auto &k : p.kids) shuffle_planar(k, rng);
}

}  // namespace

TEST_CASE("trivial tree and corollas") {
    Tree tr = Tree::trivial();
    CHECK(tr.is_trivial());
    CHECK(tr.leaf_count() == 1);
    CHECK(tr.vertex_count() == 0);
    CHECK(tr.encode() == "l1");

    Tree c3 = Tree::corolla(3);
    CHECK(c3.encode() == "(l1,l2,l3)");
    CHECK(c3.vertex_count() == 1);
    CHECK(c3.leaf_count() == 3);
    CHECK(c3.arity(0) == 3);

    Tree c0 = Tree::corolla(0);
    CHECK(c0.encode() == "()");
    CHECK(c0.leaf_count() == 0);
    CHECK(c0.vertex_count() == 1);

    CHECK(Tree::corolla(1).encode() == "(l1)");
}

TEST_CASE("parse and canonical form") {
    CHECK(Tree::parse("l1").is_trivial());
    CHECK(Tree::parse("(l1,(l2,l3))").encode() == "(l1,(l2,l3))");
    // non-canonical child order is normalized
    CHECK(Tree::parse("((l2,l3),l1)").encode() == "(l1,(l2,l3))");
    CHECK(Tree::parse("((l3,l2),l1)").encode() == "(l1,(l2,l3))");
    // leafless children sort last, ordered by encoding
    CHECK(Tree::parse("((),l1,(l2))").encode() == "(l1,(l2),())");
    CHECK(Tree::parse("((()),())").encode() == "((()),())");  // '(' sorts before ')'
    // round trip
    for (const char *s : {"(l1,(l2,l3))", "((l1,l2),l3)", "(l1,l2,(l3),())", "l1", "()"})
        CHECK(Tree::parse(s).encode() == s);
    // bad inputs
    CHECK_THROWS(Tree::parse("l2"));           // labels must be 1..q
    CHECK_THROWS(Tree::parse("(l1,l1)"));      // repeated label
    CHECK_THROWS(Tree::parse("(l1,l3)"));      // gap
    CHECK_THROWS(Tree::parse("(l1"));          // unclosed
    CHECK_THROWS(Tree::parse("(l1,l2))"));     // trailing
    CHECK_THROWS(Tree::parse("x"));
}

TEST_CASE("canonicalization is planar-order invariant and tracks vertices") {
    // two named subtrees under a root, given in the "wrong" planar order
    PTree a = PTree::make_vertex({PTree::make_leaf(2), PTree::make_leaf(3)});
    PTree b = PTree::make_vertex({PTree::make_leaf(0), PTree::make_leaf(1)});
    PTree root = PTree::make_vertex({a, b});  // planar DF: root=0, a=1, b=2
    auto c = Tree::canonicalize(root);
    CHECK(c.tree.encode() == "((l1,l2),(l3,l4))");
    // b sorts first: a moves to DF slot 2, b to slot 1
    CHECK(c.vperm.images() == std::vector<int>{0, 2, 1});

    std::mt19937 rng(12345);
    std::vector<const char *> shapes = {"(l1,(l2,l3))", "((l1,l2),(l3,l4))",
                                        "(l1,l2,(l3),())", "((l1,(l2)),l3,())"};
    for (const char *s : shapes) {
        Tree t = Tree::parse(s);
        for (int trial = 0; trial < 20; ++trial) {
            PTree p = t.planar();
            shuffle_planar(p, rng);
            auto cc = Tree::canonicalize(p);
            CHECK(cc.tree == t);
            // vperm is a permutation of the vertices
            std::vector<int> img = cc.vperm.images();
            std::sort(img.begin(), img.end());
            for (int i = 0; i < (int)img.size(); ++i) CHECK(img[i] == i);
        }
    }
}

TEST_CASE("tree enumeration") {
    CHECK(encodings(enumerate_trees(1, 1)) == std::vector<std::string>{"(l1)"});
    CHECK(encodings(enumerate_trees(2, 1)) == std::vector<std::string>{"(l1,l2)"});

    // with every vertex of arity >= 2 there are four trees on three leaves:
    // the corolla and the three binary shapes
    auto reduced = enumerate_trees(3, 2, 2);
    CHECK(encodings(reduced) == std::vector<std::string>{"(l1,l2,l3)", "((l1,l2),l3)",
                                                         "((l1,l3),l2)", "(l1,(l2,l3))"});

    // unrestricted, nullary and unary vertices add five more
    auto all = enumerate_trees(3, 2);
    CHECK(all.size() == 9);
    auto all_enc = encodings(all);
    std::set<std::string> enc(all_enc.begin(), all_enc.end());
    CHECK(enc.count("(l1,l2,l3)"));
    CHECK(enc.count("((l1,l2,l3))"));      // unary root
    CHECK(enc.count("(l1,l2,(l3))"));      // one leaf through a unary vertex
    CHECK(enc.count("(l1,l2,l3,())"));     // extra nullary child
    CHECK(enc.count("((l1,l2),l3)"));

    // no trivial tree, ever
    for (const auto &t : enumerate_trees(1, 3)) CHECK(!t.is_trivial());

    // leafless trees
    auto closed = enumerate_trees(0, 2);
    CHECK(encodings(closed) == std::vector<std::string>{"()", "(())"});

    CHECK_THROWS(enumerate_trees(9, 2));
}

TEST_CASE("enumeration respects vertex and arity bounds") {
    for (const auto &t : enumerate_trees(4, 3, 2)) {
        CHECK(t.vertex_count() <= 3);
        for (int a : t.arities()) CHECK(a >= 2);
        CHECK(t.leaf_count() == 4);
    }
    // binary trees on n leaves with n-1 vertices: (2n-3)!! shapes
    int binary4 = 0;
    for (const auto &t : enumerate_trees(4, 3, 2, 2))
        if (t.vertex_count() == 3) ++binary4;
    CHECK(binary4 == 15);
}

TEST_CASE("grafting") {
    Tree mu = Tree::corolla(2);
    // unit laws
    auto g1 = graft(mu, 1, Tree::trivial());
    CHECK(g1.tree == mu);
    CHECK(g1.vperm.is_identity());
    auto g2 = graft(Tree::trivial(), 0, mu);
    CHECK(g2.tree == mu);

    // grafting into the first slot gives the left comb, second the right
    CHECK(graft(mu, 0, mu).tree.encode() == "((l1,l2),l3)");
    CHECK(graft(mu, 1, mu).tree.encode() == "(l1,(l2,l3))");

    // leaf relabelling shuffles: graft a 3-corolla into the middle leaf
    CHECK(graft(Tree::corolla(3), 1, Tree::corolla(3)).tree.encode() == "(l1,(l2,l3,l4),l5)");

    // vertex tracking across a reorder: grafting under leaf 1 of (l1,(l2,l3))
    // makes the grafted vertex sort before the old inner vertex
    Tree outer = Tree::parse("(l1,(l2,l3))");
    auto g = graft(outer, 0, mu);
    CHECK(g.tree.encode() == "((l1,l2),(l3,l4))");
    CHECK(g.vperm.images() == std::vector<int>{0, 2, 1});

    // grafting in disjoint positions commutes (the second position shifts)
    Tree t1 = graft(graft(Tree::corolla(3), 0, mu).tree, 3, mu).tree;
    Tree t2 = graft(graft(Tree::corolla(3), 2, mu).tree, 0, mu).tree;
    CHECK(t1 == t2);
    CHECK(t1.encode() == "((l1,l2),l3,(l4,l5))");

    CHECK_THROWS(graft(mu, 2, mu));
}

TEST_CASE("subtrees and inner edges") {
    CHECK(subtrees(Tree::corolla(3), 1) == std::vector<std::vector<int>>{{0}});

    Tree comb = Tree::parse("((l1,l2),l3)");
    auto subs = subtrees(comb, 1);
    CHECK(subs == std::vector<std::vector<int>>{{0}, {1}, {0, 1}});
    CHECK(subtrees(comb, 2) == std::vector<std::vector<int>>{{0, 1}});

    CHECK(inner_edge_count(Tree::corolla(3)) == 0);
    CHECK(inner_edge_count(comb) == 1);
    CHECK(inner_edge_count(Tree::parse("(((l1,l2),l3),l4)")) == 2);
    CHECK(inner_edge_count(Tree::trivial()) == 0);
}

TEST_CASE("tree partitions into connected parts") {
    CHECK(tree_partitions(Tree::corolla(3), 1).size() == 1);

    Tree comb2 = Tree::parse("((l1,l2),l3)");
    auto p2 = tree_partitions(comb2, 2);
    REQUIRE(p2.size() == 1);
    CHECK(p2[0] == std::vector<std::vector<int>>{{0}, {1}});

    Tree comb3 = Tree::parse("(((l1,l2),l3),l4)");
    CHECK(tree_partitions(comb3, 2).size() == 2);
    CHECK(tree_partitions(comb3, 1).size() == 1);
    CHECK(tree_partitions(comb3, 3).size() == 1);
    CHECK(tree_partitions(comb3, 4).empty());

    // parts are listed by the depth-first position of their roots
    for (const auto &part : tree_partitions(comb3, 2)) {
        CHECK(part.size() == 2);
        CHECK(part[0][0] < part[1][0]);
        CHECK(part[0][0] == 0);
    }

    // total over all k is 2^(inner vertices): one bit per parent edge
    for (const char *s : {"(((l1,l2),l3),l4)", "((l1,(l2,l3)),l4,())", "(l1,l2,l3)"}) {
        Tree t = Tree::parse(s);
        size_t total = 0;
        for (int k = 1; k <= t.vertex_count(); ++k) total += tree_partitions(t, k).size();
        CHECK(total == (size_t)1 << (t.vertex_count() - 1));
    }
}

TEST_CASE("parent-closed subsets") {
    Tree comb = Tree::parse("((l1,l2),l3)");
    auto ups = parent_closed_subsets(comb);
    CHECK(ups == std::vector<std::vector<int>>{{}, {0}, {0, 1}});

    Tree c3 = Tree::corolla(3);
    CHECK(parent_closed_subsets(c3).size() == 2);

    Tree y = Tree::parse("((l1,l2),(l3,l4))");
    CHECK(parent_closed_subsets(y).size() == 5);  // {}, {0}, {0,1}, {0,2}, {0,1,2}
}

TEST_CASE("collapse of a connected vertex set") {
    Tree t = Tree::parse("((l1,(l2,l3)),l4)");  // 0 root, 1 = (l1,..), 2 = (l2,l3)

    SUBCASE("single vertex") {
        auto c = collapse(t, {2});
        CHECK(c.branch == Tree::corolla(2));
        CHECK(c.quotient == t);
        CHECK(c.collapsed_vertex == 2);
        CHECK(c.old_to_new == std::vector<int>{0, 1, 2});
    }
    SUBCASE("full set") {
        auto c = collapse(t, {0, 1, 2});
        CHECK(c.branch == t);
        CHECK(c.quotient == Tree::corolla(4));
        CHECK(c.collapsed_vertex == 0);
    }
    SUBCASE("upper pair") {
        auto c = collapse(t, {0, 1});
        // cut edges: l1 (min 0), the (l2,l3) branch (min 1), l4 (min 3)
        CHECK(c.branch.encode() == "((l1,l2),l3)");
        CHECK(c.quotient.encode() == "(l1,(l2,l3),l4)");
        CHECK(c.collapsed_vertex == 0);
        CHECK(c.old_to_new == std::vector<int>{0, 0, 1});
    }
    SUBCASE("lower pair") {
        auto c = collapse(t, {1, 2});
        CHECK(c.branch.encode() == "(l1,(l2,l3))");
        CHECK(c.quotient.encode() == "((l1,l2,l3),l4)");
        CHECK(c.collapsed_vertex == 1);
    }

    CHECK_THROWS(collapse(t, {0, 2}));  // not connected
    CHECK_THROWS(collapse(t, {}));
    CHECK_THROWS(collapse(t, {1, 1}));
}

TEST_CASE("collapse then expand is the identity") {
    std::vector<const char *> shapes = {"((l1,(l2,l3)),l4,())", "(((l1,l2),l3),l4)",
                                        "((l1,l2),(l3,l4))", "(l1,(l2),(l3,(l4,l5)))"};
    for (const char *s : shapes) {
        Tree t = Tree::parse(s);
        for (const auto &set : subtrees(t, 1)) {
            auto c = collapse(t, set);
            CHECK(c.branch.leaf_count() == c.quotient.arity(c.collapsed_vertex));
            CHECK(c.quotient.vertex_count() == t.vertex_count() - (int)set.size() + 1);
            auto e = expand_vertex(c.quotient, c.collapsed_vertex, c.branch);
            CHECK(e.tree == t);
        }
    }
}

TEST_CASE("expand vertex") {
    Tree t = Tree::parse("(l1,(l2,l3))");
    // replacing the inner 2-corolla vertex by a 2-corolla tree changes nothing
    auto e = expand_vertex(t, 1, Tree::corolla(2));
    CHECK(e.tree == t);
    CHECK(e.vperm.is_identity());

    // a unary vertex expanded by the trivial tree disappears
    Tree u = Tree::parse("(l1,(l2))");
    auto e2 = expand_vertex(u, 1, Tree::trivial());
    CHECK(e2.tree == Tree::corolla(2));
    CHECK(e2.vperm.images() == std::vector<int>{0});

    // expanding the unique vertex of (l1) by the trivial tree gives the trivial tree
    auto e3 = expand_vertex(Tree::corolla(1), 0, Tree::trivial());
    CHECK(e3.tree.is_trivial());

    // expanding the root by a two-vertex tree
    auto e4 = expand_vertex(Tree::corolla(2), 0, Tree::parse("(l1,(l2))"));
    CHECK(e4.tree.encode() == "(l1,(l2))");

    CHECK_THROWS(expand_vertex(t, 1, Tree::corolla(3)));  // arity mismatch
}

TEST_CASE("split below a parent-closed set") {
    Tree t = Tree::parse("(l1,(l2,l3))");

    SUBCASE("empty upper set") {
        auto s = split_at(t, {});
        CHECK(s.upper.is_trivial());
        CHECK(s.blocks == std::vector<std::vector<int>>{{0, 1, 2}});
        REQUIRE(s.lower.size() == 1);
        CHECK(s.lower[0] == t);
        CHECK(s.lower_sets[0] == std::vector<int>{0, 1});
    }
    SUBCASE("root only") {
        auto s = split_at(t, {0});
        CHECK(s.upper == Tree::corolla(2));
        CHECK(s.blocks == std::vector<std::vector<int>>{{0}, {1, 2}});
        REQUIRE(s.lower.size() == 2);
        CHECK(s.lower[0].is_trivial());
        CHECK(s.lower[1] == Tree::corolla(2));
        CHECK(s.lower_sets[1] == std::vector<int>{1});
    }
    SUBCASE("everything") {
        auto s = split_at(t, {0, 1});
        CHECK(s.upper == t);
        CHECK(s.blocks == std::vector<std::vector<int>>{{0}, {1}, {2}});
        for (const auto &l : s.lower) CHECK(l.is_trivial());
    }
    SUBCASE("blocks interleave by minimum") {
        Tree w = Tree::parse("((l1,l3),l2)");
        auto s = split_at(w, {0});
        CHECK(s.upper == Tree::corolla(2));
        CHECK(s.blocks == std::vector<std::vector<int>>{{0, 2}, {1}});
        CHECK(s.lower[0] == Tree::corolla(2));  // leaves relabelled within the block
        CHECK(s.lower[1].is_trivial());
    }

    CHECK_THROWS(split_at(t, {1}));  // not parent-closed

    // split of the trivial tree
    auto s0 = split_at(Tree::trivial(), {});
    CHECK(s0.upper.is_trivial());
    REQUIRE(s0.lower.size() == 1);
    CHECK(s0.lower[0].is_trivial());
    CHECK(s0.blocks == std::vector<std::vector<int>>{{0}});
}

TEST_CASE("split blocks partition the leaves and match branch arity") {
    for (const char *s : {"((l1,(l2,l3)),l4,())", "(((l1,l2),l3),l4)", "((l1,l3),(l2,l4))"}) {
        Tree t = Tree::parse(s);
        for (const auto &up : parent_closed_subsets(t)) {
            auto sp = split_at(t, up);
            std::vector<int> seen;
            for (size_t j = 0; j < sp.blocks.size(); ++j) {
                CHECK(sp.lower[j].leaf_count() == (int)sp.blocks[j].size());
                seen.insert(seen.end(), sp.blocks[j].begin(), sp.blocks[j].end());
            }
            std::sort(seen.begin(), seen.end());
            for (int l = 0; l < t.leaf_count(); ++l) CHECK(seen[l] == l);
            CHECK((int)sp.blocks.size() == sp.upper.leaf_count());
            // vertices are partitioned between upper set and the branches
            size_t nv = sp.upper_set.size();
            for (const auto &ls : sp.lower_sets) nv += ls.size();
            CHECK(nv == (size_t)t.vertex_count());
        }
    }
}

TEST_CASE("automorphism detection") {
    CHECK(!Tree::corolla(3).has_nontrivial_automorphism());
    CHECK(!Tree::parse("((l1,l2),(l3,l4))").has_nontrivial_automorphism());
    CHECK(Tree::parse("((),())").has_nontrivial_automorphism());
    CHECK(!Tree::parse("((),(()))").has_nontrivial_automorphism());
    CHECK(Tree::parse("(l1,(),())").has_nontrivial_automorphism());
    CHECK(Tree::parse("(((),()),l1)").has_nontrivial_automorphism());  // nested
}

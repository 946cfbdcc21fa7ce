#include <doctest.h>

#include <random>
#include <string>

#include "opal/operad.hpp"

using namespace opal;

namespace {

Truncation box(int max_arity, int max_weight, int dmin, int dmax) {
    Truncation t;
    t.max_arity = max_arity;
    t.max_weight = max_weight;
    t.degree_min = dmin;
    t.degree_max = dmax;
    return t;
}

SModule one_binary() {
    SModule g;
    g.add_element(2, "m", 0, 1);
    return g;
}

/* Commutative multiplication operad, tabulated up to the given arity:
   one basis element per arity, trivial action, every composition the
   multiplication of the right arity. */
OperadData com_data(int max_arity) {
    OperadData d;
    d.underlying.add_element(1, "1", 0, 0);
    for (int n = 2; n <= max_arity; ++n) d.underlying.add_element(n, "m" + std::to_string(n), 0, n - 1);
    d.unit = Vec::unit(0);
    for (int n = 2; n <= max_arity; ++n)
        for (int m = 2; m <= max_arity; ++m) {
            if (n + m - 1 > max_arity) continue;
            for (int i = 0; i < n; ++i) {
                SparseMatrix t(1, 1);
                t.set(0, 0, Rat(1));
                d.comp[std::make_tuple(n, m, i)] = t;
            }
        }
    return d;
}

bool mentions(const std::string &hay, const std::string &needle) {
    return hay.find(needle) != std::string::npos;
}

}  // namespace

/* ------------- free operads ------------- */

TEST_CASE("free operad on one binary generator: dimensions and grafting") {
    FreeOperad f(one_binary(), SModuleMap{}, box(3, 2, 0, 0));
    const DgOperad &p = f.operad();
    // (2n-3)!! labelled binary trees: 1, 1, 3
    CHECK(p.underlying().dim(1) == 1);
    CHECK(p.underlying().dim(2) == 1);
    CHECK(p.underlying().dim(3) == 3);
    CHECK(p.underlying().dim(3, 0) == 3);

    int mu = 0;  // the only arity-2 element
    int left = f.trees().find(Tree::parse("((l1,l2),l3)"), {0, 0});
    int right = f.trees().find(Tree::parse("(l1,(l2,l3))"), {0, 0});
    int mid = f.trees().find(Tree::parse("((l1,l3),l2)"), {0, 0});
    REQUIRE(left >= 0);
    REQUIRE(right >= 0);
    REQUIRE(mid >= 0);
    // grafting into slot 0 stacks onto the first input: the left comb, with
    // coefficient +1 (the planar splice is already in canonical order)
    CHECK(p.compose(2, Vec::unit(mu), 0, 2, Vec::unit(mu)) == Vec::unit(left));
    CHECK(p.compose(2, Vec::unit(mu), 1, 2, Vec::unit(mu)) == Vec::unit(right));
    // unit laws through the composition tables
    CHECK(p.compose(2, Vec::unit(mu), 0, 1, p.unit()) == Vec::unit(mu));
    CHECK(p.compose(1, p.unit(), 0, 2, Vec::unit(mu)) == Vec::unit(mu));
    // full structure map with interleaved blocks: the middle comb
    Vec g = p.gamma_blocks(2, Vec::unit(mu), {{0, 2}, {1}},
                           {{2, Vec::unit(mu)}, {1, p.unit()}});
    CHECK(g == Vec::unit(mid));
}

TEST_CASE("free operad on one binary generator passes the axiom check") {
    FreeOperad f(one_binary(), SModuleMap{}, box(3, 2, 0, 0));
    CHECK(f.operad().axiom_violations().empty());
}

TEST_CASE("free operad with no generators is the unit operad") {
    FreeOperad f(SModule{}, SModuleMap{}, box(3, 2, 0, 0));
    CHECK(f.underlying().dim(1) == 1);
    CHECK(f.underlying().dim(2) == 0);
    CHECK(f.underlying().dim(3) == 0);
    CHECK(f.operad().axiom_violations().empty());
}

TEST_CASE("quasi-free operad: derivation differential, signs, and Leibniz") {
    SModule gens;
    gens.add_element(2, "b", 1, 1);
    gens.add_element(2, "c", 0, 1);
    Truncation t = box(3, 2, 0, 2);
    TreeModule probe(gens, t, true);
    int bcor = probe.find(Tree::parse("(l1,l2)"), {0});
    int ccor = probe.find(Tree::parse("(l1,l2)"), {1});
    REQUIRE(bcor >= 0);
    REQUIRE(ccor >= 0);

    SModuleMap u;
    u.degree = -1;
    SparseMatrix m2(probe.module().dim(2), 2);
    m2.set_col(0, Vec::unit(ccor));  // d(b) = c
    u.comp[2] = m2;

    FreeOperad f(gens, u, t);
    const DgOperad &p = f.operad();
    // frozen signs: both grafts of odd generators keep coefficient +1 (the
    // spliced planar tree is already canonically ordered)
    int bb_left = f.trees().find(Tree::parse("((l1,l2),l3)"), {0, 0});
    int bb_right = f.trees().find(Tree::parse("(l1,(l2,l3))"), {0, 0});
    REQUIRE(bb_left >= 0);
    REQUIRE(bb_right >= 0);
    CHECK(p.compose(2, Vec::unit(bcor), 0, 2, Vec::unit(bcor)) == Vec::unit(bb_left));
    CHECK(p.compose(2, Vec::unit(bcor), 1, 2, Vec::unit(bcor)) == Vec::unit(bb_right));
    // the axiom check exercises Leibniz against a nonzero differential
    CHECK(p.axiom_violations().empty());

    // homology: the generators cancel, so only the unit survives.
    // Independent oracle: rank counting on each arity-wise chain complex.
    CHECK(p.underlying().chain(2).homology_dims().empty());
    CHECK(p.underlying().chain(3).homology_dims().empty());
    SModule h = operad_homology(p);
    CHECK(h.dim(1) == 1);
    CHECK(h.dim(2) == 0);
    CHECK(h.dim(3) == 0);
}

TEST_CASE("free operad rejects a seed whose derivation does not square to zero") {
    SModule gens;
    gens.add_element(1, "a", 0, 1);
    gens.add_element(1, "g", -1, 1);
    Truncation t = box(1, 2, -2, 0);
    TreeModule probe(gens, t, true);
    int gcor = probe.find(Tree::parse("(l1)"), {1});
    int gg = probe.find(Tree::parse("((l1))"), {1, 1});
    REQUIRE(gcor >= 0);
    REQUIRE(gg >= 0);
    SModuleMap u;
    u.degree = -1;
    SparseMatrix m(probe.module().dim(1), 2);
    m.set_col(0, Vec::unit(gcor));  // d(a) = g
    m.set_col(1, Vec::unit(gg));    // d(g) = g o g, so d(d(a)) != 0
    u.comp[1] = m;
    try {
        FreeOperad f(gens, u, t);
        FAIL("expected the square-zero check to throw");
    } catch (const std::runtime_error &e) {
        CHECK(mentions(e.what(), "square to zero"));
        CHECK(mentions(e.what(), "'a'"));
    }
}

/* ------------- tabulated operads ------------- */

TEST_CASE("tabulated commutative operad passes the axiom check") {
    DgOperad p3 = tabulated_operad(com_data(3), box(3, 4, 0, 0));
    CHECK(p3.axiom_violations().empty());
    // arity 4 exposes genuine three-level associativity checks
    DgOperad p4 = tabulated_operad(com_data(4), box(4, 4, 0, 0));
    CHECK(p4.axiom_violations().empty());
    int m2 = 0;
    Vec comb = p4.compose(3, p4.compose(2, Vec::unit(m2), 0, 2, Vec::unit(m2)), 2, 2, Vec::unit(m2));
    CHECK(comb == Vec::unit(0));  // everything multiplies to m4
}

TEST_CASE("the unit operad as tabulated data passes") {
    OperadData d;
    d.underlying.add_element(1, "1", 0, 0);
    d.unit = Vec::unit(0);
    DgOperad p = tabulated_operad(d, box(3, 1, 0, 0));
    CHECK(p.axiom_violations().empty());
    CHECK(p.compose(1, p.unit(), 0, 1, p.unit()) == p.unit());
}

TEST_CASE("a non-associative table is reported with a three-level witness") {
    OperadData d = com_data(4);
    SparseMatrix bad(1, 1);
    bad.set(0, 0, Rat(2));
    d.comp[std::make_tuple(2, 3, 0)] = bad;  // m2 o_0 m3 = 2 m4
    try {
        tabulated_operad(d, box(4, 4, 0, 0));
        FAIL("expected the axiom check to throw");
    } catch (const std::runtime_error &e) {
        CHECK(mentions(e.what(), "associativity (nested)"));
        CHECK(mentions(e.what(), "'m2'"));
    }
}

TEST_CASE("a broken unit law is reported") {
    OperadData d = com_data(3);
    d.comp[std::make_tuple(2, 1, 0)] = SparseMatrix(1, 1);  // m2 o_0 1 = 0
    try {
        tabulated_operad(d, box(3, 4, 0, 0));
        FAIL("expected the axiom check to throw");
    } catch (const std::runtime_error &e) {
        CHECK(mentions(e.what(), "unit law"));
        CHECK(mentions(e.what(), "'m2'"));
    }
}

/* ------------- endomorphism operads ------------- */

TEST_CASE("endomorphism operad of a point is one-dimensional in every arity") {
    EndOperad e(ChainComplex::sphere(0), box(3, 1, 0, 0));
    for (int n = 0; n <= 3; ++n) CHECK(e.operad().underlying().dim(n) == 1);
    CHECK(e.operad().axiom_violations().empty());
    CHECK(e.operad().compose(2, Vec::unit(0), 1, 2, Vec::unit(0)) == Vec::unit(0));
}

TEST_CASE("endomorphism operad of a two-dimensional space counts elementary maps") {
    ChainComplex c;
    c.set_dim(0, 2);
    EndOperad e(c, box(3, 1, 0, 0));
    // maps choose one output and one input per slot: 2^(n+1)
    CHECK(e.operad().underlying().dim(0) == 2);
    CHECK(e.operad().underlying().dim(1) == 4);
    CHECK(e.operad().underlying().dim(2) == 8);
    CHECK(e.operad().underlying().dim(2, 0) == 8);
    CHECK(e.operad().underlying().dim(3) == 16);

    // the action permutes inputs; in degree 0 there is no sign
    ElementaryMap g{{0, 0}, {{0, 0}, {0, 1}}};
    ElementaryMap gs{{0, 0}, {{0, 1}, {0, 0}}};
    int ig = e.elements().find(2, g), igs = e.elements().find(2, gs);
    REQUIRE(ig >= 0);
    REQUIRE(igs >= 0);
    CHECK(e.operad().underlying().action(2, Perm::adjacent(2, 0)).apply(Vec::unit(ig)) == Vec::unit(igs));

    // composition substitutes: (e0<-e0,e1) o_1 (e1<-e1,e1) matches inputs
    ElementaryMap h{{0, 1}, {{0, 1}, {0, 1}}};
    int ih = e.elements().find(2, h);
    ElementaryMap r{{0, 0}, {{0, 0}, {0, 1}, {0, 1}}};
    int ir = e.elements().find(3, r);
    REQUIRE(ih >= 0);
    REQUIRE(ir >= 0);
    CHECK(e.operad().compose(2, Vec::unit(ig), 1, 2, Vec::unit(ih)) == Vec::unit(ir));
    // mismatched inner output gives zero
    ElementaryMap h2{{0, 0}, {{0, 1}, {0, 1}}};
    int ih2 = e.elements().find(2, h2);
    REQUIRE(ih2 >= 0);
    CHECK(e.operad().compose(2, Vec::unit(ig), 1, 2, Vec::unit(ih2)).is_zero());

    CHECK(e.operad().axiom_violations().empty());
}

TEST_CASE("endomorphism operad of the interval: signs and acyclicity") {
    // degree window wide enough that composites of stored elements never
    // leave it, keeping the truncation quotient exact here
    EndOperad e(ChainComplex::disk(1), box(2, 1, -4, 4));
    const SModule &und = e.operad().underlying();
    CHECK(und.dim(0) == 2);
    CHECK(und.dim(1) == 4);
    CHECK(und.dim(2) == 8);
    // the unit is the identity map, a cycle fixed by composition
    CHECK(und.d(1).apply(e.operad().unit()).is_zero());
    CHECK(e.operad().compose(1, e.operad().unit(), 0, 1, e.operad().unit()) == e.operad().unit());
    CHECK(e.operad().axiom_violations().empty());
    // the hom complex out of a contractible complex is acyclic
    CHECK(und.chain(0).homology_dims().empty());
    CHECK(und.chain(1).homology_dims().empty());
    CHECK(und.chain(2).homology_dims().empty());
    CHECK(operad_homology(e.operad()).components().empty());
}

TEST_CASE("endomorphism bimodule between different complexes") {
    EndModule em = end_module(ChainComplex::sphere(0), ChainComplex::disk(1), box(2, 1, -1, 2));
    // one input choice per slot, two outputs
    CHECK(em.mod.dim(0) == 2);
    CHECK(em.mod.dim(1) == 2);
    CHECK(em.mod.dim(2) == 2);
    CHECK(em.mod.dim(1, 1) == 1);
    CHECK(em.mod.dim(1, 0) == 1);
    em.mod.validate();
    // d sends the degree-1 map to the degree-0 map
    int hi = em.find(1, ElementaryMap{{1, 0}, {{0, 0}}});
    int lo = em.find(1, ElementaryMap{{0, 0}, {{0, 0}}});
    REQUIRE(hi >= 0);
    REQUIRE(lo >= 0);
    CHECK(em.mod.d(1).apply(Vec::unit(hi)) == Vec::unit(lo));
}

/* ------------- pullback operads ------------- */

TEST_CASE("pullback along the identity is the diagonal") {
    ChainComplex q = ChainComplex::sphere(0);
    ChainMap f;
    f.comp[0] = SparseMatrix::identity(1);
    EndPullback pb = end_pullback(q, q, f, box(2, 1, 0, 0));
    // pairs (g, g): one solution per arity
    CHECK(pb.op.underlying().dim(0) == 1);
    CHECK(pb.op.underlying().dim(1) == 1);
    CHECK(pb.op.underlying().dim(2) == 1);
    CHECK(pb.op.underlying().dim(2, 0) == 1);
    CHECK(pb.op.axiom_violations().empty());
}

TEST_CASE("pullback along the zero map is the product in positive arities") {
    ChainComplex q = ChainComplex::sphere(0);
    ChainMap f;  // absent component = zero map
    EndPullback pb = end_pullback(q, q, f, box(2, 1, 0, 0));
    // in arity 0 the empty tensor power of f is the identity of Q, so the
    // constraint still reads g_W = f o g_V = 0; only arities >= 1 see the
    // full product
    CHECK(pb.op.underlying().dim(0) == 1);
    CHECK(pb.op.underlying().dim(1) == 2);
    CHECK(pb.op.underlying().dim(2) == 2);
    CHECK(pb.op.axiom_violations().empty());
}

TEST_CASE("pullback along the boundary inclusion into the interval") {
    // f : S0 -> D1 sending the point to the degree-0 end. By hand, in
    // arity 1: degree 0 pairs (a(x;x), b(w1;w1)+c(w0;w0)) need a = c
    // (dimension 2); degree 1 only d(w1;w0) with constraint d = 0
    // (dimension 0); degree -1 has (0, e(w0;w1)) unconstrained
    // (dimension 1).
    ChainComplex v = ChainComplex::sphere(0), w = ChainComplex::disk(1);
    ChainMap f;
    SparseMatrix f0(1, 1);
    f0.set(0, 0, Rat(1));
    f.comp[0] = f0;
    EndPullback pb = end_pullback(v, w, f, box(1, 1, -2, 2));
    CHECK(pb.op.underlying().dim(1) == 3);
    CHECK(pb.op.underlying().dim(1, 0) == 2);
    CHECK(pb.op.underlying().dim(1, 1) == 0);
    CHECK(pb.op.underlying().dim(1, -1) == 1);
    CHECK(pb.op.axiom_violations().empty());
    // only the pair of identities survives in homology
    SModule h = operad_homology(pb.op);
    CHECK(h.dim(1) == 1);
    CHECK(h.dim(1, 0) == 1);
}

/* ------------- homology ------------- */

TEST_CASE("operad homology with zero differential returns the underlying ranks") {
    DgOperad p = tabulated_operad(com_data(3), box(3, 4, 0, 0));
    SModule h = operad_homology(p);
    CHECK(h.dim(1) == 1);
    CHECK(h.dim(2) == 1);
    CHECK(h.dim(3) == 1);
    CHECK(h.action(3, Perm::adjacent(3, 0)) == SparseMatrix::identity(1));
}

TEST_CASE("operad homology of a contractible arity-one component vanishes") {
    OperadData d;
    d.underlying.add_element(1, "u", 0, 1);
    d.underlying.add_element(1, "v", 1, 1);
    SparseMatrix dm(2, 2);
    dm.set(0, 1, Rat(1));  // d v = u
    d.underlying.set_d(1, dm);
    d.unit = Vec::unit(0);
    // u o u = u, u o v = v o u = v, v o v = 0: Leibniz forces the last one
    SparseMatrix t(2, 4);
    t.set(0, 0, Rat(1));  // (u,u) -> u
    t.set(1, 1, Rat(1));  // (u,v) -> v
    t.set(1, 2, Rat(1));  // (v,u) -> v
    d.comp[std::make_tuple(1, 1, 0)] = t;
    DgOperad p = tabulated_operad(d, box(1, 1, 0, 1));
    SModule h = operad_homology(p);
    CHECK(h.dim(1) == 0);
    CHECK(h.components().empty());
}

/* ------------- universal property ------------- */

TEST_CASE("free operad maps extend generator assignments uniquely") {
    FreeOperad f(one_binary(), SModuleMap{}, box(3, 2, 0, 0));
    DgOperad com = tabulated_operad(com_data(3), box(3, 4, 0, 0));

    SModuleMap phi;
    phi.degree = 0;
    SparseMatrix p2(1, 1);
    p2.set(0, 0, Rat(1));  // mu -> m2
    phi.comp[2] = p2;

    SModuleMap ext = f.extend(com, phi);
    validate_map(f.underlying(), com.underlying(), ext);
    // values: unit to unit, the generator to m2, every binary tree to m3
    CHECK(ext.comp.at(1).col(f.trees().unit_index()) == com.unit());
    CHECK(ext.comp.at(2).col(0) == Vec::unit(0));
    for (int i = 0; i < 3; ++i) CHECK(ext.comp.at(3).col(i) == Vec::unit(0));
}

TEST_CASE("free operad extension is an operad map and restricts to the seed map") {
    FreeOperad f(one_binary(), SModuleMap{}, box(3, 2, 0, 0));
    DgOperad com = tabulated_operad(com_data(3), box(3, 4, 0, 0));
    SModuleMap phi;
    phi.degree = 0;
    SparseMatrix p2(1, 1);
    p2.set(0, 0, Rat(1));
    phi.comp[2] = p2;
    SModuleMap ext = f.extend(com, phi);

    const DgOperad &p = f.operad();
    for (int i = 0; i < 2; ++i) {
        Vec inner = p.compose(2, Vec::unit(0), i, 2, Vec::unit(0));
        Vec lhs;
        for (const auto &[r, c] : inner.entries()) lhs.axpy(c, ext.comp.at(3).col(r));
        Vec rhs = com.compose(2, ext.comp.at(2).col(0), i, 2, ext.comp.at(2).col(0));
        CHECK(lhs == rhs);
    }
    // restriction along the generator inclusion recovers phi
    SModuleMap inc = f.trees().inclusion_of_generators();
    CHECK(ext.comp.at(2).mul(inc.comp.at(2)) == phi.comp.at(2));

    // extending the inclusion into the free operad itself gives the identity
    SModuleMap incphi;
    incphi.degree = 0;
    incphi.comp[2] = inc.comp.at(2);
    SModuleMap self = f.extend(p, incphi);
    for (const auto &[n, cn] : f.underlying().components())
        CHECK(self.comp.at(n) == SparseMatrix::identity((int)cn.basis.size()));
}

/* ------------- derivations and seeds ------------- */

TEST_CASE("derivations are determined by and recover their seeds") {
    SModule gens;
    gens.add_element(1, "e", 1, 1);
    gens.add_element(2, "b", 1, 1);
    gens.add_element(2, "c", 0, 1);
    Truncation t = box(3, 2, 0, 2);
    TreeModule tm(gens, t, true);
    HomComplex hc = hom_complex(gens, tm.module(), t);
    REQUIRE(hc.basis.count(-1));
    int dim = (int)hc.basis.at(-1).size();
    REQUIRE(dim >= 1);

    std::mt19937 rng(20240811);
    std::uniform_int_distribution<int> coeff(-3, 3);
    Vec c1, c2;
    for (int j = 0; j < dim; ++j) c1.add(j, Rat(coeff(rng)));
    for (int j = 0; j < dim; ++j) c2.add(j, Rat(coeff(rng)));
    c2.add(0, Rat(1));  // ensure the two seeds differ
    SModuleMap u1 = hc.assemble(-1, c1, gens, tm.module());
    SModuleMap u2 = hc.assemble(-1, c2, gens, tm.module());

    SModuleMap d1 = tm.derivation(u1), d2 = tm.derivation(u2);
    SModuleMap inc = tm.inclusion_of_generators();
    for (const auto &[n, cn] : gens.components()) {
        SparseMatrix got1 = d1.at_or_zero(n, tm.module().dim(n), tm.module().dim(n))
                                .mul(inc.at_or_zero(n, tm.module().dim(n), (int)cn.basis.size()));
        CHECK(got1 == u1.at_or_zero(n, tm.module().dim(n), (int)cn.basis.size()));
        SparseMatrix got2 = d2.at_or_zero(n, tm.module().dim(n), tm.module().dim(n))
                                .mul(inc.at_or_zero(n, tm.module().dim(n), (int)cn.basis.size()));
        CHECK(got2 == u2.at_or_zero(n, tm.module().dim(n), (int)cn.basis.size()));
    }
    // distinct seeds give distinct derivations, and the assignment is linear
    bool differ = false;
    for (const auto &[n, m] : d1.comp)
        if (!(m == d2.at_or_zero(n, m.rows(), m.cols()))) differ = true;
    CHECK(differ);
    Vec csum = c1;
    csum.axpy(Rat(1), c2);
    SModuleMap dsum = tm.derivation(hc.assemble(-1, csum, gens, tm.module()));
    for (const auto &[n, m] : dsum.comp)
        CHECK(m == d1.at_or_zero(n, m.rows(), m.cols()).add(d2.at_or_zero(n, m.rows(), m.cols())));
}

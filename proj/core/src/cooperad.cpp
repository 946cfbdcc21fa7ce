#include "opal/cooperad.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "opal/graded.hpp"

namespace opal {

namespace {

SparseMatrix submatrix(const SparseMatrix &m, const std::vector<int> &rows,
                       const std::vector<int> &cols) {
    std::map<int, int> colpos;
    for (int j = 0; j < (int)cols.size(); ++j) colpos[cols[j]] = j;
    SparseMatrix out((int)rows.size(), (int)cols.size());
    for (int r = 0; r < (int)rows.size(); ++r)
        for (const auto &[c, v] : m.row(rows[r]).entries()) {
            auto it = colpos.find(c);
            if (it != colpos.end()) out.set(r, it->second, v);
        }
    return out;
}

SparseMatrix blockdiag(const SparseMatrix &a, const SparseMatrix &b) {
    SparseMatrix m(a.rows() + b.rows(), a.cols() + b.cols());
    for (int r = 0; r < a.rows(); ++r)
        for (const auto &[c, v] : a.row(r).entries()) m.set(r, c, v);
    for (int r = 0; r < b.rows(); ++r)
        for (const auto &[c, v] : b.row(r).entries()) m.set(a.rows() + r, a.cols() + c, v);
    return m;
}

int first_diff_col(const SparseMatrix &a, const SparseMatrix &b) {
    int cols = std::max(a.cols(), b.cols());
    for (int j = 0; j < cols; ++j) {
        Vec ca = j < a.cols() ? a.col(j) : Vec();
        Vec cb = j < b.cols() ? b.col(j) : Vec();
        if (!(ca == cb)) return j;
    }
    return 0;
}

/* The underlying module with the unit basis element removed. The arity-1
   differential is restricted accordingly; other data is copied. */
SModule reduced_of(const SModule &und, int unit_index) {
    SModule r;
    for (const auto &[a, comp] : und.components())
        for (int i = 0; i < (int)comp.basis.size(); ++i) {
            if (a == 1 && i == unit_index) continue;
            const auto &e = comp.basis[i];
            r.add_element(a, e.name, e.degree, e.weight);
        }
    for (const auto &[a, comp] : und.components()) {
        if (!r.has(a)) continue;
        SparseMatrix dm = und.d(a);
        if (a == 1) {
            std::vector<int> keep;
            for (int i = 0; i < (int)comp.basis.size(); ++i)
                if (i != unit_index) keep.push_back(i);
            r.set_d(1, submatrix(dm, keep, keep));
        } else {
            r.set_d(a, dm);
        }
        if (a >= 2)
            for (int j = 0; j + 1 < a; ++j)
                r.set_gen_action(a, j, und.action(a, Perm::adjacent(a, j)));
    }
    return r;
}

/* Same, after checking the coaugmented shape: the unit is an arity-1 basis
   element of degree 0 and weight 0, and every other basis element has
   weight >= 1 (structural conilpotency). */
SModule reduced_of_checked(const SModule &und, int unit_index) {
    if (!und.has(1) || unit_index < 0 || unit_index >= und.dim(1))
        throw std::invalid_argument("cooperad: the unit index is not an arity-1 basis index");
    const auto &ue = und.elt(1, unit_index);
    if (ue.degree != 0 || ue.weight != 0)
        throw std::invalid_argument("cooperad: the unit must have degree 0 and weight 0");
    for (const auto &[a, comp] : und.components())
        for (int i = 0; i < (int)comp.basis.size(); ++i) {
            if (a == 1 && i == unit_index) continue;
            if (comp.basis[i].weight < 1)
                throw std::invalid_argument("non-conilpotent cooperad: reduced basis element '" +
                                            comp.basis[i].name + "' has weight 0");
        }
    return reduced_of(und, unit_index);
}

/* One term of the complete decomposition of a labelled tree: a shape whose
   leaves carry the original leaf labels and whose vertices (tags = tensor
   positions) carry connected parts as vectors in tm's basis, with the
   coefficient relating the tag-ordered tensor of the parts to the
   depth-first tensor of the original vertex labels. */
struct PartTerm {
    Rat c;
    PTree shape;
    std::vector<Vec> labels;
};

PTree remap_shape(const PTree &p, const std::vector<int> &block, int tagoff) {
    if (p.leaf) return PTree::make_leaf(block[p.label]);
    std::vector<PTree> kids;
    kids.reserve(p.kids.size());
    for (const auto &k : p.kids) kids.push_back(remap_shape(k, block, tagoff));
    PTree r = PTree::make_vertex(std::move(kids));
    r.tag = p.tag + tagoff;
    return r;
}

/* All ways to break the labelled tree (t, labels) into a tree of connected
   parts: one term per family of iterated root-containing splits. Labels are
   single generator indices of tm in depth-first order. */
std::vector<PartTerm> partition_terms(const TreeModule &tm, const Tree &t,
                                      const std::vector<int> &labels) {
    std::vector<PartTerm> out;
    int nv = t.vertex_count();
    std::vector<int> vdeg(nv);
    for (int v = 0; v < nv; ++v) vdeg[v] = tm.generators().elt(t.arity(v), labels[v]).degree;

    for (const auto &L : parent_closed_subsets(t)) {
        if (L.empty()) continue;
        Split sp = split_at(t, L);
        std::vector<Vec> ulab(L.size());
        for (int r = 0; r < (int)L.size(); ++r) ulab[r] = Vec::unit(labels[L[r]]);
        Vec uv = tm.embed(sp.upper_naive, ulab);
        if (uv.is_zero()) continue;

        int k = (int)sp.lower.size();
        std::vector<int> images(nv, -1);
        int pos = 0;
        for (int v : L) images[v] = pos++;
        for (int j = 0; j < k; ++j)
            for (int v : sp.lower_sets[j]) images[v] = pos++;
        Rat k1 = koszul_sign(Perm::from_images(images), vdeg);

        // decompose each nontrivial branch recursively
        std::vector<std::vector<PartTerm>> bterms(k);
        bool dead = false;
        for (int j = 0; j < k && !dead; ++j) {
            if (sp.lower[j].is_trivial()) {
                PartTerm triv;
                triv.c = Rat(1);
                triv.shape = PTree::make_leaf(0);
                bterms[j].push_back(std::move(triv));
                continue;
            }
            const std::vector<int> &set = sp.lower_sets[j];
            int s = (int)set.size();
            auto cs = Tree::canonicalize_slots(sp.lower_naive[j]);
            std::vector<int> bdeg(s);
            std::vector<Vec> blab(s);
            for (int r = 0; r < s; ++r) {
                int gv = set[r];
                bdeg[r] = vdeg[gv];
                Vec base = Vec::unit(labels[gv]);
                blab[r] = cs.slot_perms[r].is_identity()
                              ? base
                              : tm.generators().action(t.arity(gv), cs.slot_perms[r]).apply(base);
            }
            Rat rs = koszul_sign(cs.vperm, bdeg);
            Perm inv = cs.vperm.inverse();
            std::vector<const std::map<int, Rat> *> sup(s);
            bool empty_support = false;
            for (int df = 0; df < s; ++df) {
                sup[df] = &blab[inv(df)].entries();
                if (sup[df]->empty()) empty_support = true;
            }
            if (!empty_support) {
                std::vector<std::map<int, Rat>::const_iterator> its(s);
                for (int df = 0; df < s; ++df) its[df] = sup[df]->begin();
                std::vector<int> lab2(s);
                while (true) {
                    Rat c2 = rs;
                    for (int df = 0; df < s; ++df) {
                        lab2[df] = its[df]->first;
                        c2 *= its[df]->second;
                    }
                    for (PartTerm &bt : partition_terms(tm, cs.tree, lab2)) {
                        bt.c *= c2;
                        bterms[j].push_back(std::move(bt));
                    }
                    int df = s - 1;
                    while (df >= 0 && ++its[df] == sup[df]->end()) {
                        its[df] = sup[df]->begin();
                        --df;
                    }
                    if (df < 0) break;
                }
            }
            if (bterms[j].empty()) dead = true;
        }
        if (dead) continue;

        // combine one term choice per branch under the root part
        std::vector<int> choice(k, 0);
        while (true) {
            Rat c = k1;
            std::vector<PTree> kids(k);
            std::vector<Vec> lbs;
            lbs.push_back(uv);
            int tagoff = 1;
            for (int j = 0; j < k; ++j) {
                const PartTerm &bt = bterms[j][choice[j]];
                if (sp.lower[j].is_trivial()) {
                    kids[j] = PTree::make_leaf(sp.blocks[j][0]);
                    continue;
                }
                c *= bt.c;
                kids[j] = remap_shape(bt.shape, sp.blocks[j], tagoff);
                for (const Vec &lv : bt.labels) lbs.push_back(lv);
                tagoff += (int)bt.labels.size();
            }
            PTree shape = PTree::make_vertex(std::move(kids));
            shape.tag = 0;
            PartTerm term;
            term.c = c;
            term.shape = std::move(shape);
            term.labels = std::move(lbs);
            out.push_back(std::move(term));
            int j = k - 1;
            while (j >= 0 && ++choice[j] == (int)bterms[j].size()) {
                choice[j] = 0;
                --j;
            }
            if (j < 0) break;
        }
    }
    return out;
}

/* The complete decomposition of a labelled-tree module into the
   labelled-tree module `target` on its reduced part (tm without the unit):
   each basis tree maps to the sum of its partitions into connected parts. */
SModuleMap build_partition_delta(const TreeModule &tm, const TreeModule &target) {
    int u = tm.unit_index();
    SModuleMap out;
    out.degree = 0;
    for (const auto &[n, comp] : tm.module().components()) {
        int dim = (int)comp.basis.size();
        int rows = target.module().has(n) ? target.module().dim(n) : 0;
        SparseMatrix m(rows, dim);
        for (int i = 0; i < dim; ++i) {
            if (tm.is_unit(n, i)) {
                m.set_col(i, Vec::unit(target.unit_index()));
                continue;
            }
            const LabelledTree &lt = tm.at(n, i);
            Vec col;
            for (const PartTerm &term : partition_terms(tm, lt.tree, lt.labels)) {
                std::map<int, int> art;  // tag -> part arity
                std::function<void(const PTree &)> walk = [&](const PTree &p) {
                    if (p.leaf) return;
                    art[p.tag] = (int)p.kids.size();
                    for (const auto &kk : p.kids) walk(kk);
                };
                walk(term.shape);
                std::vector<Vec> red(term.labels.size());
                for (int q = 0; q < (int)term.labels.size(); ++q) {
                    int a = art.at(q);
                    for (const auto &[bi, cv] : term.labels[q].entries()) {
                        int ri = bi;
                        if (a == 1 && u >= 0) {
                            if (bi == u)
                                throw std::logic_error(
                                    "complete decomposition: a connected part hit the unit");
                            ri = bi < u ? bi : bi - 1;
                        }
                        red[q].set(ri, cv);
                    }
                }
                col.axpy(term.c, target.embed(term.shape, red));
            }
            m.set_col(i, col);
        }
        out.comp[n] = m;
    }
    return out;
}

}  // namespace

CurvedCooperad::CurvedCooperad(SModule underlying, int unit_index, SModuleMap delta, Vec curvature,
                               Truncation trunc)
    : und_(std::move(underlying)),
      unit_(unit_index),
      theta_(std::move(curvature)),
      trunc_(trunc),
      trees_(reduced_of_checked(und_, unit_), trunc_),
      delta_(std::move(delta)) {
    if (delta_.degree != 0)
        throw std::invalid_argument("cooperad: the complete decomposition must have degree 0");
    const SModule &T = trees_.module();
    std::map<int, SparseMatrix> norm;
    for (const auto &[n, comp] : und_.components()) {
        int rows = T.has(n) ? T.dim(n) : 0;
        int cols = (int)comp.basis.size();
        auto it = delta_.comp.find(n);
        if (it == delta_.comp.end()) {
            norm[n] = SparseMatrix(rows, cols);
        } else {
            if (it->second.rows() != rows || it->second.cols() != cols)
                throw std::invalid_argument("cooperad: decomposition component at arity " +
                                            std::to_string(n) + " has the wrong shape");
            norm[n] = it->second;
        }
    }
    for (const auto &[n, m] : delta_.comp)
        if (!und_.has(n) && !m.is_zero())
            throw std::invalid_argument("cooperad: decomposition at arity " + std::to_string(n) +
                                        " without basis elements");
    delta_.comp = std::move(norm);
    for (const auto &[i, v] : theta_.entries()) {
        (void)v;
        if (i < 0 || i >= und_.dim(1))
            throw std::invalid_argument("cooperad: curvature support outside the arity-1 basis");
    }
}

int CurvedCooperad::reduced_index(int arity, int i) const {
    if (arity != 1) return i;
    if (i == unit_) return -1;
    return i < unit_ ? i : i - 1;
}

int CurvedCooperad::ambient_index(int arity, int r) const {
    if (arity != 1) return r;
    return r < unit_ ? r : r + 1;
}

Vec CurvedCooperad::to_reduced(int arity, const Vec &x) const {
    Vec out;
    for (const auto &[i, c] : x.entries()) {
        int r = reduced_index(arity, i);
        if (r >= 0) out.set(r, c);
    }
    return out;
}

Vec CurvedCooperad::from_reduced(int arity, const Vec &x) const {
    Vec out;
    for (const auto &[r, c] : x.entries()) out.set(ambient_index(arity, r), c);
    return out;
}

SModuleMap CurvedCooperad::two_level(const Composite &cc) const {
    SModuleMap out;
    out.degree = 0;
    for (const auto &[n, comp] : und_.components()) {
        int dim = (int)comp.basis.size();
        int rows = cc.module().has(n) ? cc.module().dim(n) : 0;
        SparseMatrix m(rows, dim);
        for (int i = 0; i < dim; ++i) {
            if (n == 1 && i == unit_) {
                m.set_col(i, cc.express(1, 1, {{0}}, unit_, {unit_}));
                continue;
            }
            Vec col;
            std::vector<int> all(n);
            for (int l = 0; l < n; ++l) all[l] = l;
            col += cc.express(n, 1, {all}, unit_, {i});
            Vec dc = delta_.comp.at(n).col(i);
            for (const auto &[b, cf] : dc.entries()) {
                if (trees_.is_unit(n, b)) continue;
                const LabelledTree &lt = trees_.at(n, b);
                const Tree &t = lt.tree;
                bool depth2 = true;
                for (int v = 1; v < t.vertex_count() && depth2; ++v)
                    if (t.parent(v) != 0) depth2 = false;
                if (!depth2) continue;
                int k = t.arity(0);
                std::vector<std::vector<int>> blocks(k);
                std::vector<int> ws(k);
                for (int s = 0; s < k; ++s) {
                    const Tree::Slot &sl = t.slots(0)[s];
                    if (sl.is_leaf) {
                        blocks[s] = {sl.id};
                        ws[s] = unit_;
                    } else {
                        for (const Tree::Slot &cl : t.slots(sl.id)) blocks[s].push_back(cl.id);
                        ws[s] = ambient_index(t.arity(sl.id), lt.labels[sl.id]);
                    }
                }
                col += cc.express(n, k, blocks, ambient_index(k, lt.labels[0]), ws, cf);
            }
            m.set_col(i, col);
        }
        out.comp[n] = m;
    }
    return out;
}

std::vector<CurvedCooperad::Cut> CurvedCooperad::cuts(int n, int i) const {
    std::vector<Cut> out;
    auto it = delta_.comp.find(n);
    if (it == delta_.comp.end()) return out;
    Vec dc = it->second.col(i);
    for (const auto &[b, cf] : dc.entries()) {
        if (trees_.is_unit(n, b)) continue;
        const LabelledTree &lt = trees_.at(n, b);
        if (lt.tree.vertex_count() != 2) continue;
        Cut cut;
        cut.k = lt.tree.arity(0);
        cut.m = lt.tree.arity(1);
        cut.upper = ambient_index(cut.k, lt.labels[0]);
        cut.lower = ambient_index(cut.m, lt.labels[1]);
        cut.coeff = cf;
        cut.blocks.assign(cut.k, {});
        for (int s = 0; s < cut.k; ++s) {
            const Tree::Slot &sl = lt.tree.slots(0)[s];
            if (sl.is_leaf) {
                cut.blocks[s] = {sl.id};
            } else {
                cut.slot = s;
                for (const Tree::Slot &cl : lt.tree.slots(1)) cut.blocks[s].push_back(cl.id);
            }
        }
        out.push_back(std::move(cut));
    }
    return out;
}

std::string CooperadReport::text() const {
    std::ostringstream os;
    if (ok()) {
        os << "curved cooperad axioms hold on " << cells.size() << " basis cell(s)\n";
        for (const auto &[a, d, w] : cells)
            os << "  arity " << a << "  degree " << d << "  weight " << w << "\n";
    } else {
        os << violations.size() << " violation(s)\n";
        for (const auto &v : violations) os << "  " << v << "\n";
    }
    return os.str();
}

CooperadReport check_curved_axioms(const CurvedCooperad &c) {
    CooperadReport rep;
    const SModule &C = c.underlying();
    const SModule &T = c.trees().module();
    const Truncation &tr = c.truncation();

    std::set<std::tuple<int, int, int>> cells;
    for (const auto &[n, comp] : C.components())
        for (const auto &e : comp.basis) cells.insert({n, e.degree, e.weight});
    rep.cells.assign(cells.begin(), cells.end());

    try {
        C.validate(false);
    } catch (const std::exception &e) {
        rep.violations.push_back(std::string("underlying module: ") + e.what());
    }

    {
        SparseMatrix d1 = C.d(1);
        if (!d1.col(c.unit_index()).is_zero())
            rep.violations.push_back("the coderivation does not kill the unit");
        for (const auto &[i, v] : c.curvature().entries()) {
            (void)v;
            if (C.elt(1, i).degree != 2)
                rep.violations.push_back("curvature pairs with '" + C.elt(1, i).name +
                                         "', which does not have degree 2");
        }
        for (int j = 0; j < C.dim(1); ++j) {
            Rat acc(0);
            for (const auto &[r, v] : d1.col(j).entries()) acc += c.curvature().at(r) * v;
            if (!acc.is_zero())
                rep.violations.push_back("theta after d is nonzero on '" + C.elt(1, j).name + "'");
        }
    }

    try {
        validate_map(C, T, c.delta());
    } catch (const std::exception &e) {
        rep.violations.push_back(std::string("complete decomposition: ") + e.what());
    }

    if (!(c.delta().comp.at(1).col(c.unit_index()) == Vec::unit(c.trees().unit_index())))
        rep.violations.push_back("the decomposition of the unit is not the bare leaf");
    for (const auto &[n, comp] : C.components()) {
        const SparseMatrix &dl = c.delta().comp.at(n);
        std::map<int, int> corolla_at;  // reduced index -> corolla basis index
        if (T.has(n))
            for (int b = 0; b < T.dim(n); ++b) {
                if (c.trees().is_unit(n, b)) continue;
                const LabelledTree &lt = c.trees().at(n, b);
                if (lt.tree.vertex_count() == 1) corolla_at[lt.labels[0]] = b;
            }
        for (int i = 0; i < (int)comp.basis.size(); ++i) {
            if (n == 1 && i == c.unit_index()) continue;
            Vec dc = dl.col(i);
            if (n == 1 && !dc.at(c.trees().unit_index()).is_zero())
                rep.violations.push_back("counit fails on '" + comp.basis[i].name +
                                         "': the decomposition hits the bare leaf");
            int ri = c.reduced_index(n, i);
            auto it = corolla_at.find(ri);
            if (it == corolla_at.end())
                rep.violations.push_back("the corolla of '" + comp.basis[i].name +
                                         "' falls outside the truncation");
            else if (!(dc.at(it->second) == Rat(1)))
                rep.violations.push_back("the decomposition of '" + comp.basis[i].name +
                                         "' has corolla coefficient " + dc.at(it->second).str() +
                                         " instead of 1");
            for (const auto &[rj, b] : corolla_at)
                if (rj != ri && !dc.at(b).is_zero())
                    rep.violations.push_back("the decomposition of '" + comp.basis[i].name +
                                             "' hits the corolla of another basis element");
        }
    }

    Composite ccC(C, C, tr);
    Composite ccT(T, T, tr);
    SModuleMap Dl = c.two_level(ccC);
    SModuleMap fdT = c.trees().full_delta(ccT, true);
    SModuleMap dd = compose_prod_map(C, C, T, T, c.delta(), c.delta(), tr);
    for (const auto &[n, comp] : C.components()) {
        int dim = (int)comp.basis.size();
        int tdim = T.has(n) ? T.dim(n) : 0;
        int ccTdim = ccT.module().has(n) ? ccT.module().dim(n) : 0;
        int ccCdim = ccC.module().has(n) ? ccC.module().dim(n) : 0;

        SparseMatrix lhs = fdT.at_or_zero(n, ccTdim, tdim).mul(c.delta().comp.at(n));
        SparseMatrix rhs = dd.at_or_zero(n, ccTdim, ccCdim).mul(Dl.comp.at(n));
        if (!(lhs == rhs))
            rep.violations.push_back("coassociativity (the decomposition is not a morphism to the "
                                     "cofree cooperad) fails on '" +
                                     comp.basis[first_diff_col(lhs, rhs)].name + "'");

        SparseMatrix dcc(ccCdim, ccCdim);
        if (ccC.module().has(n)) dcc = ccC.module().d(n);
        SparseMatrix lhs2 = dcc.mul(Dl.comp.at(n));
        SparseMatrix rhs2 = Dl.comp.at(n).mul(C.d(n));
        if (!(lhs2 == rhs2))
            rep.violations.push_back("the co-Leibniz rule fails on '" +
                                     comp.basis[first_diff_col(lhs2, rhs2)].name + "'");

        SparseMatrix D2 = C.d(n).mul(C.d(n));
        SparseMatrix R(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (const auto &cut : c.cuts(n, i)) {
                if (cut.k == 1) R.add_to(cut.lower, i, cut.coeff * c.curvature().at(cut.upper));
                if (cut.m == 1) R.add_to(cut.upper, i, -(cut.coeff * c.curvature().at(cut.lower)));
            }
        if (!(D2 == R))
            rep.violations.push_back("the curvature identity fails on '" +
                                     comp.basis[first_diff_col(D2, R)].name + "'");
    }
    return rep;
}

CofreeCooperad cofree_cooperad(const SModule &cogens, const SModuleMap &seed, const Vec &curvature,
                               const Truncation &trunc) {
    if (seed.degree != -1)
        throw std::invalid_argument("cofree cooperad: the seed must have degree -1");
    TreeModule trees(cogens, trunc, true);
    SModule und = trees.module();
    SModuleMap cod = trees.coderivation(seed);
    for (const auto &[n, m] : cod.comp) und.set_d(n, m);
    TreeModule target(reduced_of(und, trees.unit_index()), trunc);
    SModuleMap delta = build_partition_delta(trees, target);
    int unit = trees.unit_index();
    CurvedCooperad coop(std::move(und), unit, std::move(delta), curvature, trunc);
    return CofreeCooperad{std::move(trees), seed, std::move(coop)};
}

CurvedCooperad square_zero_cooperad(const SModule &v, const Vec &curvature,
                                    const Truncation &trunc) {
    SModule und;
    und.add_element(1, "1", 0, 0);
    for (const auto &[a, comp] : v.components())
        for (const auto &e : comp.basis) und.add_element(a, e.name, e.degree, e.weight);
    for (const auto &[a, comp] : v.components()) {
        if (comp.basis.empty()) continue;
        int n = (int)comp.basis.size();
        SparseMatrix dv = v.d(a);
        if (a == 1) {
            SparseMatrix dm(n + 1, n + 1);
            for (int r = 0; r < n; ++r)
                for (const auto &[cidx, val] : dv.row(r).entries()) dm.set(r + 1, cidx + 1, val);
            und.set_d(1, dm);
        } else {
            und.set_d(a, dv);
        }
        if (a >= 2)
            for (int j = 0; j + 1 < a; ++j)
                und.set_gen_action(a, j, v.action(a, Perm::adjacent(a, j)));
    }
    TreeModule target(reduced_of_checked(und, 0), trunc);
    SModuleMap delta;
    delta.degree = 0;
    for (const auto &[a, comp] : und.components()) {
        int dim = (int)comp.basis.size();
        int rows = target.module().has(a) ? target.module().dim(a) : 0;
        SparseMatrix m(rows, dim);
        for (int i = 0; i < dim; ++i) {
            if (a == 1 && i == 0) {
                m.set_col(i, Vec::unit(target.unit_index()));
                continue;
            }
            int b = target.find(Tree::corolla(a), {a == 1 ? i - 1 : i});
            if (b < 0)
                throw std::invalid_argument("square-zero cooperad: element '" +
                                            comp.basis[i].name + "' falls outside the truncation");
            m.set_col(i, Vec::unit(b));
        }
        delta.comp[a] = m;
    }
    return CurvedCooperad(std::move(und), 0, std::move(delta), curvature, trunc);
}

const SparseMatrix *Filtration::span(int n, int arity) const {
    if (n < 0 || levels.empty()) return nullptr;
    if (n > top()) n = top();
    auto it = levels[n].find(arity);
    return it == levels[n].end() ? nullptr : &it->second;
}

bool Filtration::contains(int n, int arity, const Vec &x) const {
    if (x.is_zero()) return true;
    const SparseMatrix *s = span(n, arity);
    if (!s || s->cols() == 0) return false;
    return s->solve(x).has_value();
}

std::optional<int> Filtration::level_of(int arity, const Vec &x) const {
    for (int q = 0; q <= top(); ++q)
        if (contains(q, arity, x)) return q;
    return std::nullopt;
}

Filtration coradical_filtration(const CurvedCooperad &c) {
    const SModule &C = c.underlying();
    const SModule &T = c.trees().module();
    int maxv = 1;
    for (const auto &[n, comp] : T.components())
        for (int b = 0; b < (int)comp.basis.size(); ++b)
            if (!c.trees().is_unit(n, b))
                maxv = std::max(maxv, c.trees().at(n, b).tree.vertex_count());

    Filtration f;
    for (int q = 0;; ++q) {
        std::map<int, SparseMatrix> lvl;
        bool full = true;
        int total = 0;
        for (const auto &[n, comp] : C.components()) {
            int dim = (int)comp.basis.size();
            std::vector<int> deep;  // decomposition rows with more than q vertices
            if (T.has(n))
                for (int b = 0; b < T.dim(n); ++b) {
                    int vc =
                        c.trees().is_unit(n, b) ? 0 : c.trees().at(n, b).tree.vertex_count();
                    if (vc > q) deep.push_back(b);
                }
            std::vector<int> allc(dim);
            for (int j = 0; j < dim; ++j) allc[j] = j;
            SparseMatrix K = submatrix(c.delta().comp.at(n), deep, allc);
            std::vector<Vec> ker = K.kernel_basis();
            SparseMatrix S(dim, (int)ker.size());
            for (int j = 0; j < (int)ker.size(); ++j) S.set_col(j, ker[j]);
            if ((int)ker.size() < dim) full = false;
            total += (int)ker.size();
            lvl[n] = std::move(S);
        }
        if (q == 0) {
            bool unit_line = total == 1;
            if (unit_line) {
                auto it = lvl.find(1);
                unit_line = it != lvl.end() && it->second.cols() == 1;
                if (unit_line) {
                    Vec one = it->second.col(0);
                    unit_line = one.support_size() == 1 && !one.at(c.unit_index()).is_zero();
                }
            }
            if (!unit_line)
                throw std::runtime_error(
                    "coradical filtration: the zeroth level is not the unit line, so the "
                    "decomposition is not conilpotent");
        }
        f.levels.push_back(std::move(lvl));
        if (full) break;
        if (q > maxv)
            throw std::runtime_error("coradical filtration fails to exhaust the module");
    }
    return f;
}

std::vector<std::string> check_admissible(const CurvedCooperad &c, const Filtration &f) {
    std::vector<std::string> out;
    const SModule &C = c.underlying();
    if (f.levels.empty()) {
        out.push_back("the filtration has no levels");
        return out;
    }

    for (const auto &[n, comp] : C.components()) {
        (void)comp;
        const SparseMatrix *s0 = f.span(0, n);
        int r = s0 ? s0->rank() : 0;
        if (n == 1) {
            if (r != 1 || !f.contains(0, 1, Vec::unit(c.unit_index())))
                out.push_back("level 0 at arity 1 is not the unit line");
        } else if (r != 0) {
            out.push_back("level 0 at arity " + std::to_string(n) + " is nonzero");
        }
    }

    for (const auto &[n, comp] : C.components()) {
        int dim = (int)comp.basis.size();
        SparseMatrix dn = C.d(n);
        for (int q = 0; q <= f.top(); ++q) {
            const SparseMatrix *s = f.span(q, n);
            if (!s) continue;
            for (int j = 0; j < s->cols(); ++j)
                if (q < f.top() && !f.contains(q + 1, n, s->col(j))) {
                    out.push_back("the filtration is not increasing at level " +
                                  std::to_string(q) + ", arity " + std::to_string(n));
                    break;
                }
            for (int j = 0; j < s->cols(); ++j)
                if (!f.contains(q, n, dn.apply(s->col(j)))) {
                    out.push_back("the coderivation leaves level " + std::to_string(q) +
                                  " at arity " + std::to_string(n));
                    break;
                }
        }
        const SparseMatrix *stop = f.span(f.top(), n);
        if ((stop ? stop->rank() : 0) != dim)
            out.push_back("the filtration does not exhaust arity " + std::to_string(n));
    }

    Composite cc(C, C, c.truncation());
    SModuleMap Dl = c.two_level(cc);
    std::map<int, std::vector<std::optional<int>>> lev;
    for (const auto &[n, comp] : C.components()) {
        lev[n].resize(comp.basis.size());
        for (int i = 0; i < (int)comp.basis.size(); ++i) lev[n][i] = f.level_of(n, Vec::unit(i));
    }
    for (const auto &[n, comp] : C.components()) {
        (void)comp;
        for (int q = 0; q <= f.top(); ++q) {
            const SparseMatrix *s = f.span(q, n);
            if (!s) continue;
            bool flagged = false;
            for (int j = 0; j < s->cols() && !flagged; ++j) {
                Vec Dx = Dl.comp.at(n).apply(s->col(j));
                for (const auto &[bi, cf] : Dx.entries()) {
                    (void)cf;
                    auto summands = cc.expand(n, bi);
                    if (summands.empty()) continue;
                    const Composite::Summand &sm = summands.front();
                    bool unknown = false;
                    int sum = 0;
                    auto level_at = [&](int arity, int idx) {
                        auto it = lev.find(arity);
                        if (it == lev.end() || !it->second[idx]) {
                            unknown = true;
                            return 0;
                        }
                        return *it->second[idx];
                    };
                    sum += level_at(sm.k, sm.va);
                    for (int bj = 0; bj < (int)sm.ws.size(); ++bj)
                        sum += level_at((int)sm.blocks[bj].size(), sm.ws[bj]);
                    if (unknown) {
                        out.push_back("a two-level factor escapes the filtration at arity " +
                                      std::to_string(n));
                        flagged = true;
                        break;
                    }
                    if (sum > q) {
                        out.push_back("a two-level term of a level-" + std::to_string(q) +
                                      " element at arity " + std::to_string(n) +
                                      " has factor levels summing to " + std::to_string(sum));
                        flagged = true;
                        break;
                    }
                }
            }
        }
    }
    return out;
}

std::vector<std::string> check_cooperad_morphism(const CurvedCooperad &src,
                                                 const CurvedCooperad &tgt, const SModuleMap &f) {
    std::vector<std::string> out;
    const SModule &Cs = src.underlying();
    const SModule &Ct = tgt.underlying();
    if (f.degree != 0) {
        out.push_back("a cooperad morphism must have degree 0");
        return out;
    }
    try {
        validate_map(Cs, Ct, f);
    } catch (const std::exception &e) {
        out.push_back(std::string("map structure: ") + e.what());
    }

    SparseMatrix f1 = f.at_or_zero(1, Ct.dim(1), Cs.dim(1));
    if (!(f1.col(src.unit_index()) == Vec::unit(tgt.unit_index())))
        out.push_back("the unit is not preserved");
    for (int j = 0; j < Cs.dim(1); ++j) {
        if (j == src.unit_index()) continue;
        if (!f1.col(j).at(tgt.unit_index()).is_zero())
            out.push_back("the counit is not preserved on '" + Cs.elt(1, j).name + "'");
    }

    for (const auto &[n, comp] : Cs.components()) {
        int rows = Ct.has(n) ? Ct.dim(n) : 0;
        SparseMatrix fn = f.at_or_zero(n, rows, (int)comp.basis.size());
        SparseMatrix dt(rows, rows);
        if (Ct.has(n)) dt = Ct.d(n);
        SparseMatrix lhs = fn.mul(Cs.d(n));
        SparseMatrix rhs = dt.mul(fn);
        if (!(lhs == rhs))
            out.push_back("the coderivations do not commute with the map on '" +
                          comp.basis[first_diff_col(lhs, rhs)].name + "'");
    }

    for (int j = 0; j < Cs.dim(1); ++j) {
        Rat acc(0);
        for (const auto &[i, v] : f1.col(j).entries()) acc += tgt.curvature().at(i) * v;
        if (!(acc == src.curvature().at(j)))
            out.push_back("the curvature is not pulled back on '" + Cs.elt(1, j).name + "'");
    }

    SModuleMap fbar;
    fbar.degree = 0;
    for (const auto &[a, comp] : Cs.components()) {
        int sdim = (int)comp.basis.size();
        int srd = src.reduced().has(a) ? src.reduced().dim(a) : 0;
        int trd = tgt.reduced().has(a) ? tgt.reduced().dim(a) : 0;
        SparseMatrix fn = f.at_or_zero(a, Ct.has(a) ? Ct.dim(a) : 0, sdim);
        SparseMatrix m(trd, srd);
        for (int rj = 0; rj < srd; ++rj)
            m.set_col(rj, tgt.to_reduced(a, fn.col(src.ambient_index(a, rj))));
        fbar.comp[a] = m;
    }
    SModuleMap Tf = tree_map_of_labels(src.trees(), tgt.trees(), fbar);
    for (const auto &[n, comp] : Cs.components()) {
        int sdim = (int)comp.basis.size();
        int std_ = src.trees().module().has(n) ? src.trees().module().dim(n) : 0;
        int ttd = tgt.trees().module().has(n) ? tgt.trees().module().dim(n) : 0;
        SparseMatrix fn = f.at_or_zero(n, Ct.has(n) ? Ct.dim(n) : 0, sdim);
        SparseMatrix lhs = tgt.delta().at_or_zero(n, ttd, Ct.has(n) ? Ct.dim(n) : 0).mul(fn);
        SparseMatrix rhs = Tf.at_or_zero(n, ttd, std_).mul(src.delta().comp.at(n));
        if (!(lhs == rhs))
            out.push_back("the complete decompositions are not intertwined on '" +
                          comp.basis[first_diff_col(lhs, rhs)].name + "'");
    }
    return out;
}

std::string FilteredQisReport::text() const {
    std::ostringstream os;
    os << "filtered quasi-isomorphism: " << (filtered_qis ? "yes" : "no") << "\n";
    for (const auto &fl : failures) os << "  failure: " << fl << "\n";
    for (const auto &cl : cells)
        os << "  level " << cl.level << "  arity " << cl.arity << "  degree " << cl.degree
           << ": graded homology ranks " << cl.rank_src << " vs " << cl.rank_tgt
           << (cl.iso ? ", induced map iso" : ", induced map NOT iso") << "\n";
    if (total_qis)
        os << "underlying complexes quasi-isomorphic: " << (*total_qis ? "yes" : "no") << "\n";
    else
        os << "underlying comparison unavailable (a coderivation fails to square to zero)\n";
    return os.str();
}

namespace {

/* The graded piece G_q = F_q/F_{q-1} of one arity, sliced by degree:
   representatives independent modulo F_{q-1}, the induced differential in
   coordinates on those representatives, and a validity flag. */
struct GradedPiece {
    std::map<int, std::vector<Vec>> reps;
    std::map<int, SparseMatrix> dmat;
    bool ok = true;
};

GradedPiece graded_piece(const SModule &M, const Filtration &fl, int q, int n,
                         std::vector<std::string> &failures, const std::string &side) {
    GradedPiece g;
    if (!M.has(n)) return g;
    int dim = M.dim(n);
    const SparseMatrix *Sq = fl.span(q, n);
    if (!Sq) return g;
    const SparseMatrix *Sp = q > 0 ? fl.span(q - 1, n) : nullptr;

    std::set<int> degs;
    for (int i = 0; i < dim; ++i) degs.insert(M.elt(n, i).degree);

    RowSpace low;
    if (Sp)
        for (int j = 0; j < Sp->cols(); ++j) low.insert(Sp->col(j));
    int expected;
    {
        SparseMatrix both = Sp ? Sp->hstack(*Sq) : *Sq;
        expected = both.rank() - (Sp ? Sp->rank() : 0);
    }
    RowSpace acc = low;
    for (int d : degs) {
        std::vector<int> other;
        for (int i = 0; i < dim; ++i)
            if (M.elt(n, i).degree != d) other.push_back(i);
        std::vector<int> allc(Sq->cols());
        for (int j = 0; j < Sq->cols(); ++j) allc[j] = j;
        SparseMatrix R = submatrix(*Sq, other, allc);
        for (const Vec &z : R.kernel_basis()) {
            Vec w = Sq->apply(z);
            if (acc.insert(w)) g.reps[d].push_back(w);
        }
    }
    int have = 0;
    for (const auto &[d, rv] : g.reps) have += (int)rv.size();
    if (have != expected) {
        failures.push_back(side + " filtration level " + std::to_string(q) + " at arity " +
                           std::to_string(n) + " is not spanned degree by degree");
        g.ok = false;
        return g;
    }

    // induced differential on representatives
    SparseMatrix dn = M.d(n);
    for (const auto &[d, rv] : g.reps) {
        SparseMatrix lowreps(dim, (Sp ? Sp->cols() : 0) +
                                      (g.reps.count(d - 1) ? (int)g.reps.at(d - 1).size() : 0));
        int off = 0;
        if (Sp)
            for (int j = 0; j < Sp->cols(); ++j) lowreps.set_col(off++, Sp->col(j));
        int nlow = off;
        if (g.reps.count(d - 1))
            for (const Vec &r : g.reps.at(d - 1)) lowreps.set_col(off++, r);
        SparseMatrix dm((g.reps.count(d - 1) ? (int)g.reps.at(d - 1).size() : 0), (int)rv.size());
        for (int j = 0; j < (int)rv.size(); ++j) {
            auto z = lowreps.solve(dn.apply(rv[j]));
            if (!z) {
                failures.push_back(side + " graded differential escapes level " +
                                   std::to_string(q) + " at arity " + std::to_string(n));
                g.ok = false;
                break;
            }
            for (const auto &[i, v] : z->entries())
                if (i >= nlow) dm.set(i - nlow, j, v);
        }
        if (!g.ok) break;
        g.dmat[d] = dm;
    }
    return g;
}

ChainComplex piece_complex(const GradedPiece &g) {
    ChainComplex cx;
    for (const auto &[d, rv] : g.reps) cx.set_dim(d, (int)rv.size());
    for (const auto &[d, m] : g.dmat) cx.set_d(d, m);
    return cx;
}

}  // namespace

FilteredQisReport check_filtered_qis(const SModuleMap &f, const CurvedCooperad &src,
                                     const Filtration &fsrc, const CurvedCooperad &tgt,
                                     const Filtration &ftgt) {
    FilteredQisReport rep;
    const SModule &Cs = src.underlying();
    const SModule &Ct = tgt.underlying();
    if (f.degree != 0) {
        rep.failures.push_back("the map must have degree 0");
        return rep;
    }

    std::set<int> arities;
    for (const auto &[n, comp] : Cs.components()) arities.insert(n);
    for (const auto &[n, comp] : Ct.components()) arities.insert(n);
    int qtop = std::max(fsrc.top(), ftgt.top());

    for (int n : arities) {
        int sdim = Cs.has(n) ? Cs.dim(n) : 0;
        int tdim = Ct.has(n) ? Ct.dim(n) : 0;
        SparseMatrix fn = f.at_or_zero(n, tdim, sdim);
        for (int q = 0; q <= fsrc.top(); ++q) {
            const SparseMatrix *s = fsrc.span(q, n);
            if (!s) continue;
            for (int j = 0; j < s->cols(); ++j)
                if (!ftgt.contains(q, n, fn.apply(s->col(j)))) {
                    rep.failures.push_back("the map does not preserve level " + std::to_string(q) +
                                           " at arity " + std::to_string(n));
                    break;
                }
        }
        SparseMatrix ds = sdim ? Cs.d(n) : SparseMatrix(0, 0);
        SparseMatrix dt = tdim ? Ct.d(n) : SparseMatrix(0, 0);
        for (int q = 0; q <= fsrc.top(); ++q) {
            const SparseMatrix *s = fsrc.span(q, n);
            if (!s) continue;
            for (int j = 0; j < s->cols(); ++j)
                if (!fsrc.contains(q, n, ds.apply(s->col(j)))) {
                    rep.failures.push_back("the source coderivation leaves level " +
                                           std::to_string(q) + " at arity " + std::to_string(n));
                    break;
                }
        }
        for (int q = 0; q <= ftgt.top(); ++q) {
            const SparseMatrix *s = ftgt.span(q, n);
            if (!s) continue;
            for (int j = 0; j < s->cols(); ++j)
                if (!ftgt.contains(q, n, dt.apply(s->col(j)))) {
                    rep.failures.push_back("the target coderivation leaves level " +
                                           std::to_string(q) + " at arity " + std::to_string(n));
                    break;
                }
        }
    }

    bool all_iso = true;
    for (int q = 0; q <= qtop; ++q) {
        for (int n : arities) {
            GradedPiece gs = graded_piece(Cs, fsrc, q, n, rep.failures, "source");
            GradedPiece gt = graded_piece(Ct, ftgt, q, n, rep.failures, "target");
            if (!gs.ok || !gt.ok) {
                all_iso = false;
                continue;
            }
            ChainComplex vs = piece_complex(gs);
            ChainComplex vt = piece_complex(gt);
            try {
                vs.validate();
                vt.validate();
            } catch (const std::exception &e) {
                rep.failures.push_back("graded piece at level " + std::to_string(q) + ", arity " +
                                       std::to_string(n) + ": " + e.what());
                all_iso = false;
                continue;
            }

            // the induced map in representative coordinates
            int tdim = Ct.has(n) ? Ct.dim(n) : 0;
            SparseMatrix fn = f.at_or_zero(n, tdim, Cs.has(n) ? Cs.dim(n) : 0);
            const SparseMatrix *tSp = q > 0 ? ftgt.span(q - 1, n) : nullptr;
            std::map<int, SparseMatrix> fg;
            bool fg_ok = true;
            for (const auto &[d, rv] : gs.reps) {
                int trep = gt.reps.count(d) ? (int)gt.reps.at(d).size() : 0;
                SparseMatrix basis(tdim, (tSp ? tSp->cols() : 0) + trep);
                int off = 0;
                if (tSp)
                    for (int j = 0; j < tSp->cols(); ++j) basis.set_col(off++, tSp->col(j));
                int nlow = off;
                if (trep)
                    for (const Vec &r : gt.reps.at(d)) basis.set_col(off++, r);
                SparseMatrix m(trep, (int)rv.size());
                for (int j = 0; j < (int)rv.size(); ++j) {
                    auto z = basis.solve(fn.apply(rv[j]));
                    if (!z) {
                        rep.failures.push_back("the induced map escapes level " +
                                               std::to_string(q) + " at arity " +
                                               std::to_string(n));
                        fg_ok = false;
                        break;
                    }
                    for (const auto &[i, v] : z->entries())
                        if (i >= nlow) m.set(i - nlow, j, v);
                }
                if (!fg_ok) break;
                fg[d] = m;
            }
            if (!fg_ok) {
                all_iso = false;
                continue;
            }

            Contraction Ks = homology_splitting(vs);
            Contraction Kt = homology_splitting(vt);
            std::set<int> hdegs;
            for (const auto &[d, h] : Ks.h_dims)
                if (h > 0) hdegs.insert(d);
            for (const auto &[d, h] : Kt.h_dims)
                if (h > 0) hdegs.insert(d);
            for (int d : hdegs) {
                int hs = Ks.h_dims.count(d) ? Ks.h_dims.at(d) : 0;
                int ht = Kt.h_dims.count(d) ? Kt.h_dims.at(d) : 0;
                GradedCell cell;
                cell.level = q;
                cell.arity = n;
                cell.degree = d;
                cell.rank_src = hs;
                cell.rank_tgt = ht;
                SparseMatrix incl = Ks.incl.count(d) ? Ks.incl.at(d)
                                                     : SparseMatrix(vs.dim(d), hs);
                SparseMatrix proj = Kt.proj.count(d) ? Kt.proj.at(d)
                                                     : SparseMatrix(ht, vt.dim(d));
                SparseMatrix fgd = fg.count(d) ? fg.at(d) : SparseMatrix(vt.dim(d), vs.dim(d));
                SparseMatrix hmap = proj.mul(fgd).mul(incl);
                cell.iso = hs == ht && hmap.rank() == hs;
                if (!cell.iso) all_iso = false;
                rep.cells.push_back(cell);
            }
        }
    }
    rep.filtered_qis = rep.failures.empty() && all_iso;

    bool curved = false;
    for (const auto &[n, comp] : Cs.components()) {
        (void)comp;
        if (!Cs.d(n).mul(Cs.d(n)).is_zero()) curved = true;
    }
    for (const auto &[n, comp] : Ct.components()) {
        (void)comp;
        if (!Ct.d(n).mul(Ct.d(n)).is_zero()) curved = true;
    }
    if (!curved) {
        bool tq = true;
        for (int n : arities) {
            std::set<int> degs;
            if (Cs.has(n))
                for (int i = 0; i < Cs.dim(n); ++i) degs.insert(Cs.elt(n, i).degree);
            if (Ct.has(n))
                for (int i = 0; i < Ct.dim(n); ++i) degs.insert(Ct.elt(n, i).degree);
            ChainComplex vs, vt;
            ChainMap fm;
            int sdim = Cs.has(n) ? Cs.dim(n) : 0;
            int tdim = Ct.has(n) ? Ct.dim(n) : 0;
            SparseMatrix fn = f.at_or_zero(n, tdim, sdim);
            SparseMatrix ds = sdim ? Cs.d(n) : SparseMatrix(0, 0);
            SparseMatrix dt = tdim ? Ct.d(n) : SparseMatrix(0, 0);
            auto idx = [&](const SModule &M, int d) {
                return M.has(n) ? M.degree_indices(n, d) : std::vector<int>{};
            };
            for (int d : degs) {
                vs.set_dim(d, (int)idx(Cs, d).size());
                vt.set_dim(d, (int)idx(Ct, d).size());
            }
            for (int d : degs) {
                vs.set_d(d, submatrix(ds, idx(Cs, d - 1), idx(Cs, d)));
                vt.set_d(d, submatrix(dt, idx(Ct, d - 1), idx(Ct, d)));
                fm.comp[d] = submatrix(fn, idx(Ct, d), idx(Cs, d));
            }
            try {
                vs.validate();
                vt.validate();
                validate_chain_map(vs, vt, fm);
            } catch (const std::exception &e) {
                rep.failures.push_back(std::string("underlying comparison at arity ") +
                                       std::to_string(n) + ": " + e.what());
                tq = false;
                continue;
            }
            Contraction Ks = homology_splitting(vs);
            Contraction Kt = homology_splitting(vt);
            std::set<int> hdegs;
            for (const auto &[d, h] : Ks.h_dims)
                if (h > 0) hdegs.insert(d);
            for (const auto &[d, h] : Kt.h_dims)
                if (h > 0) hdegs.insert(d);
            for (int d : hdegs) {
                int hs = Ks.h_dims.count(d) ? Ks.h_dims.at(d) : 0;
                int ht = Kt.h_dims.count(d) ? Kt.h_dims.at(d) : 0;
                if (hs != ht) {
                    tq = false;
                    continue;
                }
                SparseMatrix incl = Ks.incl.count(d) ? Ks.incl.at(d)
                                                     : SparseMatrix(vs.dim(d), hs);
                SparseMatrix proj = Kt.proj.count(d) ? Kt.proj.at(d)
                                                     : SparseMatrix(ht, vt.dim(d));
                SparseMatrix fd = fm.at_or_zero(d, vt.dim(d), vs.dim(d));
                if (proj.mul(fd).mul(incl).rank() != hs) tq = false;
            }
        }
        rep.total_qis = tq;
    }
    return rep;
}

namespace {

/* Scaffolding shared by the product construction: the direct sum U of the
   two reduced parts, the labelled-tree module A = T(U) with the vertex-wise
   differential, and the alternating sub-basis P (vertices change factor
   along every edge) with selection tables between the two bases. */
struct ProdScaffold {
    SModule U;
    std::map<int, int> lcount;  // arity -> number of left-factor elements
    TreeModule A;
    SModule P;
    std::map<int, std::vector<int>> sel;  // P index -> A index
    std::map<int, std::vector<int>> a2p;  // A index -> P index or -1
};

ProdScaffold build_scaffold(const CurvedCooperad &c, const CurvedCooperad &d,
                            const Truncation &trunc) {
    const SModule &L = c.reduced();
    const SModule &R = d.reduced();
    SModule U;
    std::map<int, int> lcount;
    std::set<int> uar;
    for (const auto &[a, comp] : L.components())
        if (!comp.basis.empty()) uar.insert(a);
    for (const auto &[a, comp] : R.components())
        if (!comp.basis.empty()) uar.insert(a);
    for (int a : uar) {
        lcount[a] = L.has(a) ? L.dim(a) : 0;
        if (L.has(a))
            for (int i = 0; i < L.dim(a); ++i) {
                const auto &e = L.elt(a, i);
                U.add_element(a, "l." + e.name, e.degree, e.weight);
            }
        if (R.has(a))
            for (int i = 0; i < R.dim(a); ++i) {
                const auto &e = R.elt(a, i);
                U.add_element(a, "r." + e.name, e.degree, e.weight);
            }
    }
    for (int a : uar) {
        int lc = lcount[a];
        int rc = R.has(a) ? R.dim(a) : 0;
        SparseMatrix dl = lc ? L.d(a) : SparseMatrix(0, 0);
        SparseMatrix dr = rc ? R.d(a) : SparseMatrix(0, 0);
        U.set_d(a, blockdiag(dl, dr));
        if (a >= 2)
            for (int j = 0; j + 1 < a; ++j) {
                SparseMatrix al = lc ? L.action(a, Perm::adjacent(a, j)) : SparseMatrix(0, 0);
                SparseMatrix ar = rc ? R.action(a, Perm::adjacent(a, j)) : SparseMatrix(0, 0);
                U.set_gen_action(a, j, blockdiag(al, ar));
            }
    }
    TreeModule A(U, trunc, true);

    SModule P;
    std::map<int, std::vector<int>> sel, a2p;
    for (const auto &[n, comp] : A.module().components()) {
        int dim = (int)comp.basis.size();
        std::vector<int> &seln = sel[n];
        std::vector<int> &an = a2p[n];
        an.assign(dim, -1);
        for (int i = 0; i < dim; ++i) {
            bool keep = true;
            if (!A.is_unit(n, i)) {
                const LabelledTree &lt = A.at(n, i);
                for (int v = 1; v < lt.tree.vertex_count() && keep; ++v) {
                    int pv = lt.tree.parent(v);
                    bool side_v = lt.labels[v] < lcount.at(lt.tree.arity(v));
                    bool side_p = lt.labels[pv] < lcount.at(lt.tree.arity(pv));
                    if (side_v == side_p) keep = false;
                }
            }
            if (!keep) continue;
            an[i] = (int)seln.size();
            seln.push_back(i);
            const auto &e = comp.basis[i];
            P.add_element(n, e.name, e.degree, e.weight);
        }
    }

    SModuleMap du;
    du.degree = -1;
    SModuleMap incl = A.inclusion_of_generators();
    for (const auto &[a, m] : incl.comp) du.comp[a] = m.mul(U.d(a));
    SModuleMap dA = A.derivation(du);
    for (const auto &[n, comp] : A.module().components()) {
        (void)comp;
        const std::vector<int> &seln = sel.at(n);
        if (seln.empty()) continue;
        const SparseMatrix &dm = dA.comp.at(n);
        for (int j : seln)
            for (const auto &[r, v] : dm.col(j).entries()) {
                (void)v;
                if (a2p.at(n)[r] < 0)
                    throw std::logic_error("product: the differential leaves the alternating span");
            }
        P.set_d(n, submatrix(dm, seln, seln));
        if (n >= 2)
            for (int j = 0; j + 1 < n; ++j) {
                SparseMatrix am = A.module().action(n, Perm::adjacent(n, j));
                for (int jj : seln)
                    for (const auto &[r, v] : am.col(jj).entries()) {
                        (void)v;
                        if (a2p.at(n)[r] < 0)
                            throw std::logic_error(
                                "product: the symmetric action leaves the alternating span");
                    }
                P.set_gen_action(n, j, submatrix(am, seln, seln));
            }
    }
    return ProdScaffold{std::move(U),   std::move(lcount), std::move(A),
                        std::move(P),   std::move(sel),    std::move(a2p)};
}

}  // namespace

CooperadProduct cooperad_product(const CurvedCooperad &c, const CurvedCooperad &d,
                                 const Truncation &trunc) {
    if (!c.curvature().is_zero() || !d.curvature().is_zero())
        throw std::invalid_argument("cooperad product: both factors must have zero curvature");
    for (const CurvedCooperad *fc : {&c, &d}) {
        SparseMatrix d1 = fc->underlying().d(1);
        for (int j = 0; j < fc->underlying().dim(1); ++j) {
            if (j == fc->unit_index()) continue;
            if (!d1.col(j).at(fc->unit_index()).is_zero())
                throw std::invalid_argument(
                    "cooperad product: the coderivations must preserve the reduced parts");
        }
    }
    ProdScaffold sc = build_scaffold(c, d, trunc);

    // the embedding iota : P -> A substitutes each vertex label by its
    // factor's complete decomposition and flattens the resulting tree of trees
    SModuleMap iota;
    iota.degree = 0;
    for (const auto &[n, comp] : sc.P.components()) {
        int pdim = (int)comp.basis.size();
        SparseMatrix m(sc.A.module().dim(n), pdim);
        for (int pj = 0; pj < pdim; ++pj) {
            int ai = sc.sel.at(n)[pj];
            if (sc.A.is_unit(n, ai)) {
                m.set_col(pj, Vec::unit(ai));
                continue;
            }
            const LabelledTree &lt = sc.A.at(n, ai);
            int nv = lt.tree.vertex_count();
            struct Treelet {
                Rat c;
                const Tree *shape;
                std::vector<int> ulab;
            };
            std::vector<std::vector<Treelet>> tl(nv);
            bool dead = false;
            for (int v = 0; v < nv && !dead; ++v) {
                int a = lt.tree.arity(v);
                int u0 = lt.labels[v];
                bool left = u0 < sc.lcount.at(a);
                const CurvedCooperad &F = left ? c : d;
                int famb = F.ambient_index(a, left ? u0 : u0 - sc.lcount.at(a));
                Vec dcol = F.delta().comp.at(a).col(famb);
                for (const auto &[ti, cf] : dcol.entries()) {
                    if (F.trees().is_unit(a, ti)) continue;
                    const LabelledTree &ft = F.trees().at(a, ti);
                    Treelet t;
                    t.c = cf;
                    t.shape = &ft.tree;
                    t.ulab.resize(ft.tree.vertex_count());
                    for (int w = 0; w < ft.tree.vertex_count(); ++w) {
                        int aw = ft.tree.arity(w);
                        t.ulab[w] = left ? ft.labels[w] : ft.labels[w] + sc.lcount.at(aw);
                    }
                    tl[v].push_back(std::move(t));
                }
                if (tl[v].empty()) dead = true;
            }
            if (dead) continue;

            Vec col;
            std::vector<int> choice(nv, 0);
            while (true) {
                Rat cf(1);
                std::vector<const Treelet *> pick(nv);
                std::vector<int> offset(nv + 1, 0);
                for (int v = 0; v < nv; ++v) {
                    pick[v] = &tl[v][choice[v]];
                    cf *= pick[v]->c;
                    offset[v + 1] = offset[v] + pick[v]->shape->vertex_count();
                }
                std::function<PTree(const PTree &)> flatten = [&](const PTree &node) -> PTree {
                    if (node.leaf) return node;
                    std::vector<PTree> kids;
                    kids.reserve(node.kids.size());
                    for (const auto &kk : node.kids) kids.push_back(flatten(kk));
                    int v = node.tag;
                    PTree sub = pick[v]->shape->planar();
                    std::function<PTree(const PTree &)> fill = [&](const PTree &s) -> PTree {
                        if (s.leaf) return kids[s.label];
                        std::vector<PTree> sk;
                        sk.reserve(s.kids.size());
                        for (const auto &sc2 : s.kids) sk.push_back(fill(sc2));
                        PTree r = PTree::make_vertex(std::move(sk));
                        r.tag = offset[v] + s.tag;
                        return r;
                    };
                    return fill(sub);
                };
                PTree flat = flatten(lt.tree.planar());
                std::vector<Vec> labs(offset[nv]);
                for (int v = 0; v < nv; ++v)
                    for (int w = 0; w < pick[v]->shape->vertex_count(); ++w)
                        labs[offset[v] + w] = Vec::unit(pick[v]->ulab[w]);
                col.axpy(cf, sc.A.embed(flat, labs));
                int v = nv - 1;
                while (v >= 0 && ++choice[v] == (int)tl[v].size()) {
                    choice[v] = 0;
                    --v;
                }
                if (v < 0) break;
            }
            m.set_col(pj, col);
        }
        iota.comp[n] = m;
    }

    // solve delta_A(iota(p)) = T(iota-reduced)(delta_P(p)) for delta_P
    TreeModule TAbar(reduced_of(sc.A.module(), 0), trunc);
    SModuleMap deltaA = build_partition_delta(sc.A, TAbar);
    TreeModule TP(reduced_of(sc.P, 0), trunc);
    SModuleMap ibar;
    ibar.degree = 0;
    for (const auto &[a, comp] : sc.P.components()) {
        (void)comp;
        int prd = a == 1 ? sc.P.dim(1) - 1 : sc.P.dim(a);
        int ard = a == 1 ? sc.A.module().dim(1) - 1 : sc.A.module().dim(a);
        SparseMatrix m(ard, prd);
        for (int rj = 0; rj < prd; ++rj) {
            Vec icol = iota.comp.at(a).col(a == 1 ? rj + 1 : rj);
            Vec red;
            for (const auto &[ai, v] : icol.entries()) {
                if (a == 1 && ai == 0)
                    throw std::logic_error("product: the embedding hits the unit");
                red.set(a == 1 ? ai - 1 : ai, v);
            }
            m.set_col(rj, red);
        }
        ibar.comp[a] = m;
    }
    SModuleMap Ti = tree_map_of_labels(TP, TAbar, ibar);
    SModuleMap deltaP;
    deltaP.degree = 0;
    for (const auto &[n, comp] : sc.P.components()) {
        int pdim = (int)comp.basis.size();
        int tpd = TP.module().has(n) ? TP.module().dim(n) : 0;
        int tad = TAbar.module().has(n) ? TAbar.module().dim(n) : 0;
        SparseMatrix M = Ti.at_or_zero(n, tad, tpd);
        SparseMatrix rhs =
            deltaA.at_or_zero(n, tad, sc.A.module().dim(n)).mul(iota.comp.at(n));
        SparseMatrix m(tpd, pdim);
        for (int pj = 0; pj < pdim; ++pj) {
            Vec b = rhs.col(pj);
            if (b.is_zero()) continue;
            auto z = M.solve(b);
            if (!z)
                throw std::logic_error("product: a decomposition escapes the alternating span");
            m.set_col(pj, *z);
        }
        deltaP.comp[n] = m;
    }

    SModuleMap toL, toR;
    toL.degree = 0;
    toR.degree = 0;
    for (const auto &[n, comp] : sc.P.components()) {
        int pdim = (int)comp.basis.size();
        const SModule &CL = c.underlying();
        const SModule &CR = d.underlying();
        SparseMatrix ml(CL.has(n) ? CL.dim(n) : 0, pdim);
        SparseMatrix mr(CR.has(n) ? CR.dim(n) : 0, pdim);
        for (int pj = 0; pj < pdim; ++pj) {
            int ai = sc.sel.at(n)[pj];
            if (sc.A.is_unit(n, ai)) {
                ml.set_col(pj, Vec::unit(c.unit_index()));
                mr.set_col(pj, Vec::unit(d.unit_index()));
                continue;
            }
            const LabelledTree &lt = sc.A.at(n, ai);
            if (lt.tree.vertex_count() != 1) continue;
            int u0 = lt.labels[0];
            if (u0 < sc.lcount.at(n))
                ml.set_col(pj, Vec::unit(c.ambient_index(n, u0)));
            else
                mr.set_col(pj, Vec::unit(d.ambient_index(n, u0 - sc.lcount.at(n))));
        }
        toL.comp[n] = ml;
        toR.comp[n] = mr;
    }

    CurvedCooperad prod(std::move(sc.P), 0, std::move(deltaP), Vec(), trunc);
    return CooperadProduct{std::move(prod), std::move(toL), std::move(toR)};
}

SModuleMap into_product(const CurvedCooperad &e, const SModuleMap &u, const SModuleMap &v,
                        const CurvedCooperad &c, const CurvedCooperad &d,
                        const CooperadProduct &p) {
    if (u.degree != 0 || v.degree != 0)
        throw std::invalid_argument("into_product: the factor morphisms must have degree 0");
    const Truncation &trunc = p.product.truncation();
    ProdScaffold sc = build_scaffold(c, d, trunc);
    const SModule &P = p.product.underlying();
    {
        bool match = true;
        for (const auto &[n, comp] : P.components()) {
            if (!sc.P.has(n) || sc.P.dim(n) != (int)comp.basis.size()) {
                match = false;
                break;
            }
            for (int i = 0; i < (int)comp.basis.size(); ++i)
                if (sc.P.elt(n, i).name != comp.basis[i].name) {
                    match = false;
                    break;
                }
        }
        for (const auto &[n, comp] : sc.P.components())
            if (!P.has(n) || P.dim(n) != (int)comp.basis.size()) match = false;
        if (!match)
            throw std::invalid_argument(
                "into_product: the product object does not match the factors");
    }

    const SModule &E = e.underlying();
    SModuleMap w;
    w.degree = 0;
    for (const auto &[n, comp] : E.components()) {
        int edim = (int)comp.basis.size();
        int pdim = P.has(n) ? P.dim(n) : 0;
        SparseMatrix m(pdim, edim);
        for (int i = 0; i < edim; ++i) {
            if (n == 1 && i == e.unit_index()) {
                m.set_col(i, Vec::unit(0));
                continue;
            }
            Vec col;
            Vec dc = e.delta().comp.at(n).col(i);
            for (const auto &[b, cf] : dc.entries()) {
                if (e.trees().is_unit(n, b)) continue;
                const LabelledTree &lt = e.trees().at(n, b);
                int nv = lt.tree.vertex_count();
                for (int rootside = 0; rootside < 2; ++rootside) {
                    std::vector<Vec> labs(nv);
                    bool dead = false;
                    for (int vx = 0; vx < nv && !dead; ++vx) {
                        int depth = 0;
                        for (int pv = lt.tree.parent(vx); pv >= 0; pv = lt.tree.parent(pv))
                            ++depth;
                        bool left = (depth % 2 == 0) == (rootside == 0);
                        int a = lt.tree.arity(vx);
                        int eamb = e.ambient_index(a, lt.labels[vx]);
                        const CurvedCooperad &F = left ? c : d;
                        const SModuleMap &g = left ? u : v;
                        Vec gc = g.at_or_zero(a, F.underlying().has(a) ? F.underlying().dim(a) : 0,
                                              E.dim(a))
                                     .col(eamb);
                        Vec red = F.to_reduced(a, gc);
                        Vec ul;
                        for (const auto &[rj, vv] : red.entries())
                            ul.set(left ? rj : rj + sc.lcount.at(a), vv);
                        if (ul.is_zero()) dead = true;
                        labs[vx] = std::move(ul);
                    }
                    if (dead) continue;
                    Vec av = sc.A.embed(lt.tree.planar(), labs);
                    for (const auto &[ai, vv] : av.entries()) {
                        int pj = sc.a2p.at(n)[ai];
                        if (pj < 0)
                            throw std::logic_error(
                                "into_product: a non-alternating term appeared");
                        col.add(pj, cf * vv);
                    }
                }
            }
            m.set_col(i, col);
        }
        w.comp[n] = m;
    }
    return w;
}

}  // namespace opal

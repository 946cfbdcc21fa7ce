#include "opal/treemod.hpp"

#include <algorithm>
#include <climits>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>

namespace opal {

namespace {

std::string labelled_name(const SModule &gens, const Tree &t, const std::vector<int> &labels) {
    std::string s = t.encode() + "|";
    for (int v = 0; v < t.vertex_count(); ++v) {
        if (v) s += ",";
        s += gens.elt(t.arity(v), labels[v]).name;
    }
    return s;
}

/* Replace vertex `v` of a tagged planar tree by `sub` (tags 0..nvs-1); the
   old slot contents fill sub's leaves by label. sub == nullptr removes a
   unary vertex. Remaining tags shift so the result is tagged 0..old+nvs-2
   with sub occupying v..v+nvs-1. */
PTree substitute_vertex(const PTree &pt, int v, const PTree *sub, int nvs) {
    std::function<PTree(const PTree &)> walk = [&](const PTree &node) -> PTree {
        if (node.leaf) return node;
        std::vector<PTree> kids;
        kids.reserve(node.kids.size());
        for (const auto &k : node.kids) kids.push_back(walk(k));
        if (node.tag == v) {
            if (!sub) {
                if (kids.size() != 1) throw std::logic_error("substitute: unit needs a unary vertex");
                return std::move(kids[0]);
            }
            std::function<PTree(const PTree &)> fill = [&](const PTree &s) -> PTree {
                if (s.leaf) return kids[s.label];
                std::vector<PTree> sk;
                sk.reserve(s.kids.size());
                for (const auto &c : s.kids) sk.push_back(fill(c));
                PTree r = PTree::make_vertex(std::move(sk));
                r.tag = v + s.tag;
                return r;
            };
            return fill(*sub);
        }
        PTree r = PTree::make_vertex(std::move(kids));
        r.tag = node.tag < v ? node.tag : node.tag + nvs - 1;
        return r;
    };
    return walk(pt);
}

/* x o_slot y on planar trees: leaf `slot` of px is replaced by py (leaves
   shifted up by slot), higher leaves of px shift by m-1. Tags kept. */
PTree splice_leaf(const PTree &px, int slot, const PTree &py, int m) {
    std::function<PTree(const PTree &, int)> shift = [&](const PTree &node, int delta) -> PTree {
        if (node.leaf) {
            PTree l = node;
            l.label += delta;
            return l;
        }
        std::vector<PTree> kids;
        kids.reserve(node.kids.size());
        for (const auto &k : node.kids) kids.push_back(shift(k, delta));
        PTree r = PTree::make_vertex(std::move(kids));
        r.tag = node.tag;
        return r;
    };
    std::function<PTree(const PTree &)> walk = [&](const PTree &node) -> PTree {
        if (node.leaf) {
            if (node.label == slot) return shift(py, slot);
            PTree l = node;
            if (l.label > slot) l.label += m - 1;
            return l;
        }
        std::vector<PTree> kids;
        kids.reserve(node.kids.size());
        for (const auto &k : node.kids) kids.push_back(walk(k));
        PTree r = PTree::make_vertex(std::move(kids));
        r.tag = node.tag;
        return r;
    };
    return walk(px);
}

int sign_pow(int e) { return (e % 2 != 0) ? -1 : 1; }

}  // namespace

TreeModule::TreeModule(const SModule &gens, const Truncation &trunc, bool with_unit)
    : gens_(gens), trunc_(trunc), with_unit_(with_unit) {
    trunc_.validate();
    int min_ar = INT_MAX, max_ar = 0;
    for (const auto &[n, comp] : gens_.components()) {
        if (comp.basis.empty()) continue;
        for (const auto &e : comp.basis)
            if (e.weight < 1) throw std::invalid_argument("tree module: generators need weight >= 1");
        min_ar = std::min(min_ar, n);
        max_ar = std::max(max_ar, n);
    }
    if (with_unit_) mod_.add_element(1, "1", 0, 0);

    if (min_ar <= max_ar) {
        for (int n = 0; n <= trunc_.max_arity; ++n) {
            for (const Tree &t : enumerate_trees(n, trunc_.max_weight, min_ar, max_ar)) {
                int nv = t.vertex_count();
                std::vector<int> dims(nv), ar(nv);
                bool labellable = true;
                for (int v = 0; v < nv; ++v) {
                    ar[v] = t.arity(v);
                    dims[v] = gens_.has(ar[v]) ? gens_.dim(ar[v]) : 0;
                    if (dims[v] == 0) labellable = false;
                }
                if (!labellable) continue;
                std::vector<int> lab(nv, 0);
                while (true) {
                    int w = 0, d = 0;
                    for (int v = 0; v < nv; ++v) {
                        const auto &e = gens_.elt(ar[v], lab[v]);
                        w += e.weight;
                        d += e.degree;
                    }
                    if (trunc_.keeps(n, w, d)) {
                        if (t.has_nontrivial_automorphism())
                            throw std::runtime_error(
                                "tree module: tree with automorphisms needs coinvariants "
                                "(arity-0 generators are not supported here)");
                        mod_.add_element(n, labelled_name(gens_, t, lab), d, w);
                        trees_[n].push_back({t, lab});
                    }
                    int v = nv - 1;
                    while (v >= 0 && ++lab[v] == dims[v]) {
                        lab[v] = 0;
                        --v;
                    }
                    if (v < 0) break;
                }
            }
        }
    }

    std::vector<int> arities;
    for (const auto &[n, comp] : mod_.components())
        if (n >= 2) arities.push_back(n);
    for (int n : arities) {
        int dim = mod_.dim(n);
        int base = 0;  // no unit outside arity 1
        for (int j = 0; j + 1 < n; ++j) {
            Perm s = Perm::adjacent(n, j);
            SparseMatrix a(dim, dim);
            for (int i = 0; i < dim; ++i) {
                const LabelledTree &lt = trees_.at(n)[i - base];
                PTree p = lt.tree.planar();
                std::function<void(PTree &)> relab = [&](PTree &node) {
                    if (node.leaf) {
                        node.label = s(node.label);
                        return;
                    }
                    for (auto &k : node.kids) relab(k);
                };
                relab(p);
                std::vector<Vec> labs(lt.tree.vertex_count());
                for (int v = 0; v < lt.tree.vertex_count(); ++v) labs[v] = Vec::unit(lt.labels[v]);
                a.set_col(i, embed(p, labs));
            }
            mod_.set_gen_action(n, j, a);
        }
    }
}

bool TreeModule::is_unit(int arity, int index) const { return with_unit_ && arity == 1 && index == 0; }

const LabelledTree &TreeModule::at(int arity, int index) const {
    if (is_unit(arity, index)) throw std::invalid_argument("tree module: the unit carries no tree");
    int base = (with_unit_ && arity == 1) ? 1 : 0;
    auto it = trees_.find(arity);
    if (it == trees_.end() || index - base < 0 || index - base >= (int)it->second.size())
        throw std::invalid_argument("tree module: no such basis element");
    return it->second[index - base];
}

int TreeModule::find(const Tree &t, const std::vector<int> &labels) const {
    int n = t.leaf_count();
    if (t.is_trivial()) return (with_unit_ && labels.empty()) ? 0 : -1;
    if (!mod_.has(n)) return -1;
    return mod_.find(n, labelled_name(gens_, t, labels));
}

int TreeModule::unit_index() const { return with_unit_ ? 0 : -1; }

Vec TreeModule::embed(const PTree &p, const std::vector<Vec> &labels) const {
    if (p.leaf) {
        if (!with_unit_) throw std::invalid_argument("tree module: no unit element");
        if (p.label != 0) throw std::invalid_argument("tree module: bare leaf must be labelled 0");
        return Vec::unit(0);
    }
    auto cs = Tree::canonicalize_slots(p);
    int m = cs.tree.vertex_count();
    int n = cs.tree.leaf_count();
    if ((int)labels.size() != m) throw std::invalid_argument("tree module: one label vector per vertex");

    std::vector<int> deg(m, 0), ar(m, 0);
    for (int tag = 0; tag < m; ++tag) {
        if (labels[tag].is_zero()) return Vec();
        ar[tag] = cs.tree.arity(cs.vperm(tag));
        if (!gens_.has(ar[tag]))
            throw std::invalid_argument("tree module: label at an arity without generators");
        int dim = gens_.dim(ar[tag]);
        int dgref = INT_MIN;
        for (const auto &[i, c] : labels[tag].entries()) {
            if (i < 0 || i >= dim) throw std::invalid_argument("tree module: label index out of range");
            int dg = gens_.elt(ar[tag], i).degree;
            if (dgref == INT_MIN)
                dgref = dg;
            else if (dg != dgref)
                throw std::invalid_argument("tree module: labels must be degree-homogeneous");
        }
        deg[tag] = dgref;
    }
    Rat sign = koszul_sign(cs.vperm, deg);

    std::vector<Vec> labs(m);
    for (int tag = 0; tag < m; ++tag) {
        const Perm &sp = cs.slot_perms[tag];
        if (sp.is_identity())
            labs[tag] = labels[tag];
        else
            labs[tag] = gens_.action(ar[tag], sp).apply(labels[tag]);
        if (labs[tag].is_zero()) return Vec();
    }

    Perm inv = cs.vperm.inverse();
    std::vector<const std::map<int, Rat> *> sup(m);
    std::vector<int> ardf(m);
    for (int df = 0; df < m; ++df) {
        sup[df] = &labs[inv(df)].entries();
        ardf[df] = cs.tree.arity(df);
    }
    std::vector<std::map<int, Rat>::const_iterator> its(m);
    for (int df = 0; df < m; ++df) its[df] = sup[df]->begin();

    Vec out;
    std::vector<int> lab(m);
    while (true) {
        Rat coeff = sign;
        int w = 0, d = 0;
        for (int df = 0; df < m; ++df) {
            lab[df] = its[df]->first;
            coeff *= its[df]->second;
            const auto &e = gens_.elt(ardf[df], lab[df]);
            w += e.weight;
            d += e.degree;
        }
        if (trunc_.keeps(n, w, d)) {
            int bi = mod_.find(n, labelled_name(gens_, cs.tree, lab));
            if (bi < 0) throw std::logic_error("tree module: expected basis element is missing");
            out.add(bi, coeff);
        }
        int df = m - 1;
        while (df >= 0 && ++its[df] == sup[df]->end()) {
            its[df] = sup[df]->begin();
            --df;
        }
        if (df < 0) break;
    }
    return out;
}

SModuleMap TreeModule::derivation(const SModuleMap &u) const {
    SModuleMap out;
    out.degree = u.degree;
    for (const auto &[n, comp] : mod_.components()) {
        int dim = (int)comp.basis.size();
        SparseMatrix dm(dim, dim);
        for (int i = 0; i < dim; ++i) {
            if (is_unit(n, i)) continue;
            const LabelledTree &lt = at(n, i);
            int nv = lt.tree.vertex_count();
            PTree pt = lt.tree.planar();
            Vec col;
            int degbefore = 0;
            for (int v = 0; v < nv; ++v) {
                int arv = lt.tree.arity(v);
                Rat pre(sign_pow(u.degree * degbefore));
                Vec uv = u.at_or_zero(arv, mod_.dim(arv), gens_.dim(arv)).apply(Vec::unit(lt.labels[v]));
                for (const auto &[bj, c] : uv.entries()) {
                    PTree spl;
                    int nvs;
                    if (is_unit(arv, bj)) {
                        nvs = 0;
                        spl = substitute_vertex(pt, v, nullptr, 0);
                    } else {
                        const LabelledTree &st = at(arv, bj);
                        nvs = st.tree.vertex_count();
                        PTree sp = st.tree.planar();
                        spl = substitute_vertex(pt, v, &sp, nvs);
                    }
                    std::vector<Vec> all(nv + nvs - 1);
                    for (int tag = 0; tag < v; ++tag) all[tag] = Vec::unit(lt.labels[tag]);
                    if (nvs > 0) {
                        const LabelledTree &st = at(arv, bj);
                        for (int j = 0; j < nvs; ++j) all[v + j] = Vec::unit(st.labels[j]);
                    }
                    for (int tag = v + 1; tag < nv; ++tag)
                        all[tag + nvs - 1] = Vec::unit(lt.labels[tag]);
                    col += (pre * c) * embed(spl, all);
                }
                degbefore += gens_.elt(arv, lt.labels[v]).degree;
            }
            dm.set_col(i, col);
        }
        out.comp[n] = dm;
    }
    return out;
}

SModuleMap TreeModule::coderivation(const SModuleMap &u) const {
    SModuleMap out;
    out.degree = u.degree;
    for (const auto &[n, comp] : mod_.components()) {
        int dim = (int)comp.basis.size();
        SparseMatrix dm(dim, dim);
        for (int i = 0; i < dim; ++i) {
            if (is_unit(n, i)) continue;
            const LabelledTree &lt = at(n, i);
            const Tree &t = lt.tree;
            int nv = t.vertex_count();
            std::vector<int> vdeg(nv);
            for (int v = 0; v < nv; ++v) vdeg[v] = gens_.elt(t.arity(v), lt.labels[v]).degree;
            Vec col;
            for (const auto &S : subtrees(t, 1)) {
                Collapse c = collapse(t, S);
                int bar = c.branch.leaf_count();
                std::vector<Vec> blab(S.size());
                for (size_t r = 0; r < S.size(); ++r) blab[r] = Vec::unit(lt.labels[S[r]]);
                Vec bvec = embed(c.branch_naive, blab);
                if (bvec.is_zero()) continue;
                Vec uval =
                    u.at_or_zero(bar, gens_.has(bar) ? gens_.dim(bar) : 0, mod_.dim(bar)).apply(bvec);
                if (uval.is_zero()) continue;

                int root = -1;
                std::set<int> inset(S.begin(), S.end());
                for (int v : S) {
                    int p = t.parent(v);
                    if (p < 0 || !inset.count(p)) root = v;
                }
                int bpos = c.old_to_new[root];
                int qn = c.quotient.vertex_count();

                std::vector<int> offset(qn + 1, 0);
                for (int q = 0; q < qn; ++q)
                    offset[q + 1] = offset[q] + (q == bpos ? (int)S.size() : 1);
                std::vector<int> images(nv, -1);
                for (int v = 0; v < nv; ++v)
                    if (!inset.count(v)) images[v] = offset[c.old_to_new[v]];
                for (size_t r = 0; r < S.size(); ++r) images[S[r]] = offset[bpos] + (int)r;
                Rat k1 = koszul_sign(Perm::from_images(images), vdeg);

                int db = 0;
                for (int v = 0; v < nv; ++v)
                    if (!inset.count(v) && c.old_to_new[v] < bpos) db += vdeg[v];
                Rat s2(sign_pow(u.degree * db));

                std::vector<Vec> qlab(qn);
                for (int v = 0; v < nv; ++v)
                    if (!inset.count(v)) qlab[c.old_to_new[v]] = Vec::unit(lt.labels[v]);
                qlab[bpos] = uval;
                col += (k1 * s2) * embed(c.quotient_naive, qlab);
            }
            dm.set_col(i, col);
        }
        out.comp[n] = dm;
    }
    return out;
}

SModuleMap TreeModule::full_delta(const Composite &cc, bool include_trivial) const {
    SModuleMap out;
    out.degree = 0;
    const SModule &tgt = cc.module();
    for (const auto &[n, comp] : mod_.components()) {
        int dim = (int)comp.basis.size();
        SparseMatrix dm(tgt.has(n) ? tgt.dim(n) : 0, dim);
        for (int i = 0; i < dim; ++i) {
            Vec col;
            if (is_unit(n, i)) {
                if (include_trivial) col = cc.express(1, 1, {{0}}, 0, {0});
                dm.set_col(i, col);
                continue;
            }
            const LabelledTree &lt = at(n, i);
            const Tree &t = lt.tree;
            int nv = t.vertex_count();
            std::vector<int> vdeg(nv);
            for (int v = 0; v < nv; ++v) vdeg[v] = gens_.elt(t.arity(v), lt.labels[v]).degree;
            for (const auto &L : parent_closed_subsets(t)) {
                bool trivial_cut = L.empty() || (int)L.size() == nv;
                if (!include_trivial && trivial_cut) continue;
                Split sp = split_at(t, L);
                std::vector<Vec> ulab(L.size());
                for (size_t r = 0; r < L.size(); ++r) ulab[r] = Vec::unit(lt.labels[L[r]]);
                Vec uv = embed(sp.upper_naive, ulab);
                if (uv.is_zero()) continue;
                int k = (int)sp.lower.size();
                std::vector<Vec> wv(k);
                bool dead = false;
                for (int j = 0; j < k && !dead; ++j) {
                    std::vector<Vec> llab(sp.lower_sets[j].size());
                    for (size_t r = 0; r < sp.lower_sets[j].size(); ++r)
                        llab[r] = Vec::unit(lt.labels[sp.lower_sets[j][r]]);
                    wv[j] = embed(sp.lower_naive[j], llab);
                    if (wv[j].is_zero()) dead = true;
                }
                if (dead) continue;

                std::vector<int> images(nv, -1);
                int pos = 0;
                for (int v : L) images[v] = pos++;
                for (int j = 0; j < k; ++j)
                    for (int v : sp.lower_sets[j]) images[v] = pos++;
                Rat k1 = koszul_sign(Perm::from_images(images), vdeg);

                std::vector<std::map<int, Rat>::const_iterator> its(k);
                for (int j = 0; j < k; ++j) its[j] = wv[j].entries().begin();
                std::vector<int> ws(k);
                while (true) {
                    Rat cw(1);
                    for (int j = 0; j < k; ++j) {
                        ws[j] = its[j]->first;
                        cw *= its[j]->second;
                    }
                    for (const auto &[va, ca] : uv.entries())
                        col += cc.express(n, k, sp.blocks, va, ws, k1 * ca * cw);
                    int j = k - 1;
                    while (j >= 0 && ++its[j] == wv[j].entries().end()) {
                        its[j] = wv[j].entries().begin();
                        --j;
                    }
                    if (j < 0) break;
                }
            }
            dm.set_col(i, col);
        }
        out.comp[n] = dm;
    }
    return out;
}

std::vector<TreeModule::BranchTerm> TreeModule::single_branch_terms(int arity, int index) const {
    std::vector<BranchTerm> out;
    if (is_unit(arity, index)) return out;
    const LabelledTree &lt = at(arity, index);
    const Tree &t = lt.tree;
    int nv = t.vertex_count();
    std::vector<int> vdeg(nv);
    for (int v = 0; v < nv; ++v) vdeg[v] = gens_.elt(t.arity(v), lt.labels[v]).degree;
    for (int b = 1; b < nv; ++b) {
        std::vector<bool> below(nv, false);
        below[b] = true;
        for (int v = 0; v < nv; ++v) {
            int w = v;
            while (w >= 0 && !below[w]) w = t.parent(w);
            if (w >= 0) below[v] = true;
        }
        std::vector<int> L;
        for (int v = 0; v < nv; ++v)
            if (!below[v]) L.push_back(v);
        Split sp = split_at(t, L);
        int slot = -1;
        for (int j = 0; j < (int)sp.lower.size(); ++j)
            if (!sp.lower_sets[j].empty()) slot = j;

        std::vector<Vec> ulab(L.size());
        for (size_t r = 0; r < L.size(); ++r) ulab[r] = Vec::unit(lt.labels[L[r]]);
        Vec upper = embed(sp.upper_naive, ulab);
        if (upper.is_zero()) continue;
        std::vector<Vec> blab(sp.lower_sets[slot].size());
        for (size_t r = 0; r < blab.size(); ++r)
            blab[r] = Vec::unit(lt.labels[sp.lower_sets[slot][r]]);
        Vec branch = embed(sp.lower_naive[slot], blab);
        if (branch.is_zero()) continue;

        std::vector<int> images(nv, -1);
        int pos = 0;
        for (int v : L) images[v] = pos++;
        for (int v : sp.lower_sets[slot]) images[v] = pos++;
        Rat k1 = koszul_sign(Perm::from_images(images), vdeg);
        out.push_back({k1, slot, sp.blocks, upper, branch});
    }
    return out;
}

SModuleMap TreeModule::projection_to_generators() const {
    SModuleMap out;
    out.degree = 0;
    for (const auto &[n, comp] : mod_.components()) {
        int dim = (int)comp.basis.size();
        SparseMatrix m(gens_.has(n) ? gens_.dim(n) : 0, dim);
        for (int i = 0; i < dim; ++i) {
            if (is_unit(n, i)) continue;
            const LabelledTree &lt = at(n, i);
            if (lt.tree.vertex_count() == 1) m.set(lt.labels[0], i, Rat(1));
        }
        out.comp[n] = m;
    }
    return out;
}

SModuleMap TreeModule::inclusion_of_generators() const {
    SModuleMap out;
    out.degree = 0;
    for (const auto &[n, comp] : gens_.components()) {
        int gdim = (int)comp.basis.size();
        SparseMatrix m(mod_.has(n) ? mod_.dim(n) : 0, gdim);
        Tree cor = Tree::corolla(n);
        for (int g = 0; g < gdim; ++g) {
            int bi = find(cor, {g});
            if (bi >= 0) m.set(bi, g, Rat(1));
        }
        out.comp[n] = m;
    }
    return out;
}

SModuleMap tree_map_of_labels(const TreeModule &src, const TreeModule &tgt, const SModuleMap &f) {
    if (f.degree != 0) throw std::invalid_argument("tree_map_of_labels: generator map must have degree 0");
    SModuleMap out;
    out.degree = 0;
    for (const auto &[n, comp] : src.module().components()) {
        int dim = (int)comp.basis.size();
        SparseMatrix m(tgt.module().has(n) ? tgt.module().dim(n) : 0, dim);
        for (int i = 0; i < dim; ++i) {
            if (src.is_unit(n, i)) {
                if (tgt.unit_index() < 0)
                    throw std::invalid_argument("tree_map_of_labels: target has no unit");
                m.set_col(i, Vec::unit(tgt.unit_index()));
                continue;
            }
            const LabelledTree &lt = src.at(n, i);
            int nv = lt.tree.vertex_count();
            std::vector<Vec> labs(nv);
            bool dead = false;
            for (int v = 0; v < nv && !dead; ++v) {
                int a = lt.tree.arity(v);
                labs[v] = f.at_or_zero(a, tgt.generators().has(a) ? tgt.generators().dim(a) : 0,
                                       src.generators().dim(a))
                              .col(lt.labels[v]);
                if (labs[v].is_zero()) dead = true;
            }
            if (!dead) m.set_col(i, tgt.embed(lt.tree.planar(), labs));
        }
        out.comp[n] = m;
    }
    return out;
}

Vec TreeModule::graft_elements(int n, const Vec &x, int slot, int m, const Vec &y) const {
    if (slot < 0 || slot >= n) throw std::invalid_argument("graft: slot out of range");
    Vec out;
    for (const auto &[xi, cx] : x.entries()) {
        bool xu = is_unit(n, xi);
        PTree px = xu ? PTree::make_leaf(0) : at(n, xi).tree.planar();
        int nvx = xu ? 0 : at(n, xi).tree.vertex_count();
        for (const auto &[yi, cy] : y.entries()) {
            bool yu = is_unit(m, yi);
            PTree py = yu ? PTree::make_leaf(0) : at(m, yi).tree.planar();
            int nvy = yu ? 0 : at(m, yi).tree.vertex_count();
            std::function<void(PTree &)> retag = [&](PTree &node) {
                if (node.leaf) return;
                node.tag += nvx;
                for (auto &k : node.kids) retag(k);
            };
            retag(py);
            PTree spl = splice_leaf(px, slot, py, m);
            std::vector<Vec> labs(nvx + nvy);
            for (int v = 0; v < nvx; ++v) labs[v] = Vec::unit(at(n, xi).labels[v]);
            for (int v = 0; v < nvy; ++v) labs[nvx + v] = Vec::unit(at(m, yi).labels[v]);
            out += (cx * cy) * embed(spl, labs);
        }
    }
    return out;
}

}  // namespace opal

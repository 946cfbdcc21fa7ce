#include "opal/operad.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

namespace opal {

namespace {

Rat parity(long e) { return (e % 2 != 0) ? Rat(-1) : Rat(1); }

/* Express v in the column span of b; throws when it is not there. */
Vec through_basis(const SparseMatrix &b, const Vec &v, const char *what) {
    auto sol = b.solve(v);
    if (!sol) throw std::runtime_error(std::string(what) + ": vector left the spanned subspace");
    return *sol;
}

SparseMatrix block_diag(const SparseMatrix &a, const SparseMatrix &b) {
    SparseMatrix m(a.rows() + b.rows(), a.cols() + b.cols());
    for (int j = 0; j < a.cols(); ++j) {
        Vec v = a.col(j);
        for (const auto &[r, c] : v.entries()) m.set(r, j, c);
    }
    for (int j = 0; j < b.cols(); ++j) {
        Vec v = b.col(j);
        for (const auto &[r, c] : v.entries()) m.set(r + a.rows(), j + a.cols(), c);
    }
    return m;
}

}  // namespace

DgOperad::DgOperad(SModule underlying, Vec unit, std::map<std::tuple<int, int, int>, SparseMatrix> comp,
                   Truncation t)
    : und_(std::move(underlying)), unit_(std::move(unit)), comp_(std::move(comp)), trunc_(t) {
    trunc_.validate();
    for (const auto &[key, m] : comp_) {
        auto [n, mm, i] = key;
        if (i < 0 || i >= n) throw std::invalid_argument("composition table slot out of range");
        int rows = und_.dim(n + mm - 1), cols = und_.dim(n) * und_.dim(mm);
        if (m.rows() != rows || m.cols() != cols)
            throw std::invalid_argument("composition table shape mismatch at (" + std::to_string(n) + "," +
                                        std::to_string(mm) + "," + std::to_string(i) + ")");
    }
    // When the unit is a single basis element, absent tables still satisfy
    // the unit laws: create them and fill the unit columns. Tables the
    // caller provided are trusted as given.
    if (unit_.support_size() == 1 && unit_.entries().begin()->second == Rat(1) && und_.has(1)) {
        int u = unit_.entries().begin()->first;
        int d1 = und_.dim(1);
        std::set<std::tuple<int, int, int>> fresh;
        for (const auto &[n, cn] : und_.components()) {
            if (cn.basis.empty()) continue;
            for (int i = 0; i < n; ++i) {
                auto key = std::make_tuple(n, 1, i);
                if (!comp_.count(key)) {
                    comp_[key] = SparseMatrix(und_.dim(n), und_.dim(n) * d1);
                    fresh.insert(key);
                }
            }
            auto key = std::make_tuple(1, n, 0);
            if (!comp_.count(key)) {
                comp_[key] = SparseMatrix(und_.dim(n), d1 * und_.dim(n));
                fresh.insert(key);
            }
        }
        for (const auto &key : fresh) {
            auto [n, m, i] = key;
            SparseMatrix &tbl = comp_[key];
            if (m == 1)
                for (int a = 0; a < und_.dim(n); ++a) tbl.set(a, a * d1 + u, Rat(1));
            if (n == 1)
                for (int b = 0; b < und_.dim(m); ++b) tbl.set(b, u * und_.dim(m) + b, Rat(1));
        }
    }
}

Vec DgOperad::compose(int n, const Vec &x, int i, int m, const Vec &y) const {
    if (i < 0 || i >= n) throw std::invalid_argument("compose: slot out of range");
    if (x.is_zero() || y.is_zero()) return Vec();
    auto it = comp_.find(std::make_tuple(n, m, i));
    if (it == comp_.end()) return Vec();
    int dm = und_.dim(m);
    Vec out;
    for (const auto &[a, ca] : x.entries())
        for (const auto &[b, cb] : y.entries()) out.axpy(ca * cb, it->second.col(a * dm + b));
    return out;
}

Vec DgOperad::gamma_blocks(int k, const Vec &x, const std::vector<std::vector<int>> &blocks,
                           const std::vector<std::pair<int, Vec>> &ws) const {
    if ((int)blocks.size() != k || (int)ws.size() != k)
        throw std::invalid_argument("gamma: one block and one argument per slot required");
    int n = 0;
    for (int j = 0; j < k; ++j) {
        if ((int)blocks[j].size() != ws[j].first)
            throw std::invalid_argument("gamma: block size must match the argument arity");
        n += ws[j].first;
    }
    Vec z = x;
    int cur = k;
    for (int j = k - 1; j >= 0; --j) {
        z = compose(cur, z, j, ws[j].first, ws[j].second);
        cur += ws[j].first - 1;
    }
    if (z.is_zero() || n == 0) return z;
    std::vector<int> images(n);
    int off = 0;
    for (int j = 0; j < k; ++j)
        for (int r = 0; r < (int)blocks[j].size(); ++r) images[off++] = blocks[j][r];
    Perm p = Perm::from_images(images);
    if (p.is_identity()) return z;
    return und_.action(n, p).apply(z);
}

SModuleMap DgOperad::gamma_map(const Composite &cc) const {
    SModuleMap g;
    g.degree = 0;
    for (const auto &[n, comp] : cc.module().components()) {
        SparseMatrix m(und_.dim(n), (int)comp.basis.size());
        for (int j = 0; j < (int)comp.basis.size(); ++j) {
            Vec val;
            for (const auto &s : cc.expand(n, j)) {
                std::vector<std::pair<int, Vec>> ws;
                for (int jj = 0; jj < s.k; ++jj)
                    ws.push_back({(int)s.blocks[jj].size(), Vec::unit(s.ws[jj])});
                val.axpy(s.coeff, gamma_blocks(s.k, Vec::unit(s.va), s.blocks, ws));
            }
            m.set_col(j, val);
        }
        g.comp[n] = std::move(m);
    }
    return g;
}

std::vector<std::string> DgOperad::axiom_violations() const {
    std::vector<std::string> out;
    try {
        und_.validate();
    } catch (const std::exception &e) {
        out.push_back(std::string("underlying module: ") + e.what());
    }
    auto name = [&](int n, int a) { return und_.elt(n, a).name; };
    // Unit: homogeneous of degree 0 and a cycle.
    if (!und_.has(1) || unit_.is_zero()) {
        out.push_back("unit: no unit element in arity 1");
    } else {
        for (const auto &[i, c] : unit_.entries())
            if (und_.elt(1, i).degree != 0) out.push_back("unit: not concentrated in degree 0");
        if (!und_.d(1).apply(unit_).is_zero()) out.push_back("unit: not a cycle");
        for (const auto &[n, cn] : und_.components())
            for (int a = 0; a < (int)cn.basis.size(); ++a) {
                for (int i = 0; i < n; ++i)
                    if (!(compose(n, Vec::unit(a), i, 1, unit_) == Vec::unit(a)))
                        out.push_back("unit law: '" + name(n, a) + "' o_" + std::to_string(i) +
                                      " 1 is not the identity");
                if (n <= trunc_.max_arity && !(compose(1, unit_, 0, n, Vec::unit(a)) == Vec::unit(a)))
                    out.push_back("unit law: 1 o_0 '" + name(n, a) + "' is not the identity");
            }
    }
    // Leibniz on every stored composite.
    for (const auto &[key, tbl] : comp_) {
        auto [n, m, i] = key;
        if (!und_.has(n) || !und_.has(m)) continue;
        for (int a = 0; a < und_.dim(n); ++a)
            for (int b = 0; b < und_.dim(m); ++b) {
                Vec lhs = und_.d(n + m - 1).apply(compose(n, Vec::unit(a), i, m, Vec::unit(b)));
                Vec rhs = compose(n, und_.d(n).col(a), i, m, Vec::unit(b));
                rhs.axpy(parity(und_.elt(n, a).degree), compose(n, Vec::unit(a), i, m, und_.d(m).col(b)));
                if (!(lhs == rhs))
                    out.push_back("Leibniz rule fails at '" + name(n, a) + "' o_" + std::to_string(i) +
                                  " '" + name(m, b) + "'");
            }
    }
    // Associativity on three-level composites whose every stage stays
    // inside the truncation.
    std::vector<int> arities;
    for (const auto &[n, cn] : und_.components())
        if (!cn.basis.empty()) arities.push_back(n);
    for (int n : arities)
        for (int m : arities)
            for (int l : arities) {
                if (n + m - 1 > trunc_.max_arity || n + m + l - 2 > trunc_.max_arity) continue;
                for (int a = 0; a < und_.dim(n); ++a)
                    for (int b = 0; b < und_.dim(m); ++b)
                        for (int c = 0; c < und_.dim(l); ++c) {
                            Vec ea = Vec::unit(a), eb = Vec::unit(b), ec = Vec::unit(c);
                            for (int i = 0; i < n; ++i) {
                                Vec ab = compose(n, ea, i, m, eb);
                                // nested: z lands inside y
                                for (int j = 0; j < m; ++j) {
                                    Vec lhs = compose(n + m - 1, ab, i + j, l, ec);
                                    Vec rhs = compose(n, ea, i, m + l - 1, compose(m, eb, j, l, ec));
                                    if (!(lhs == rhs))
                                        out.push_back("associativity (nested) fails at '" + name(n, a) +
                                                      "' o_" + std::to_string(i) + " '" + name(m, b) +
                                                      "' o_" + std::to_string(j) + " '" + name(l, c) + "'");
                                }
                                // disjoint: z lands in a later slot of x
                                if (n + l - 1 > trunc_.max_arity) continue;
                                for (int j = i + 1; j < n; ++j) {
                                    Vec lhs = compose(n + m - 1, ab, j + m - 1, l, ec);
                                    Vec rhs = compose(n + l - 1, compose(n, ea, j, l, ec), i, m, eb);
                                    rhs.scale(parity((long)und_.elt(m, b).degree * und_.elt(l, c).degree));
                                    if (!(lhs == rhs))
                                        out.push_back("associativity (disjoint) fails at '" + name(n, a) +
                                                      "' with '" + name(m, b) + "' in slot " +
                                                      std::to_string(i) + " and '" + name(l, c) +
                                                      "' in slot " + std::to_string(j));
                                }
                            }
                        }
            }
    // Equivariance and the chain-map property of the full structure map,
    // against the composite product.
    try {
        Composite cc(und_, und_, trunc_);
        SModuleMap g = gamma_map(cc);
        try {
            validate_map(cc.module(), und_, g);
        } catch (const std::exception &e) {
            out.push_back(std::string("structure map equivariance: ") + e.what());
        }
        for (const auto &[n, comp] : cc.module().components()) {
            SparseMatrix gn = g.comp.at(n);
            if (!(und_.d(n).mul(gn) == gn.mul(cc.module().d(n))))
                out.push_back("structure map is not a chain map at arity " + std::to_string(n));
        }
    } catch (const std::exception &e) {
        out.push_back(std::string("composite product check: ") + e.what());
    }
    return out;
}

void DgOperad::validate() const {
    auto v = axiom_violations();
    if (v.empty()) return;
    std::ostringstream os;
    os << "operad axioms violated:";
    for (const auto &s : v) os << "\n  " << s;
    throw std::runtime_error(os.str());
}

DgOperad tabulated_operad(const OperadData &data, const Truncation &t) {
    DgOperad p(data.underlying, data.unit, data.comp, t);
    p.validate();
    return p;
}

namespace {

SModuleMap effective_seed(const TreeModule &tm, const SModuleMap &u) {
    const SModule &gens = tm.generators();
    SModuleMap inc = tm.inclusion_of_generators();
    SModuleMap seed;
    seed.degree = -1;
    if (!u.comp.empty() && u.degree != -1)
        throw std::invalid_argument("free operad seed must have degree -1");
    for (const auto &[n, cn] : gens.components()) {
        SparseMatrix m = u.at_or_zero(n, tm.module().dim(n), (int)cn.basis.size());
        m = m.add(inc.at_or_zero(n, tm.module().dim(n), (int)cn.basis.size()).mul(gens.d(n)));
        seed.comp[n] = std::move(m);
    }
    validate_map(gens, tm.module(), seed);
    return seed;
}

DgOperad build_free_operad(const TreeModule &tm, const SModuleMap &seed) {
    SModule und = tm.module();
    SModuleMap der = tm.derivation(seed);
    for (const auto &[n, cn] : und.components())
        und.set_d(n, der.at_or_zero(n, (int)cn.basis.size(), (int)cn.basis.size()));
    // The derivation must square to zero; report a generator witness.
    for (const auto &[n, cn] : und.components()) {
        SparseMatrix d2 = und.d(n).mul(und.d(n));
        if (d2.is_zero()) continue;
        std::string witness;
        SModuleMap inc = tm.inclusion_of_generators();
        for (const auto &[gn, gc] : tm.generators().components())
            for (int g = 0; g < (int)gc.basis.size(); ++g) {
                Vec w = inc.comp.at(gn).col(g);
                if (!und.d(gn).apply(und.d(gn).apply(w)).is_zero() && witness.empty())
                    witness = tm.generators().elt(gn, g).name;
            }
        throw std::runtime_error("free operad differential does not square to zero" +
                                 (witness.empty() ? " at arity " + std::to_string(n)
                                                  : " on generator '" + witness + "'"));
    }
    const Truncation &t = tm.truncation();
    std::map<std::tuple<int, int, int>, SparseMatrix> tables;
    for (const auto &[n, cn] : und.components())
        for (const auto &[m, cm] : und.components()) {
            if (n + m - 1 > t.max_arity || !und.has(n + m - 1)) continue;
            int dn = (int)cn.basis.size(), dm = (int)cm.basis.size();
            for (int i = 0; i < n; ++i) {
                SparseMatrix tbl(und.dim(n + m - 1), dn * dm);
                for (int a = 0; a < dn; ++a)
                    for (int b = 0; b < dm; ++b)
                        tbl.set_col(a * dm + b, tm.graft_elements(n, Vec::unit(a), i, m, Vec::unit(b)));
                tables[std::make_tuple(n, m, i)] = std::move(tbl);
            }
        }
    return DgOperad(std::move(und), Vec::unit(tm.unit_index()), std::move(tables), t);
}

}  // namespace

FreeOperad::FreeOperad(const SModule &gens, const SModuleMap &u, const Truncation &t)
    : tm_(gens, t, true), seed_(effective_seed(tm_, u)), op_(build_free_operad(tm_, seed_)) {}

FreeOperad free_operad(const SModule &gens, const SModuleMap &u, const Truncation &t) {
    return FreeOperad(gens, u, t);
}

SModuleMap FreeOperad::extend(const DgOperad &q, const SModuleMap &phi) const {
    if (phi.degree != 0) throw std::invalid_argument("extend: the generator map must have degree 0");
    validate_map(tm_.generators(), q.underlying(), phi);
    SModuleMap out;
    out.degree = 0;
    // Evaluate a planar subtree bottom-up; returns its leaves in order and
    // its value, whose inputs are numbered by the rank of each leaf.
    struct Val {
        std::vector<int> leaves;
        Vec v;
    };
    for (const auto &[n, cn] : op_.underlying().components()) {
        SparseMatrix m(q.underlying().dim(n), (int)cn.basis.size());
        for (int idx = 0; idx < (int)cn.basis.size(); ++idx) {
            if (tm_.is_unit(n, idx)) {
                m.set_col(idx, q.unit());
                continue;
            }
            const LabelledTree &lt = tm_.at(n, idx);
            std::function<Val(const PTree &)> eval = [&](const PTree &node) -> Val {
                if (node.leaf) return {{node.label}, q.unit()};
                int k = (int)node.kids.size();
                std::vector<Val> kids;
                std::vector<int> leaves;
                for (const auto &kid : node.kids) {
                    kids.push_back(eval(kid));
                    leaves.insert(leaves.end(), kids.back().leaves.begin(), kids.back().leaves.end());
                }
                std::vector<int> sorted = leaves;
                std::sort(sorted.begin(), sorted.end());
                auto rank = [&](int l) {
                    return (int)(std::lower_bound(sorted.begin(), sorted.end(), l) - sorted.begin());
                };
                std::vector<std::vector<int>> blocks(k);
                std::vector<std::pair<int, Vec>> ws;
                for (int j = 0; j < k; ++j) {
                    std::vector<int> bl = kids[j].leaves;
                    std::sort(bl.begin(), bl.end());
                    for (int l : bl) blocks[j].push_back(rank(l));
                    ws.push_back({(int)bl.size(), kids[j].v});
                }
                Vec x = phi.comp.count(k) ? phi.comp.at(k).col(lt.labels[node.tag]) : Vec();
                return {leaves, q.gamma_blocks(k, x, blocks, ws)};
            };
            m.set_col(idx, eval(lt.tree.planar()).v);
        }
        out.comp[n] = std::move(m);
    }
    return out;
}

/* ---------------- endomorphism operads ---------------- */

namespace {

std::vector<std::pair<int, int>> carrier_basis(const ChainComplex &c) {
    std::vector<std::pair<int, int>> out;
    for (const auto &[d, dim] : c.dims())
        for (int j = 0; j < dim; ++j) out.push_back({d, j});
    return out;
}

std::string elementary_name(const ElementaryMap &e) {
    std::ostringstream os;
    os << e.out.first << "." << e.out.second << "[";
    for (size_t j = 0; j < e.ins.size(); ++j) {
        if (j) os << ",";
        os << e.ins[j].first << "." << e.ins[j].second;
    }
    os << "]";
    return os.str();
}

int elementary_degree(const ElementaryMap &e) {
    int d = e.out.first;
    for (const auto &i : e.ins) d -= i.first;
    return d;
}

}  // namespace

int EndModule::find(int arity, const ElementaryMap &e) const {
    auto it = basis.find(arity);
    if (it == basis.end()) return -1;
    auto pos = std::find(it->second.begin(), it->second.end(), e);
    return pos == it->second.end() ? -1 : (int)(pos - it->second.begin());
}

EndModule end_module(const ChainComplex &src, const ChainComplex &tgt, const Truncation &t) {
    t.validate();
    src.validate();
    tgt.validate();
    EndModule out;
    auto sb = carrier_basis(src), tb = carrier_basis(tgt);
    for (int n = 0; n <= t.max_arity; ++n) {
        std::vector<ElementaryMap> elts;
        // odometer over out and the n input slots, last slot fastest
        std::vector<size_t> pick(n, 0);
        for (const auto &o : tb) {
            if (n > 0 && sb.empty()) break;
            std::fill(pick.begin(), pick.end(), 0);
            while (true) {
                ElementaryMap e;
                e.out = o;
                for (int j = 0; j < n; ++j) e.ins.push_back(sb[pick[j]]);
                if (t.keeps(n, 1, elementary_degree(e))) elts.push_back(e);
                int j = n - 1;
                while (j >= 0 && ++pick[j] == sb.size()) pick[j--] = 0;
                if (j < 0) break;
            }
        }
        if (elts.empty()) continue;
        for (const auto &e : elts) out.mod.add_element(n, elementary_name(e), elementary_degree(e), 1);
        out.basis[n] = std::move(elts);
    }
    // differential: d_tgt o g - (-1)^{|g|} g o d_src^{(x)n}
    for (auto &[n, elts] : out.basis) {
        SparseMatrix dm(out.mod.dim(n), out.mod.dim(n));
        for (int col = 0; col < (int)elts.size(); ++col) {
            const ElementaryMap &e = elts[col];
            Vec v;
            SparseMatrix dt = tgt.d(e.out.first);
            Vec dout = dt.col(e.out.second);
            for (const auto &[r, c] : dout.entries()) {
                ElementaryMap e2 = e;
                e2.out = {e.out.first - 1, r};
                int row = out.find(n, e2);
                if (row >= 0) v.add(row, c);
            }
            Rat outer = -parity(elementary_degree(e));
            long below = 0;
            for (int j = 0; j < n; ++j) {
                SparseMatrix ds = src.d(e.ins[j].first + 1);  // V_{d+1} -> V_d
                for (const auto &[w, cw] : ds.row(e.ins[j].second).entries()) {
                    ElementaryMap e2 = e;
                    e2.ins[j] = {e.ins[j].first + 1, w};
                    int row = out.find(n, e2);
                    if (row >= 0) v.add(row, outer * parity(below) * cw);
                }
                below += e.ins[j].first;
            }
            dm.set_col(col, v);
        }
        out.mod.set_d(n, dm);
    }
    // action: adjacent transpositions swap inputs with the Koszul sign
    for (auto &[n, elts] : out.basis) {
        for (int i = 0; i + 1 < n; ++i) {
            SparseMatrix am(out.mod.dim(n), out.mod.dim(n));
            for (int col = 0; col < (int)elts.size(); ++col) {
                ElementaryMap e2 = elts[col];
                std::swap(e2.ins[i], e2.ins[i + 1]);
                int row = out.find(n, e2);
                if (row < 0) throw std::logic_error("input swap left the endomorphism basis");
                am.set(row, col, parity((long)e2.ins[i].first * e2.ins[i + 1].first));
            }
            out.mod.set_gen_action(n, i, am);
        }
    }
    return out;
}

namespace {

std::map<std::tuple<int, int, int>, SparseMatrix> end_tables(const EndModule &em, const Truncation &t) {
    std::map<std::tuple<int, int, int>, SparseMatrix> tables;
    for (const auto &[n, en] : em.basis)
        for (const auto &[m, emm] : em.basis) {
            if (n + m - 1 > t.max_arity || n < 1) continue;
            int dn = (int)en.size(), dm = (int)emm.size();
            for (int i = 0; i < n; ++i) {
                SparseMatrix tbl(em.mod.dim(n + m - 1), dn * dm);
                for (int a = 0; a < dn; ++a) {
                    const ElementaryMap &g = en[a];
                    long below = 0;
                    for (int j = 0; j < i; ++j) below += g.ins[j].first;
                    for (int b = 0; b < dm; ++b) {
                        const ElementaryMap &h = emm[b];
                        if (g.ins[i] != h.out) continue;
                        ElementaryMap r;
                        r.out = g.out;
                        r.ins.assign(g.ins.begin(), g.ins.begin() + i);
                        r.ins.insert(r.ins.end(), h.ins.begin(), h.ins.end());
                        r.ins.insert(r.ins.end(), g.ins.begin() + i + 1, g.ins.end());
                        int row = em.find(n + m - 1, r);
                        if (row < 0) continue;  // outside the degree window
                        tbl.set(row, a * dm + b, parity((long)elementary_degree(h) * below));
                    }
                }
                tables[std::make_tuple(n, m, i)] = std::move(tbl);
            }
        }
    return tables;
}

Vec end_identity(const ChainComplex &c, const EndModule &em) {
    Vec u;
    for (const auto &x : carrier_basis(c)) {
        int i = em.find(1, ElementaryMap{x, {x}});
        if (i >= 0) u.add(i, Rat(1));
    }
    return u;
}

DgOperad build_end_operad(const ChainComplex &c, const EndModule &em, const Truncation &t) {
    return DgOperad(em.mod, end_identity(c, em), end_tables(em, t), t);
}

}  // namespace

EndOperad::EndOperad(const ChainComplex &carrier, const Truncation &t)
    : carrier_(carrier), em_(end_module(carrier, carrier, t)), op_(build_end_operad(carrier_, em_, t)) {}

EndOperad end_operad(const ChainComplex &c, const Truncation &t) { return EndOperad(c, t); }

/* ---------------- pullback along a chain map ---------------- */

EndPullback end_pullback(const ChainComplex &v, const ChainComplex &w, const ChainMap &f,
                         const Truncation &t) {
    validate_chain_map(v, w, f);
    EndModule ev = end_module(v, v, t), ew = end_module(w, w, t), evw = end_module(v, w, t);
    auto fmat = [&](int d) { return f.at_or_zero(d, w.dim(d), v.dim(d)); };

    // Constraint per arity: (g_V, g_W) -> f o g_V - g_W o f^{(x)n}.
    std::map<int, SparseMatrix> constraint;
    for (int n = 0; n <= t.max_arity; ++n) {
        int dv = ev.mod.dim(n), dw = ew.mod.dim(n);
        if (dv + dw == 0) continue;
        SparseMatrix cm(evw.mod.dim(n), dv + dw);
        auto evb = ev.basis.count(n) ? ev.basis.at(n) : std::vector<ElementaryMap>{};
        for (int a = 0; a < dv; ++a) {
            const ElementaryMap &g = evb[a];
            SparseMatrix fd = fmat(g.out.first);
            Vec fcol = fd.col(g.out.second);
            for (const auto &[r, c] : fcol.entries()) {
                ElementaryMap e2 = g;
                e2.out = {g.out.first, r};
                int row = evw.find(n, e2);
                if (row >= 0) cm.add_to(row, a, c);
            }
        }
        auto ewb = ew.basis.count(n) ? ew.basis.at(n) : std::vector<ElementaryMap>{};
        for (int b = 0; b < dw; ++b) {
            const ElementaryMap &h = ewb[b];
            // expand h o f^{(x)n} over source-basis choices with nonzero f rows
            std::vector<Vec> rows(n);
            bool dead = false;
            for (int j = 0; j < n; ++j) {
                rows[j] = fmat(h.ins[j].first).row(h.ins[j].second);
                if (rows[j].is_zero()) dead = true;
            }
            if (dead) continue;
            std::vector<std::map<int, Rat>::const_iterator> it(n), begin(n), end(n);
            for (int j = 0; j < n; ++j) {
                begin[j] = rows[j].entries().begin();
                end[j] = rows[j].entries().end();
                it[j] = begin[j];
            }
            while (true) {
                ElementaryMap e2;
                e2.out = h.out;
                Rat coeff(1);
                for (int j = 0; j < n; ++j) {
                    e2.ins.push_back({h.ins[j].first, it[j]->first});
                    coeff *= it[j]->second;
                }
                int row = evw.find(n, e2);
                if (row >= 0) cm.add_to(row, dv + b, -coeff);
                int j = n - 1;
                while (j >= 0 && ++it[j] == end[j]) it[j--] = begin[j];
                if (j < 0) break;
            }
        }
        constraint[n] = std::move(cm);
    }

    // Kernel basis per arity and degree; build the module.
    SModule und;
    std::map<int, SparseMatrix> incl;
    for (const auto &[n, cm] : constraint) {
        int dv = ev.mod.dim(n), dw = ew.mod.dim(n);
        std::set<int> degs;
        for (int a = 0; a < dv; ++a) degs.insert(ev.mod.elt(n, a).degree);
        for (int b = 0; b < dw; ++b) degs.insert(ew.mod.elt(n, b).degree);
        std::vector<Vec> cols;
        std::vector<int> coldeg;
        for (int d : degs) {
            std::vector<int> idx;
            for (int a = 0; a < dv; ++a)
                if (ev.mod.elt(n, a).degree == d) idx.push_back(a);
            for (int b = 0; b < dw; ++b)
                if (ew.mod.elt(n, b).degree == d) idx.push_back(dv + b);
            SparseMatrix sub(cm.rows(), (int)idx.size());
            for (int j = 0; j < (int)idx.size(); ++j) sub.set_col(j, cm.col(idx[j]));
            for (const Vec &k : sub.kernel_basis()) {
                Vec full;
                for (const auto &[j, c] : k.entries()) full.add(idx[j], c);
                cols.push_back(full);
                coldeg.push_back(d);
            }
        }
        if (cols.empty()) continue;
        SparseMatrix inc(dv + dw, (int)cols.size());
        for (int j = 0; j < (int)cols.size(); ++j) {
            inc.set_col(j, cols[j]);
            und.add_element(n, "k" + std::to_string(coldeg[j]) + "_" + std::to_string(j), coldeg[j], 1);
        }
        incl[n] = std::move(inc);
    }

    // Differential and action restrict to the kernel.
    for (const auto &[n, inc] : incl) {
        SparseMatrix big = block_diag(ev.mod.d(n), ew.mod.d(n));
        SparseMatrix image = big.mul(inc);
        SparseMatrix dm(inc.cols(), inc.cols());
        for (int j = 0; j < inc.cols(); ++j)
            dm.set_col(j, through_basis(inc, image.col(j), "pullback differential"));
        und.set_d(n, dm);
        for (int i = 0; i + 1 < n; ++i) {
            SparseMatrix abig = block_diag(ev.mod.action(n, Perm::adjacent(n, i)),
                                           ew.mod.action(n, Perm::adjacent(n, i)));
            SparseMatrix aim = abig.mul(inc);
            SparseMatrix am(inc.cols(), inc.cols());
            for (int j = 0; j < inc.cols(); ++j)
                am.set_col(j, through_basis(inc, aim.col(j), "pullback action"));
            und.set_gen_action(n, i, am);
        }
    }

    // Componentwise composition, expressed through the kernel basis.
    DgOperad opv = build_end_operad(v, ev, t), opw = build_end_operad(w, ew, t);
    std::map<std::tuple<int, int, int>, SparseMatrix> tables;
    for (const auto &[n, incn] : incl)
        for (const auto &[m, incm] : incl) {
            if (n < 1 || n + m - 1 > t.max_arity || !incl.count(n + m - 1)) continue;
            const SparseMatrix &inct = incl.at(n + m - 1);
            int dvt = ev.mod.dim(n + m - 1);
            for (int i = 0; i < n; ++i) {
                SparseMatrix tbl(inct.cols(), incn.cols() * incm.cols());
                for (int a = 0; a < incn.cols(); ++a)
                    for (int b = 0; b < incm.cols(); ++b) {
                        Vec xa = incn.col(a), xb = incm.col(b);
                        Vec xav, xaw, xbv, xbw;
                        for (const auto &[r, c] : xa.entries()) {
                            if (r < ev.mod.dim(n)) xav.add(r, c);
                            else xaw.add(r - ev.mod.dim(n), c);
                        }
                        for (const auto &[r, c] : xb.entries()) {
                            if (r < ev.mod.dim(m)) xbv.add(r, c);
                            else xbw.add(r - ev.mod.dim(m), c);
                        }
                        Vec rv = opv.compose(n, xav, i, m, xbv), rw = opw.compose(n, xaw, i, m, xbw);
                        Vec full = rv;
                        for (const auto &[r, c] : rw.entries()) full.add(dvt + r, c);
                        tbl.set_col(a * incm.cols() + b,
                                    through_basis(inct, full, "pullback composition"));
                    }
                tables[std::make_tuple(n, m, i)] = std::move(tbl);
            }
        }

    Vec unit;
    if (incl.count(1)) {
        Vec idv = end_identity(v, ev), idw = end_identity(w, ew);
        Vec full = idv;
        for (const auto &[r, c] : idw.entries()) full.add(ev.mod.dim(1) + r, c);
        unit = through_basis(incl.at(1), full, "pullback unit");
    }
    DgOperad op(std::move(und), std::move(unit), std::move(tables), t);
    return EndPullback{std::move(ev), std::move(ew), std::move(incl), std::move(op)};
}

/* ---------------- homology ---------------- */

SModule operad_homology(const DgOperad &p) {
    const SModule &und = p.underlying();
    SModule h;
    for (const auto &[n, cn] : und.components()) {
        ChainComplex cx = und.chain(n);
        Contraction con = homology_splitting(cx);
        int total = 0;
        for (const auto &[d, hd] : con.h_dims) total += hd;
        if (total == 0) continue;
        SparseMatrix inc((int)cn.basis.size(), total), proj(total, (int)cn.basis.size());
        int col = 0;
        for (const auto &[d, hd] : con.h_dims) {
            if (hd == 0) continue;
            std::vector<int> flat = und.degree_indices(n, d);
            const SparseMatrix &id = con.incl.at(d);
            const SparseMatrix &pd = con.proj.at(d);
            for (int j = 0; j < hd; ++j) {
                h.add_element(n, "h" + std::to_string(d) + "_" + std::to_string(j), d, 1);
                Vec ic = id.col(j);
                for (const auto &[r, c] : ic.entries()) inc.set(flat[r], col, c);
                const Vec &pr = pd.row(j);
                for (const auto &[r, c] : pr.entries()) proj.set(col, flat[r], c);
                ++col;
            }
        }
        for (int i = 0; i + 1 < n; ++i)
            h.set_gen_action(n, i, proj.mul(und.action(n, Perm::adjacent(n, i))).mul(inc));
    }
    return h;
}

}  // namespace opal

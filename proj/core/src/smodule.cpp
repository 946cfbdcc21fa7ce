#include "opal/smodule.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace opal {

void Truncation::validate() const {
    if (max_arity < 1) throw std::invalid_argument("truncation: max_arity must be >= 1");
    if (max_weight < 1) throw std::invalid_argument("truncation: max_weight must be >= 1");
    if (degree_min > degree_max) throw std::invalid_argument("truncation: empty degree window");
}

const SModule::Component &SModule::at(int arity) const {
    auto it = comp_.find(arity);
    if (it == comp_.end()) throw std::out_of_range("no component in arity " + std::to_string(arity));
    return it->second;
}

int SModule::add_element(int arity, std::string name, int degree, int weight) {
    auto &c = comp_[arity];
    c.basis.push_back(Elt{std::move(name), degree, weight});
    return (int)c.basis.size() - 1;
}

int SModule::dim(int arity) const {
    auto it = comp_.find(arity);
    return it == comp_.end() ? 0 : (int)it->second.basis.size();
}

int SModule::dim(int arity, int degree) const {
    auto it = comp_.find(arity);
    if (it == comp_.end()) return 0;
    int n = 0;
    for (const auto &e : it->second.basis)
        if (e.degree == degree) ++n;
    return n;
}

int SModule::find(int arity, const std::string &name) const {
    auto it = comp_.find(arity);
    if (it == comp_.end()) return -1;
    for (size_t i = 0; i < it->second.basis.size(); ++i)
        if (it->second.basis[i].name == name) return (int)i;
    return -1;
}

void SModule::set_d(int arity, SparseMatrix m) {
    if (m.rows() != dim(arity) || m.cols() != dim(arity))
        throw std::invalid_argument("differential must be square on the component");
    comp_[arity].d = std::move(m);
}

SparseMatrix SModule::d(int arity) const {
    auto it = comp_.find(arity);
    if (it == comp_.end()) return SparseMatrix(0, 0);
    if (it->second.d.rows() == 0 && dim(arity) > 0) return SparseMatrix(dim(arity), dim(arity));
    return it->second.d;
}

void SModule::set_gen_action(int arity, int i, SparseMatrix m) {
    if (arity < 2 || i < 0 || i + 1 >= arity)
        throw std::invalid_argument("generator index out of range");
    if (m.rows() != dim(arity) || m.cols() != dim(arity))
        throw std::invalid_argument("action matrix must be square on the component");
    auto &c = comp_[arity];
    if ((int)c.gen_action.size() != arity - 1) c.gen_action.assign(arity - 1, SparseMatrix());
    c.gen_action[i] = std::move(m);
}

void SModule::set_sign_action(int arity) {
    for (int i = 0; i + 1 < arity; ++i)
        set_gen_action(arity, i, SparseMatrix::identity(dim(arity)).scaled(Rat(-1)));
}

SparseMatrix SModule::action(int arity, const Perm &p) const {
    int n = dim(arity);
    if (p.n() != arity) throw std::invalid_argument("permutation size does not match arity");
    auto it = comp_.find(arity);
    if (it == comp_.end() || it->second.gen_action.empty() || p.is_identity())
        return SparseMatrix::identity(n);
    auto gen = [&](int i) -> const SparseMatrix & {
        const SparseMatrix &g = it->second.gen_action[i];
        if (g.rows() != n) throw std::runtime_error("unset adjacent transposition action");
        return g;
    };
    SparseMatrix out = SparseMatrix::identity(n);
    for (int i : p.adjacent_word()) out = out.mul(gen(i));
    return out;
}

void SModule::validate(bool d_squares_to_zero) const {
    for (const auto &[arity, c] : comp_) {
        int n = (int)c.basis.size();
        SparseMatrix dm = d(arity);
        if (dm.rows() != n || dm.cols() != n)
            throw std::runtime_error("differential shape mismatch in arity " + std::to_string(arity));
        for (int r = 0; r < n; ++r)
            for (const auto &[cc, v] : dm.row(r).entries()) {
                (void)v;
                if (c.basis[r].degree != c.basis[cc].degree - 1)
                    throw std::runtime_error("differential is not of degree -1 in arity " + std::to_string(arity));
            }
        if (d_squares_to_zero && !dm.mul(dm).is_zero())
            throw std::runtime_error("d*d != 0 in arity " + std::to_string(arity));
        if (!c.gen_action.empty()) {
            if ((int)c.gen_action.size() != arity - 1)
                throw std::runtime_error("wrong number of generator actions in arity " + std::to_string(arity));
            for (int i = 0; i + 1 < arity; ++i) {
                const SparseMatrix &g = c.gen_action[i];
                if (g.rows() != n || g.cols() != n)
                    throw std::runtime_error("action shape mismatch in arity " + std::to_string(arity));
                for (int r = 0; r < n; ++r)
                    for (const auto &[cc, v] : g.row(r).entries()) {
                        (void)v;
                        if (c.basis[r].degree != c.basis[cc].degree || c.basis[r].weight != c.basis[cc].weight)
                            throw std::runtime_error("action is not degree- and weight-preserving in arity " +
                                                     std::to_string(arity));
                    }
                if (!(g.mul(g) == SparseMatrix::identity(n)))
                    throw std::runtime_error("transposition action is not an involution in arity " +
                                             std::to_string(arity));
                if (!(g.mul(dm) == dm.mul(g)))
                    throw std::runtime_error("action does not commute with d in arity " + std::to_string(arity));
            }
            for (int i = 0; i + 2 < arity; ++i) {
                const SparseMatrix &a = c.gen_action[i];
                const SparseMatrix &b = c.gen_action[i + 1];
                if (!(a.mul(b).mul(a) == b.mul(a).mul(b)))
                    throw std::runtime_error("braid relation fails in arity " + std::to_string(arity));
            }
            for (int i = 0; i + 1 < arity; ++i)
                for (int j = i + 2; j + 1 < arity; ++j) {
                    const SparseMatrix &a = c.gen_action[i];
                    const SparseMatrix &b = c.gen_action[j];
                    if (!(a.mul(b) == b.mul(a)))
                        throw std::runtime_error("distant transpositions fail to commute in arity " +
                                                 std::to_string(arity));
                }
        }
    }
}

ChainComplex SModule::chain(int arity) const {
    ChainComplex cx;
    auto it = comp_.find(arity);
    if (it == comp_.end()) return cx;
    std::map<int, std::vector<int>> slices;
    for (int i = 0; i < (int)it->second.basis.size(); ++i)
        slices[it->second.basis[i].degree].push_back(i);
    for (const auto &[deg, idx] : slices) cx.set_dim(deg, (int)idx.size());
    SparseMatrix dm = d(arity);
    for (const auto &[deg, idx] : slices) {
        auto below = slices.find(deg - 1);
        if (below == slices.end()) continue;
        SparseMatrix m((int)below->second.size(), (int)idx.size());
        for (int cj = 0; cj < (int)idx.size(); ++cj)
            for (int ri = 0; ri < (int)below->second.size(); ++ri)
                m.set(ri, cj, dm.get(below->second[ri], idx[cj]));
        cx.set_d(deg, m);
    }
    return cx;
}

std::vector<int> SModule::degree_indices(int arity, int degree) const {
    std::vector<int> out;
    auto it = comp_.find(arity);
    if (it == comp_.end()) return out;
    for (int i = 0; i < (int)it->second.basis.size(); ++i)
        if (it->second.basis[i].degree == degree) out.push_back(i);
    return out;
}

SModule SModule::unit() {
    SModule m;
    m.add_element(1, "1", 0, 0);
    return m;
}

SparseMatrix SModuleMap::at_or_zero(int arity, int rows, int cols) const {
    auto it = comp.find(arity);
    if (it != comp.end()) return it->second;
    return SparseMatrix(rows, cols);
}

void validate_map(const SModule &src, const SModule &tgt, const SModuleMap &f) {
    for (const auto &[arity, m] : f.comp) {
        if (m.rows() != tgt.dim(arity) || m.cols() != src.dim(arity))
            throw std::runtime_error("map shape mismatch in arity " + std::to_string(arity));
        for (int r = 0; r < m.rows(); ++r)
            for (const auto &[c, v] : m.row(r).entries()) {
                (void)v;
                if (tgt.elt(arity, r).degree != src.elt(arity, c).degree + f.degree)
                    throw std::runtime_error("map is not degree-homogeneous in arity " + std::to_string(arity));
            }
        for (int i = 0; i + 1 < arity; ++i) {
            Perm s = Perm::adjacent(arity, i);
            if (!(tgt.action(arity, s).mul(m) == m.mul(src.action(arity, s))))
                throw std::runtime_error("map is not equivariant in arity " + std::to_string(arity));
        }
    }
}

std::string composite_name(const std::string &vname, const std::vector<std::vector<int>> &blocks,
                           const std::vector<std::string> &wnames) {
    std::ostringstream os;
    os << vname;
    for (size_t j = 0; j < blocks.size(); ++j) {
        os << "(";
        for (size_t p = 0; p < blocks[j].size(); ++p) {
            if (p) os << ",";
            os << blocks[j][p] + 1;
        }
        os << ":" << wnames[j] << ")";
    }
    return os.str();
}

namespace {

std::string encode_blocks(const std::vector<std::vector<int>> &blocks) {
    std::ostringstream os;
    for (const auto &b : blocks) {
        for (size_t p = 0; p < b.size(); ++p) os << (p ? "," : "") << b[p];
        os << "|";
    }
    return os.str();
}

std::string encode_tuple(int a, const std::vector<int> &t) {
    std::ostringstream os;
    os << a;
    for (int x : t) os << "," << x;
    return os.str();
}

/* Representative ordered partitions of {0..n-1} into k blocks: nonempty
   blocks carry ascending minima and precede the empty blocks. Enumerated in
   lexicographic order of the assignment word. */
std::vector<std::vector<std::vector<int>>> representative_partitions(int n, int k) {
    std::vector<std::vector<std::vector<int>>> out;
    if (n == 0) {
        out.emplace_back(k);  // k empty blocks (none when k = 0)
        return out;
    }
    if (k == 0) return out;  // no maps from a nonempty set into no blocks
    std::vector<int> asgn(n, 0);
    auto emit = [&]() {
        int seen = 0;
        for (int i = 0; i < n; ++i) {
            if (asgn[i] > seen) return;  // not a restricted-growth word
            if (asgn[i] == seen) ++seen;
        }
        std::vector<std::vector<int>> blocks(k);
        for (int i = 0; i < n; ++i) blocks[asgn[i]].push_back(i);
        out.push_back(std::move(blocks));
    };
    while (true) {
        emit();
        int i = n - 1;
        while (i >= 0 && asgn[i] == k - 1) asgn[i--] = 0;
        if (i < 0) break;
        ++asgn[i];
    }
    return out;
}

}  // namespace

namespace detail {

struct Family {
    int k = 0;
    std::vector<std::vector<int>> blocks;
    int empties = 0;
    std::vector<std::pair<int, std::vector<int>>> tuples;  // (v index, w indices)
    std::map<std::string, int> tuple_index;
    bool free_rep = true;
    SparseMatrix local;  // tuples x local basis columns (identity when free)
    int base = 0;        // offset into the result basis of this arity
};

struct CompositeBuild {
    SModule result;
    // per result arity: families in order, and lookup (k, blocks) -> family
    std::map<int, std::vector<Family>> fams;
    std::map<int, std::map<std::string, int>> fam_index;  // key: k|blocks

    const SModule *v = nullptr;
    const SModule *w = nullptr;

    static std::string fam_key(int k, const std::vector<std::vector<int>> &blocks) {
        return std::to_string(k) + "#" + encode_blocks(blocks);
    }

    /* Accumulate coeff * (va ⊗ blocks ⊗ w-tuple) into a raw per-family tuple
       vector; blocks must already be in representative order. */
    void push_tuple(int n, int k, const std::vector<std::vector<int>> &blocks, int va,
                    const std::vector<int> &ts, const Rat &coeff, std::map<std::pair<int, int>, Rat> &acc) const {
        auto nit = fam_index.find(n);
        if (nit == fam_index.end()) return;
        auto fit = nit->second.find(fam_key(k, blocks));
        if (fit == nit->second.end()) return;
        const Family &fam = fams.at(n)[fit->second];
        auto tit = fam.tuple_index.find(encode_tuple(va, ts));
        if (tit == fam.tuple_index.end()) return;
        auto key = std::make_pair(fit->second, tit->second);
        auto it = acc.find(key);
        if (it == acc.end()) {
            if (!coeff.is_zero()) acc[key] = coeff;
        } else {
            it->second += coeff;
            if (it->second.is_zero()) acc.erase(it);
        }
    }

    /* Express an accumulated raw vector through the local bases into result
       basis coordinates for arity n. */
    Vec express(int n, const std::map<std::pair<int, int>, Rat> &acc) const {
        Vec out;
        auto nit = fams.find(n);
        if (nit == fams.end()) return out;
        const auto &fs = nit->second;
        std::map<int, Vec> per_fam;
        for (const auto &[key, c] : acc) per_fam[key.first].set(key.second, c);
        for (const auto &[fi, raw] : per_fam) {
            const Family &fam = fs[fi];
            if (fam.free_rep) {
                for (const auto &[t, c] : raw.entries()) out.add(fam.base + t, c);
            } else {
                auto sol = fam.local.solve(project(fam, raw));
                if (!sol)
                    throw std::runtime_error("composite element failed to reduce to coinvariant basis");
                for (const auto &[j, c] : sol->entries()) out.add(fam.base + j, c);
            }
        }
        return out;
    }

    /* Project a raw tuple vector with the stabilizer averaging projector of
       the family (identity for free families). */
    Vec project(const Family &fam, const Vec &raw) const;

    /* The diagonal stabilizer action of tau (a permutation of the empty
       slots, embedded at the end of S_k) on a tuple, as a vector. */
    Vec stab_act(const Family &fam, const Perm &tau_k, int tuple) const;
};

Rat tensor_move_sign(const Perm &slot_perm, const std::vector<int> &degrees) {
    return koszul_sign(slot_perm, degrees);
}

Vec CompositeBuild::stab_act(const Family &fam, const Perm &tau_k, int tuple) const {
    const auto &[va, ts] = fam.tuples[tuple];
    // v-part: v · tau^{-1} = action(tau) v on the basis vector va.
    SparseMatrix av = v->action(fam.k, tau_k);
    // w-part: factor j moves to slot tau(j); all permuted factors have arity 0.
    std::vector<int> degs(fam.k);
    for (int j = 0; j < fam.k; ++j) degs[j] = w->elt((int)fam.blocks[j].size(), ts[j]).degree;
    Rat sgn = tensor_move_sign(tau_k, degs);
    std::vector<int> new_ts(fam.k);
    for (int j = 0; j < fam.k; ++j) new_ts[tau_k(j)] = ts[j];
    Vec out;
    Vec vcol = av.col(va);
    for (const auto &[b, c] : vcol.entries()) {
        auto tit = fam.tuple_index.find(encode_tuple(b, new_ts));
        if (tit == fam.tuple_index.end())
            throw std::runtime_error("stabilizer action left the tuple set");
        out.add(tit->second, sgn * c);
    }
    return out;
}

Vec CompositeBuild::project(const Family &fam, const Vec &raw) const {
    if (fam.free_rep) return raw;
    int e = fam.empties;
    std::vector<Perm> stab = Perm::all(e);
    Vec out;
    for (const Perm &tau : stab) {
        // Embed tau on the last e slots of S_k.
        std::vector<int> img(fam.k);
        for (int j = 0; j < fam.k - e; ++j) img[j] = j;
        for (int j = 0; j < e; ++j) img[fam.k - e + j] = fam.k - e + tau(j);
        Perm tk = Perm::from_images(img);
        for (const auto &[t, c] : raw.entries()) out.axpy(c, stab_act(fam, tk, t));
    }
    out.scale(Rat(1, (long)stab.size()));
    return out;
}

}  // namespace detail

namespace {

using detail::CompositeBuild;
using detail::Family;
using detail::tensor_move_sign;

CompositeBuild build_composite(const SModule &v, const SModule &w, const Truncation &t) {
    t.validate();
    CompositeBuild b;
    b.v = &v;
    b.w = &w;

    // Result arities: any n achievable; bounded by max_arity.
    for (int n = 0; n <= t.max_arity; ++n) {
        std::vector<Family> fams;
        std::map<std::string, int> index;
        for (const auto &[k, vc] : v.components()) {
            for (auto &blocks : representative_partitions(n, k)) {
                bool ok = true;
                for (const auto &blk : blocks)
                    if (!w.has((int)blk.size())) {
                        ok = false;
                        break;
                    }
                if (!ok) continue;
                Family fam;
                fam.k = k;
                fam.blocks = blocks;
                fam.empties = 0;
                for (const auto &blk : blocks)
                    if (blk.empty()) ++fam.empties;
                // Tuples, truncation-filtered.
                int nv = v.dim(k);
                std::vector<int> sizes;
                for (const auto &blk : blocks) sizes.push_back((int)blk.size());
                bool any_empty_factor = false;
                for (int sz : sizes)
                    if (w.dim(sz) == 0) any_empty_factor = true;
                for (int a = 0; a < nv && !any_empty_factor; ++a) {
                    std::vector<int> ts(k, 0);
                    while (true) {  // odometer over w indices
                        int deg = v.elt(k, a).degree;
                        int wt = v.elt(k, a).weight;
                        for (int j = 0; j < k; ++j) {
                            deg += w.elt(sizes[j], ts[j]).degree;
                            wt += w.elt(sizes[j], ts[j]).weight;
                        }
                        if (t.keeps(n, wt, deg)) {
                            fam.tuple_index[encode_tuple(a, ts)] = (int)fam.tuples.size();
                            fam.tuples.emplace_back(a, ts);
                        }
                        if (k == 0) break;
                        int j = k - 1;
                        while (j >= 0 && ++ts[j] >= w.dim(sizes[j])) ts[j--] = 0;
                        if (j < 0) break;
                    }
                }
                fam.free_rep = fam.empties < 2;
                if (fam.tuples.empty()) continue;
                index[CompositeBuild::fam_key(k, blocks)] = (int)fams.size();
                fams.push_back(std::move(fam));
            }
        }
        if (!fams.empty()) {
            b.fams[n] = std::move(fams);
            b.fam_index[n] = std::move(index);
        }
    }

    // Local bases (coinvariants) and result basis elements.
    for (auto &[n, fs] : b.fams) {
        int base = 0;
        for (auto &fam : fs) {
            fam.base = base;
            if (fam.free_rep) {
                fam.local = SparseMatrix::identity((int)fam.tuples.size());
                for (const auto &[a, ts] : fam.tuples) {
                    std::vector<std::string> wnames;
                    int deg = v.elt(fam.k, a).degree;
                    int wt = v.elt(fam.k, a).weight;
                    for (int j = 0; j < fam.k; ++j) {
                        const auto &we = w.elt((int)fam.blocks[j].size(), ts[j]);
                        wnames.push_back(we.name);
                        deg += we.degree;
                        wt += we.weight;
                    }
                    b.result.add_element(n, composite_name(v.elt(fam.k, a).name, fam.blocks, wnames), deg, wt);
                    ++base;
                }
            } else {
                // Image basis of the averaging projector.
                int nt = (int)fam.tuples.size();
                SparseMatrix p(nt, nt);
                for (int t0 = 0; t0 < nt; ++t0) {
                    Vec raw;
                    raw.set(t0, Rat(1));
                    p.set_col(t0, b.project(fam, raw));
                }
                auto img = p.image_basis();
                fam.local = SparseMatrix(nt, (int)img.size());
                for (int j = 0; j < (int)img.size(); ++j) fam.local.set_col(j, img[j]);
                for (int j = 0; j < (int)img.size(); ++j) {
                    int lead_tuple = *img[j].leading();
                    const auto &[a, ts] = fam.tuples[lead_tuple];
                    std::vector<std::string> wnames;
                    int deg = v.elt(fam.k, a).degree;
                    int wt = v.elt(fam.k, a).weight;
                    for (int jj = 0; jj < fam.k; ++jj) {
                        const auto &we = w.elt((int)fam.blocks[jj].size(), ts[jj]);
                        wnames.push_back(we.name);
                        deg += we.degree;
                        wt += we.weight;
                    }
                    b.result.add_element(
                        n, composite_name(v.elt(fam.k, a).name, fam.blocks, wnames) + "~" + std::to_string(j), deg,
                        wt);
                    ++base;
                }
            }
        }
    }

    // Differential: slot-wise Leibniz over each tuple of each local vector.
    for (auto &[n, fs] : b.fams) {
        int dimn = b.result.dim(n);
        SparseMatrix dm(dimn, dimn);
        for (const auto &fam : fs) {
            int nlocal = fam.local.cols();
            for (int j = 0; j < nlocal; ++j) {
                std::map<std::pair<int, int>, Rat> acc;
                Vec lv = fam.local.col(j);
                for (const auto &[tq, tc] : lv.entries()) {
                    const auto &[a, ts] = fam.tuples[tq];
                    // dv part
                    Vec dva = v.d(fam.k).col(a);
                    for (const auto &[a2, c2] : dva.entries())
                        b.push_tuple(n, fam.k, fam.blocks, a2, ts, tc * c2, acc);
                    // dw parts, sign (-1)^{|v| + sum of earlier |w|}
                    long e = v.elt(fam.k, a).degree;
                    for (int slot = 0; slot < fam.k; ++slot) {
                        int sz = (int)fam.blocks[slot].size();
                        Vec dws = w.d(sz).col(ts[slot]);
                        for (const auto &[b2, c2] : dws.entries()) {
                            std::vector<int> nts = ts;
                            nts[slot] = b2;
                            b.push_tuple(n, fam.k, fam.blocks, a, nts, tc * c2 * sign_pow(e), acc);
                        }
                        e += w.elt(sz, ts[slot]).degree;
                    }
                }
                dm.set_col(fam.base + j, b.express(n, acc));
            }
        }
        b.result.set_d(n, dm);
    }

    // Induced S_n-action on adjacent transpositions.
    for (auto &[n, fs] : b.fams) {
        int dimn = b.result.dim(n);
        for (int gi = 0; gi + 1 < n; ++gi) {
            Perm s = Perm::adjacent(n, gi);
            SparseMatrix am(dimn, dimn);
            for (const auto &fam : fs) {
                int nlocal = fam.local.cols();
                for (int j = 0; j < nlocal; ++j) {
                    std::map<std::pair<int, int>, Rat> acc;
                    Vec lv = fam.local.col(j);
                    for (const auto &[tq, tc] : lv.entries()) {
                        const auto &[a, ts] = fam.tuples[tq];
                        // Relabel leaves by s: new blocks, then sort to representative.
                        std::vector<std::vector<int>> relabeled(fam.k);
                        std::vector<Perm> within;
                        for (int slot = 0; slot < fam.k; ++slot) {
                            std::vector<int> nb;
                            for (int x : fam.blocks[slot]) nb.push_back(s(x));
                            std::vector<int> sorted_nb = nb;
                            std::sort(sorted_nb.begin(), sorted_nb.end());
                            // within-block permutation: input i of the factor sits on
                            // leaf nb[i], which is slot pi(i) in the new ascending order
                            std::vector<int> pi(nb.size());
                            for (size_t i2 = 0; i2 < nb.size(); ++i2)
                                pi[i2] = (int)(std::lower_bound(sorted_nb.begin(), sorted_nb.end(), nb[i2]) -
                                               sorted_nb.begin());
                            relabeled[slot] = sorted_nb;
                            within.push_back(Perm::from_images(pi));
                        }
                        // Sort blocks to representative order: stable by (empty, min).
                        std::vector<int> ord(fam.k);
                        for (int i2 = 0; i2 < fam.k; ++i2) ord[i2] = i2;
                        std::stable_sort(ord.begin(), ord.end(), [&](int x, int y) {
                            bool ex = relabeled[x].empty(), ey = relabeled[y].empty();
                            if (ex != ey) return ey;
                            if (ex) return false;
                            return relabeled[x][0] < relabeled[y][0];
                        });
                        // tau: old slot -> new slot
                        std::vector<int> tau_img(fam.k);
                        for (int i2 = 0; i2 < fam.k; ++i2) tau_img[ord[i2]] = i2;
                        Perm tau = Perm::from_images(tau_img);
                        std::vector<std::vector<int>> new_blocks(fam.k);
                        for (int i2 = 0; i2 < fam.k; ++i2) new_blocks[i2] = relabeled[ord[i2]];
                        // Koszul sign for moving the factors.
                        std::vector<int> degs(fam.k);
                        for (int slot = 0; slot < fam.k; ++slot)
                            degs[slot] = w.elt((int)fam.blocks[slot].size(), ts[slot]).degree;
                        Rat sgn = tensor_move_sign(tau, degs) * tc;
                        // v-part: action(tau); w-parts: within-block relabelling.
                        Vec vcol = v.action(fam.k, tau).col(a);
                        std::vector<Vec> wcols(fam.k);
                        for (int slot = 0; slot < fam.k; ++slot)
                            wcols[slot] = w.action((int)fam.blocks[slot].size(), within[slot]).col(ts[slot]);
                        // Expand the tensor product of vectors into tuples.
                        for (const auto &[b2, cv] : vcol.entries()) {
                            std::vector<std::pair<std::vector<int>, Rat>> combos{{{}, cv}};
                            for (int newslot = 0; newslot < fam.k; ++newslot) {
                                int oldslot = ord[newslot];
                                std::vector<std::pair<std::vector<int>, Rat>> next;
                                for (const auto &[pref, pc] : combos)
                                    for (const auto &[wi, wc] : wcols[oldslot].entries()) {
                                        auto np = pref;
                                        np.push_back(wi);
                                        next.emplace_back(std::move(np), pc * wc);
                                    }
                                combos = std::move(next);
                            }
                            for (const auto &[tsnew, cc] : combos)
                                b.push_tuple(n, fam.k, new_blocks, b2, tsnew, sgn * cc, acc);
                        }
                    }
                    am.set_col(fam.base + j, b.express(n, acc));
                }
            }
            b.result.set_gen_action(n, gi, am);
        }
    }
    return b;
}

}  // namespace

SModule compose_product(const SModule &v, const SModule &w, const Truncation &t) {
    return build_composite(v, w, t).result;
}

struct Composite::Impl {
    SModule vkeep, wkeep;
    detail::CompositeBuild build;
};

Composite::Composite(const SModule &v, const SModule &w, const Truncation &t) {
    auto impl = std::make_shared<Impl>();
    impl->vkeep = v;
    impl->wkeep = w;
    impl->build = build_composite(impl->vkeep, impl->wkeep, t);
    impl_ = std::move(impl);
}

const SModule &Composite::module() const { return impl_->build.result; }

Vec Composite::express(int n, int k, const std::vector<std::vector<int>> &blocks, int va,
                       const std::vector<int> &ws, const Rat &coeff) const {
    if ((int)blocks.size() != k || (int)ws.size() != k)
        throw std::invalid_argument("composite express: need one block and one w-element per slot");
    int last_min = -1;
    bool seen_empty = false;
    for (const auto &b : blocks) {
        if (b.empty()) {
            seen_empty = true;
            continue;
        }
        if (seen_empty) throw std::invalid_argument("composite express: empty blocks must come last");
        int mn = *std::min_element(b.begin(), b.end());
        if (mn <= last_min) throw std::invalid_argument("composite express: blocks must have ascending minima");
        last_min = mn;
    }
    if (coeff.is_zero()) return Vec();
    std::map<std::pair<int, int>, Rat> acc;
    impl_->build.push_tuple(n, k, blocks, va, ws, coeff, acc);
    return impl_->build.express(n, acc);
}

std::vector<Composite::Summand> Composite::expand(int n, int basis_index) const {
    const auto &build = impl_->build;
    auto it = build.fams.find(n);
    if (it == build.fams.end()) throw std::invalid_argument("composite expand: no such arity");
    for (const auto &fam : it->second) {
        int nlocal = fam.local.cols();
        if (basis_index < fam.base || basis_index >= fam.base + nlocal) continue;
        Vec lv = fam.local.col(basis_index - fam.base);
        std::vector<Summand> out;
        for (const auto &[row, c] : lv.entries()) {
            Summand s;
            s.k = fam.k;
            s.blocks = fam.blocks;
            s.va = fam.tuples[row].first;
            s.ws = fam.tuples[row].second;
            s.coeff = c;
            out.push_back(std::move(s));
        }
        return out;
    }
    throw std::invalid_argument("composite expand: basis index out of range");
}

SModuleMap compose_prod_map(const SModule &v, const SModule &w, const SModule &v2, const SModule &w2,
                            const SModuleMap &f, const SModuleMap &g, const Truncation &t) {
    if (g.degree != 0) throw std::invalid_argument("compose_prod_map: g must have degree 0");
    CompositeBuild src = build_composite(v, w, t);
    CompositeBuild tgt = build_composite(v2, w2, t);
    SModuleMap out;
    out.degree = f.degree;
    for (const auto &[n, fs] : src.fams) {
        SparseMatrix m(tgt.result.dim(n), src.result.dim(n));
        for (const auto &fam : fs) {
            for (int j = 0; j < fam.local.cols(); ++j) {
                std::map<std::pair<int, int>, Rat> acc;
                Vec lv = fam.local.col(j);
                for (const auto &[tq, tc] : lv.entries()) {
                    const auto &[a, ts] = fam.tuples[tq];
                    Vec fcol = f.at_or_zero(fam.k, v2.dim(fam.k), v.dim(fam.k)).col(a);
                    std::vector<Vec> gcols(fam.k);
                    for (int slot = 0; slot < fam.k; ++slot) {
                        int sz = (int)fam.blocks[slot].size();
                        gcols[slot] = g.at_or_zero(sz, w2.dim(sz), w.dim(sz)).col(ts[slot]);
                    }
                    for (const auto &[b2, cv] : fcol.entries()) {
                        std::vector<std::pair<std::vector<int>, Rat>> combos{{{}, cv * tc}};
                        for (int slot = 0; slot < fam.k; ++slot) {
                            std::vector<std::pair<std::vector<int>, Rat>> next;
                            for (const auto &[pref, pc] : combos)
                                for (const auto &[wi, wc] : gcols[slot].entries()) {
                                    auto np = pref;
                                    np.push_back(wi);
                                    next.emplace_back(std::move(np), pc * wc);
                                }
                            combos = std::move(next);
                        }
                        for (const auto &[tsnew, cc] : combos)
                            tgt.push_tuple(n, fam.k, fam.blocks, b2, tsnew, cc, acc);
                    }
                }
                m.set_col(fam.base + j, tgt.express(n, acc));
            }
        }
        out.comp[n] = std::move(m);
    }
    return out;
}

SModuleMap circ_map(const SModule &v, const SModule &w, const SModule &v2, const SModule &w2,
                    const SModuleMap &f, const SModuleMap &g, const SModuleMap &h, const Truncation &t) {
    if (g.degree != 0) throw std::invalid_argument("circ_map: g must have degree 0");
    CompositeBuild src = build_composite(v, w, t);
    CompositeBuild tgt = build_composite(v2, w2, t);
    SModuleMap out;
    out.degree = f.degree + h.degree;
    for (const auto &[n, fs] : src.fams) {
        SparseMatrix m(tgt.result.dim(n), src.result.dim(n));
        for (const auto &fam : fs) {
            for (int j = 0; j < fam.local.cols(); ++j) {
                std::map<std::pair<int, int>, Rat> acc;
                Vec lv = fam.local.col(j);
                for (const auto &[tq, tc] : lv.entries()) {
                    const auto &[a, ts] = fam.tuples[tq];
                    Vec fcol = f.at_or_zero(fam.k, v2.dim(fam.k), v.dim(fam.k)).col(a);
                    for (int hslot = 0; hslot < fam.k; ++hslot) {
                        // sign: h crosses v and the w's before the slot
                        long e = (long)h.degree * (long)v.elt(fam.k, a).degree;
                        for (int p = 0; p < hslot; ++p)
                            e += (long)h.degree * (long)w.elt((int)fam.blocks[p].size(), ts[p]).degree;
                        Rat sgn = sign_pow(e) * tc;
                        std::vector<Vec> cols(fam.k);
                        for (int slot = 0; slot < fam.k; ++slot) {
                            int sz = (int)fam.blocks[slot].size();
                            const SModuleMap &mm = (slot == hslot) ? h : g;
                            cols[slot] = mm.at_or_zero(sz, w2.dim(sz), w.dim(sz)).col(ts[slot]);
                        }
                        for (const auto &[b2, cv] : fcol.entries()) {
                            std::vector<std::pair<std::vector<int>, Rat>> combos{{{}, cv * sgn}};
                            for (int slot = 0; slot < fam.k; ++slot) {
                                std::vector<std::pair<std::vector<int>, Rat>> next;
                                for (const auto &[pref, pc] : combos)
                                    for (const auto &[wi, wc] : cols[slot].entries()) {
                                        auto np = pref;
                                        np.push_back(wi);
                                        next.emplace_back(std::move(np), pc * wc);
                                    }
                                combos = std::move(next);
                            }
                            for (const auto &[tsnew, cc] : combos)
                                tgt.push_tuple(n, fam.k, fam.blocks, b2, tsnew, cc, acc);
                        }
                    }
                }
                m.set_col(fam.base + j, tgt.express(n, acc));
            }
        }
        out.comp[n] = std::move(m);
    }
    return out;
}

SModuleMap identity_map(const SModule &v) {
    SModuleMap f;
    f.degree = 0;
    for (const auto &[arity, c] : v.components()) f.comp[arity] = SparseMatrix::identity((int)c.basis.size());
    return f;
}

HomComplex hom_complex(const SModule &v, const SModule &w, const Truncation &t) {
    t.validate();
    HomComplex out;
    // Arities to consider: those where both sides can be nonzero, capped.
    std::vector<int> arities;
    for (const auto &[k, c] : v.components()) {
        (void)c;
        if (k <= t.max_arity && w.has(k)) arities.push_back(k);
    }
    // Candidate hom degrees: differences of allowed element degrees.
    std::map<int, std::vector<HomBasisMap>> slices;
    for (int k : arities) {
        int dv = v.dim(k), dw = w.dim(k);
        std::map<int, std::vector<std::pair<int, int>>> pairs_by_shift;  // n -> (a in W, b in V)
        for (int a = 0; a < dw; ++a)
            for (int bidx = 0; bidx < dv; ++bidx) {
                int da = w.elt(k, a).degree, db = v.elt(k, bidx).degree;
                if (!t.degree_in(da) || !t.degree_in(db)) continue;
                pairs_by_shift[da - db].emplace_back(a, bidx);
            }
        for (const auto &[n, pairs] : pairs_by_shift) {
            // Solve equivariance: act_w(s_i) F = F act_v(s_i) for all i.
            int nu = (int)pairs.size();
            std::map<std::pair<int, int>, int> pair_idx;
            for (int q = 0; q < nu; ++q) pair_idx[pairs[q]] = q;
            std::vector<Vec> eqs;
            for (int i = 0; i + 1 < k; ++i) {
                Perm s = Perm::adjacent(k, i);
                SparseMatrix aw = w.action(k, s), av = v.action(k, s);
                for (int q = 0; q < nu; ++q) {
                    auto [a, bidx] = pairs[q];
                    // row (a, b): sum_c aw[a,c] F[c,b] - sum_c F[a,c] av[c,b]
                    Vec eq;
                    for (int c = 0; c < dw; ++c) {
                        Rat x = aw.get(a, c);
                        if (x.is_zero()) continue;
                        auto it = pair_idx.find({c, bidx});
                        if (it != pair_idx.end()) eq.add(it->second, x);
                    }
                    for (int c = 0; c < dv; ++c) {
                        Rat x = av.get(c, bidx);
                        if (x.is_zero()) continue;
                        auto it = pair_idx.find({a, c});
                        if (it != pair_idx.end()) eq.add(it->second, -x);
                    }
                    if (!eq.is_zero()) eqs.push_back(eq);
                }
            }
            SparseMatrix sys((int)eqs.size(), nu);
            for (int r = 0; r < (int)eqs.size(); ++r)
                for (const auto &[c, x] : eqs[r].entries()) sys.set(r, c, x);
            for (const Vec &sol : sys.kernel_basis()) {
                HomBasisMap hb;
                hb.arity = k;
                hb.mat = SparseMatrix(dw, dv);
                for (const auto &[q, x] : sol.entries()) hb.mat.set(pairs[q].first, pairs[q].second, x);
                slices[n].push_back(std::move(hb));
            }
        }
    }
    out.basis = std::move(slices);
    for (const auto &[n, bs] : out.basis) out.cx.set_dim(n, (int)bs.size());
    // Differential d(f) = d_w f - (-1)^n f d_v, projected to the window and
    // expressed in the degree n-1 slice.
    for (const auto &[n, bs] : out.basis) {
        auto below = out.basis.find(n - 1);
        if (below == out.basis.end()) continue;
        SparseMatrix dm((int)below->second.size(), (int)bs.size());
        for (int j = 0; j < (int)bs.size(); ++j) {
            const HomBasisMap &f = bs[j];
            int k = f.arity;
            SparseMatrix df = w.d(k).mul(f.mat).sub(f.mat.mul(v.d(k)).scaled(sign_pow(n)));
            // project: keep only entries with both degrees in the window
            SparseMatrix pr(df.rows(), df.cols());
            for (int r = 0; r < df.rows(); ++r)
                for (const auto &[c, x] : df.row(r).entries())
                    if (t.degree_in(w.elt(k, r).degree) && t.degree_in(v.elt(k, c).degree)) pr.set(r, c, x);
            // coordinates in the (n-1) slice: stack same-arity basis mats
            std::vector<int> cols;
            for (int q = 0; q < (int)below->second.size(); ++q)
                if (below->second[q].arity == k) cols.push_back(q);
            int cells = pr.rows() * pr.cols();
            SparseMatrix stacked(cells, (int)cols.size());
            for (int q = 0; q < (int)cols.size(); ++q) {
                const SparseMatrix &bm = below->second[cols[q]].mat;
                for (int r = 0; r < bm.rows(); ++r)
                    for (const auto &[c, x] : bm.row(r).entries()) stacked.set(r * bm.cols() + c, q, x);
            }
            Vec rhs;
            for (int r = 0; r < pr.rows(); ++r)
                for (const auto &[c, x] : pr.row(r).entries()) rhs.set(r * pr.cols() + c, x);
            auto sol = stacked.solve(rhs);
            if (!sol) throw std::runtime_error("hom differential left the equivariant basis");
            for (const auto &[q, x] : sol->entries()) dm.set(cols[q], j, x);
        }
        out.cx.set_d(n, dm);
    }
    return out;
}

SModuleMap HomComplex::assemble(int degree, const Vec &coords, const SModule &v, const SModule &w) const {
    SModuleMap f;
    f.degree = degree;
    auto it = basis.find(degree);
    if (it == basis.end()) {
        if (!coords.is_zero()) throw std::invalid_argument("no hom basis in this degree");
        return f;
    }
    for (const auto &[j, c] : coords.entries()) {
        const HomBasisMap &hb = it->second[j];
        auto fit = f.comp.find(hb.arity);
        if (fit == f.comp.end())
            f.comp[hb.arity] = hb.mat.scaled(c);
        else
            fit->second = fit->second.add(hb.mat.scaled(c));
    }
    for (const auto &[k, c] : v.components()) {
        (void)c;
        if (!f.comp.count(k) && w.has(k)) f.comp[k] = SparseMatrix(w.dim(k), v.dim(k));
    }
    return f;
}

Vec HomComplex::coordinates(int degree, const SModuleMap &f) const {
    auto it = basis.find(degree);
    if (it == basis.end()) {
        for (const auto &[k, m] : f.comp)
            if (!m.is_zero()) throw std::runtime_error("map has no coordinates: empty slice");
        return Vec();
    }
    // Stack all basis maps (all arities) into one flat system.
    std::map<int, int> arity_offset;
    int total = 0;
    for (const auto &hb : it->second)
        if (!arity_offset.count(hb.arity)) {
            arity_offset[hb.arity] = total;
            total += hb.mat.rows() * hb.mat.cols();
        }
    SparseMatrix stacked(total, (int)it->second.size());
    for (int j = 0; j < (int)it->second.size(); ++j) {
        const auto &hb = it->second[j];
        int off = arity_offset[hb.arity];
        for (int r = 0; r < hb.mat.rows(); ++r)
            for (const auto &[c, x] : hb.mat.row(r).entries()) stacked.set(off + r * hb.mat.cols() + c, j, x);
    }
    Vec rhs;
    for (const auto &[k, m] : f.comp) {
        auto oit = arity_offset.find(k);
        if (oit == arity_offset.end()) {
            if (!m.is_zero()) throw std::runtime_error("map has support outside the hom basis arities");
            continue;
        }
        for (int r = 0; r < m.rows(); ++r)
            for (const auto &[c, x] : m.row(r).entries()) rhs.set(oit->second + r * m.cols() + c, x);
    }
    auto sol = stacked.solve(rhs);
    if (!sol) throw std::runtime_error("map is not in the span of the hom basis");
    return *sol;
}

}  // namespace opal

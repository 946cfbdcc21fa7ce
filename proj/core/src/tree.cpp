#include "opal/tree.hpp"

#include <algorithm>
#include <climits>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>

namespace opal {

PTree PTree::make_leaf(int l) {
    PTree p;
    p.leaf = true;
    p.label = l;
    return p;
}

PTree PTree::make_vertex(std::vector<PTree> kids) {
    PTree p;
    p.kids = std::move(kids);
    return p;
}

namespace {

int tag_vertices(PTree &p, int next) {
    if (p.leaf) return next;
    p.tag = next++;
    for (auto &k : p.kids) next = tag_vertices(k, next);
    return next;
}

struct Key {
    int min_leaf;  // INT_MAX when the subtree has no leaves
    std::string enc;
};

Key canon_rec(PTree &p) {
    if (p.leaf) return {p.label, "l" + std::to_string(p.label + 1)};
    std::vector<std::pair<Key, PTree>> ks;
    ks.reserve(p.kids.size());
    for (auto &k : p.kids) {
        Key key = canon_rec(k);
        ks.emplace_back(std::move(key), std::move(k));
    }
    std::stable_sort(ks.begin(), ks.end(), [](const auto &a, const auto &b) {
        if (a.first.min_leaf != b.first.min_leaf) return a.first.min_leaf < b.first.min_leaf;
        return a.first.enc < b.first.enc;
    });
    Key out{INT_MAX, "("};
    p.kids.clear();
    for (size_t i = 0; i < ks.size(); ++i) {
        out.min_leaf = std::min(out.min_leaf, ks[i].first.min_leaf);
        if (i) out.enc += ",";
        out.enc += ks[i].first.enc;
        p.kids.push_back(std::move(ks[i].second));
    }
    out.enc += ")";
    return out;
}

/* canon_rec recording, per vertex tag, the slot permutation applied while
   sorting its children (same comparator, stability made explicit). */
Key canon_rec_slots(PTree &p, std::vector<Perm> &slots) {
    if (p.leaf) return {p.label, "l" + std::to_string(p.label + 1)};
    std::vector<std::pair<Key, PTree>> ks;
    ks.reserve(p.kids.size());
    for (auto &k : p.kids) {
        Key key = canon_rec_slots(k, slots);
        ks.emplace_back(std::move(key), std::move(k));
    }
    int a = (int)ks.size();
    std::vector<int> idx(a);
    for (int i = 0; i < a; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) {
        if (ks[x].first.min_leaf != ks[y].first.min_leaf) return ks[x].first.min_leaf < ks[y].first.min_leaf;
        return ks[x].first.enc < ks[y].first.enc;
    });
    std::vector<int> images(a);
    for (int j = 0; j < a; ++j) images[idx[j]] = j;
    if (p.tag < 0 || p.tag >= (int)slots.size())
        throw std::runtime_error("tree: canonicalize_slots needs tags 0..m-1");
    slots[p.tag] = Perm::from_images(images);
    Key out{INT_MAX, "("};
    p.kids.clear();
    for (int j = 0; j < a; ++j) {
        auto &pr = ks[idx[j]];
        out.min_leaf = std::min(out.min_leaf, pr.first.min_leaf);
        if (j) out.enc += ",";
        out.enc += pr.first.enc;
        p.kids.push_back(std::move(pr.second));
    }
    out.enc += ")";
    return out;
}

int count_vertices(const PTree &p) {
    if (p.leaf) return 0;
    int n = 1;
    for (const auto &k : p.kids) n += count_vertices(k);
    return n;
}

void collect_leaves(const PTree &p, std::vector<int> &out) {
    if (p.leaf) {
        out.push_back(p.label);
        return;
    }
    for (const auto &k : p.kids) collect_leaves(k, out);
}

}  // namespace

struct TreeBuilder {
    /* Flatten a canonically sorted, vertex-tagged planar tree. */
    static Tree::Canon from_canonical(const PTree &p, const std::string &enc) {
        std::vector<int> leaves;
        collect_leaves(p, leaves);
        std::vector<int> sorted = leaves;
        std::sort(sorted.begin(), sorted.end());
        for (size_t i = 0; i < sorted.size(); ++i)
            if (sorted[i] != (int)i) throw std::runtime_error("tree: leaf labels must be exactly 0..q-1");

        Tree t;
        t.q_ = (int)leaves.size();
        if (p.leaf) {
            if (t.q_ != 1) throw std::runtime_error("tree: bare leaf must carry label 0");
            t.nv_ = 0;
            t.enc_ = "l1";
            return {t, Perm(0)};
        }
        std::vector<int> tag_at_df;
        flatten(p, -1, t, tag_at_df);
        t.nv_ = (int)t.slots_.size();
        t.enc_ = enc;
        std::vector<int> images(t.nv_, -1);
        for (int df = 0; df < t.nv_; ++df) {
            int tg = tag_at_df[df];
            if (tg < 0 || tg >= t.nv_ || images[tg] != -1)
                throw std::runtime_error("tree: bad vertex tags");
            images[tg] = df;
        }
        return {t, Perm::from_images(images)};
    }

  private:
    static int flatten(const PTree &p, int parent, Tree &t, std::vector<int> &tag_at_df) {
        int id = (int)t.slots_.size();
        t.parent_.push_back(parent);
        t.slots_.emplace_back();
        tag_at_df.push_back(p.tag);
        for (const auto &k : p.kids) {
            if (k.leaf) {
                t.slots_[id].push_back({true, k.label});
            } else {
                int kid = flatten(k, id, t, tag_at_df);
                t.slots_[id].push_back({false, kid});
            }
        }
        return id;
    }
};

Tree::Canon Tree::canonicalize(const PTree &p) {
    PTree q = p;
    if (!q.leaf && q.tag < 0) tag_vertices(q, 0);
    Key key = canon_rec(q);
    return TreeBuilder::from_canonical(q, key.enc);
}

Tree::CanonSlots Tree::canonicalize_slots(const PTree &p) {
    PTree q = p;
    if (q.leaf) return {Tree(), Perm(0), {}};
    std::vector<Perm> slots(count_vertices(q), Perm(0));
    Key key = canon_rec_slots(q, slots);
    auto c = TreeBuilder::from_canonical(q, key.enc);
    return {c.tree, c.vperm, std::move(slots)};
}

Tree::Tree() : q_(1), nv_(0), enc_("l1") {}

Tree Tree::corolla(int arity) {
    if (arity < 0) throw std::runtime_error("tree: negative arity");
    std::vector<PTree> kids;
    for (int i = 0; i < arity; ++i) kids.push_back(PTree::make_leaf(i));
    return canonicalize(PTree::make_vertex(std::move(kids))).tree;
}

std::vector<int> Tree::arities() const {
    std::vector<int> out;
    out.reserve(nv_);
    for (int v = 0; v < nv_; ++v) out.push_back(arity(v));
    return out;
}

PTree Tree::planar() const {
    if (nv_ == 0) return PTree::make_leaf(0);
    std::vector<PTree> built(nv_);
    for (int v = nv_ - 1; v >= 0; --v) {
        std::vector<PTree> kids;
        for (const auto &s : slots_[v])
            kids.push_back(s.is_leaf ? PTree::make_leaf(s.id) : std::move(built[s.id]));
        built[v] = PTree::make_vertex(std::move(kids));
        built[v].tag = v;
    }
    return std::move(built[0]);
}

namespace {

PTree parse_rec(const std::string &s, size_t &i) {
    if (i >= s.size()) throw std::runtime_error("tree parse: unexpected end");
    if (s[i] == 'l') {
        ++i;
        size_t j = i;
        while (j < s.size() && isdigit((unsigned char)s[j])) ++j;
        if (j == i) throw std::runtime_error("tree parse: leaf needs a number");
        int label = std::stoi(s.substr(i, j - i));
        if (label < 1) throw std::runtime_error("tree parse: leaf labels are 1-based");
        i = j;
        return PTree::make_leaf(label - 1);
    }
    if (s[i] != '(') throw std::runtime_error("tree parse: expected 'l' or '('");
    ++i;
    std::vector<PTree> kids;
    if (i < s.size() && s[i] == ')') {
        ++i;
        return PTree::make_vertex({});
    }
    while (true) {
        kids.push_back(parse_rec(s, i));
        if (i >= s.size()) throw std::runtime_error("tree parse: unclosed '('");
        if (s[i] == ',') {
            ++i;
            continue;
        }
        if (s[i] == ')') {
            ++i;
            return PTree::make_vertex(std::move(kids));
        }
        throw std::runtime_error("tree parse: expected ',' or ')'");
    }
}

std::string encode_below(const Tree &t, int v) {
    std::string out = "(";
    bool first = true;
    for (const auto &s : t.slots(v)) {
        if (!first) out += ",";
        first = false;
        out += s.is_leaf ? "l" + std::to_string(s.id + 1) : encode_below(t, s.id);
    }
    return out + ")";
}

}  // namespace

Tree Tree::parse(const std::string &s) {
    size_t i = 0;
    PTree p = parse_rec(s, i);
    if (i != s.size()) throw std::runtime_error("tree parse: trailing input");
    return canonicalize(p).tree;
}

bool Tree::has_nontrivial_automorphism() const {
    for (int v = 0; v < nv_; ++v) {
        std::vector<std::string> encs;
        for (const auto &s : slots_[v])
            if (!s.is_leaf) encs.push_back(encode_below(*this, s.id));
        std::sort(encs.begin(), encs.end());
        for (size_t i = 1; i < encs.size(); ++i)
            if (encs[i] == encs[i - 1]) return true;
    }
    return false;
}

/* ---------------------------- enumeration ---------------------------- */

namespace {

struct Enumerator {
    int min_arity, max_arity;
    std::map<std::pair<unsigned, int>, std::vector<PTree>> memo;

    /* Canonical trees with leaf set `mask` and exactly v vertices. */
    const std::vector<PTree> &exact(unsigned mask, int v) {
        auto key = std::make_pair(mask, v);
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        std::vector<PTree> out;
        if (v >= 1) {
            std::set<std::string> seen;
            for (auto &kids : child_lists(mask, v - 1)) {
                int r = (int)kids.size();
                if (r < min_arity || r > max_arity) continue;
                PTree p = PTree::make_vertex(std::move(kids));
                Key k = canon_rec(p);
                if (seen.insert(k.enc).second) out.push_back(std::move(p));
            }
        }
        return memo.emplace(key, std::move(out)).first->second;
    }

    /* Child lists using exactly the leaves in `mask` and exactly vv
       vertices; lists of the same multiset may repeat (deduplicated by
       the caller via canonical encodings). */
    std::vector<std::vector<PTree>> child_lists(unsigned mask, int vv) {
        std::vector<std::vector<PTree>> out;
        if (mask == 0) {
            if (vv == 0) {
                out.push_back({});
                return out;
            }
            for (int k = 1; k <= vv; ++k)
                for (const auto &first : exact(0u, k))
                    for (auto rest : child_lists(0u, vv - k)) {
                        rest.insert(rest.begin(), first);
                        out.push_back(std::move(rest));
                    }
            return out;
        }
        int m = 0;
        while (!(mask >> m & 1u)) ++m;
        // the child containing leaf m is either that bare leaf ...
        for (auto rest : child_lists(mask & ~(1u << m), vv)) {
            rest.insert(rest.begin(), PTree::make_leaf(m));
            out.push_back(std::move(rest));
        }
        // ... or a subtree whose leaf set is {m} plus a subset of the rest
        unsigned others = mask & ~(1u << m);
        unsigned b = 0;
        while (true) {
            unsigned leafset = b | (1u << m);
            for (int k = 1; k <= vv; ++k)
                for (const auto &sub : exact(leafset, k))
                    for (auto rest : child_lists(mask & ~leafset, vv - k)) {
                        rest.insert(rest.begin(), sub);
                        out.push_back(std::move(rest));
                    }
            if (b == others) break;
            b = (b - others) & others;
        }
        return out;
    }
};

}  // namespace

std::vector<Tree> enumerate_trees(int leaves, int max_vertices, int min_arity, int max_arity) {
    if (leaves < 0 || max_vertices < 0) throw std::runtime_error("enumerate_trees: negative bound");
    if (leaves > 8 || max_vertices > 8) throw std::runtime_error("enumerate_trees: request too large");
    Enumerator e{min_arity, max_arity, {}};
    unsigned full = leaves == 0 ? 0u : (1u << leaves) - 1u;
    std::vector<Tree> out;
    for (int v = 1; v <= max_vertices; ++v) {
        std::vector<Tree> layer;
        for (const auto &p : e.exact(full, v)) layer.push_back(Tree::canonicalize(p).tree);
        std::sort(layer.begin(), layer.end());
        out.insert(out.end(), layer.begin(), layer.end());
    }
    return out;
}

/* ------------------------------ grafting ----------------------------- */

namespace {

void shift_leaf_labels(PTree &n, int threshold, int delta) {
    if (n.leaf) {
        if (n.label > threshold) n.label += delta;
        return;
    }
    for (auto &k : n.kids) shift_leaf_labels(k, threshold, delta);
}

void shift_all(PTree &n, int leaf_delta, int tag_delta) {
    if (n.leaf) {
        n.label += leaf_delta;
        return;
    }
    n.tag += tag_delta;
    for (auto &k : n.kids) shift_all(k, leaf_delta, tag_delta);
}

bool splice_leaf(PTree &n, int label, const PTree &sub) {
    if (n.leaf) return false;
    for (auto &k : n.kids) {
        if (k.leaf && k.label == label) {
            k = sub;
            return true;
        }
        if (splice_leaf(k, label, sub)) return true;
    }
    return false;
}

}  // namespace

Graft graft(const Tree &outer, int leaf_label, const Tree &inner) {
    if (leaf_label < 0 || leaf_label >= outer.leaf_count())
        throw std::runtime_error("graft: no such leaf");
    int qi = inner.leaf_count();
    int nvo = outer.vertex_count();
    if (outer.is_trivial()) {
        if (inner.is_trivial()) return {Tree::trivial(), Perm(0)};
        PTree pi = inner.planar();
        Key k = canon_rec(pi);
        auto c = TreeBuilder::from_canonical(pi, k.enc);
        return {c.tree, c.vperm};
    }
    if (inner.is_trivial()) return {outer, Perm(nvo)};
    PTree po = outer.planar();
    shift_leaf_labels(po, leaf_label, qi - 1);
    PTree pi = inner.planar();
    shift_all(pi, leaf_label, nvo);
    if (!splice_leaf(po, leaf_label, pi)) throw std::runtime_error("graft: splice failed");
    Key k = canon_rec(po);
    auto c = TreeBuilder::from_canonical(po, k.enc);
    return {c.tree, c.vperm};
}

/* ------------------------- collapse and split ------------------------ */

namespace {

void leaves_below_rec(const Tree &t, int v, std::vector<int> &out) {
    for (const auto &s : t.slots(v)) {
        if (s.is_leaf)
            out.push_back(s.id);
        else
            leaves_below_rec(t, s.id, out);
    }
}

std::vector<int> leaves_below(const Tree &t, int v) {
    std::vector<int> out;
    leaves_below_rec(t, v, out);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> vertices_below(const Tree &t, int v) {
    std::vector<int> out, stack = {v};
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        out.push_back(u);
        for (const auto &s : t.slots(u))
            if (!s.is_leaf) stack.push_back(s.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

/* A cut edge: either an original leaf of t, or the edge above t-vertex `id`;
   block order is (minimal leaf below, then leafless last by encoding). */
struct CutEdge {
    bool is_leaf;
    int id;
    int min_leaf;
    std::string enc;
};

std::vector<CutEdge> cut_edges(const Tree &t, const std::set<int> &in) {
    std::vector<CutEdge> cuts;
    for (int v : in)
        for (const auto &s : t.slots(v)) {
            if (s.is_leaf)
                cuts.push_back({true, s.id, s.id, "l" + std::to_string(s.id + 1)});
            else if (!in.count(s.id)) {
                auto lb = leaves_below(t, s.id);
                cuts.push_back({false, s.id, lb.empty() ? INT_MAX : lb[0], encode_below(t, s.id)});
            }
        }
    std::stable_sort(cuts.begin(), cuts.end(), [](const CutEdge &a, const CutEdge &b) {
        if (a.min_leaf != b.min_leaf) return a.min_leaf < b.min_leaf;
        return a.enc < b.enc;
    });
    return cuts;
}

/* Planar form of the vertex set `in` seen from `root`, cut edges replaced
   by leaves per `leaf_relabel` (t-leaf -> new label) and `vertex_cut`
   (t-vertex below a cut -> new label); tags = rank within sorted `in`. */
PTree induced_planar(const Tree &t, int root, const std::set<int> &in,
                     const std::vector<int> &leaf_relabel, const std::map<int, int> &vertex_cut) {
    std::function<PTree(int)> walk = [&](int v) {
        std::vector<PTree> kids;
        for (const auto &s : t.slots(v)) {
            if (s.is_leaf)
                kids.push_back(PTree::make_leaf(leaf_relabel[s.id]));
            else if (in.count(s.id))
                kids.push_back(walk(s.id));
            else
                kids.push_back(PTree::make_leaf(vertex_cut.at(s.id)));
        }
        PTree p = PTree::make_vertex(std::move(kids));
        p.tag = (int)std::distance(in.begin(), in.find(v));
        return p;
    };
    return walk(root);
}

/* Planar copy of the full subtree below t-vertex v with original leaf
   labels remapped by `relabel` and tags = rank of the vertex in `vset`. */
PTree branch_planar(const Tree &t, int v, const std::vector<int> &vset,
                    const std::vector<int> &relabel) {
    std::function<PTree(int)> walk = [&](int u) {
        std::vector<PTree> kids;
        for (const auto &s : t.slots(u)) {
            if (s.is_leaf)
                kids.push_back(PTree::make_leaf(relabel[s.id]));
            else
                kids.push_back(walk(s.id));
        }
        PTree p = PTree::make_vertex(std::move(kids));
        auto it = std::lower_bound(vset.begin(), vset.end(), u);
        p.tag = (int)(it - vset.begin());
        return p;
    };
    return walk(v);
}

}  // namespace

Collapse collapse(const Tree &t, const std::vector<int> &vertices) {
    std::vector<int> set = vertices;
    std::sort(set.begin(), set.end());
    if (set.empty()) throw std::runtime_error("collapse: empty vertex set");
    std::set<int> in(set.begin(), set.end());
    if ((int)in.size() != (int)set.size()) throw std::runtime_error("collapse: repeated vertex");
    int root = -1;
    for (int v : set) {
        if (v < 0 || v >= t.vertex_count()) throw std::runtime_error("collapse: no such vertex");
        if (!in.count(t.parent(v))) {
            if (root != -1) throw std::runtime_error("collapse: vertex set not connected");
            root = v;
        }
    }

    auto cuts = cut_edges(t, in);
    std::vector<int> leaf_relabel(t.leaf_count(), -1);
    std::map<int, int> vertex_cut;
    for (size_t j = 0; j < cuts.size(); ++j) {
        if (cuts[j].is_leaf)
            leaf_relabel[cuts[j].id] = (int)j;
        else
            vertex_cut[cuts[j].id] = (int)j;
    }

    PTree branch_p = induced_planar(t, root, in, leaf_relabel, vertex_cut);
    PTree branch_naive = branch_p;
    Key bk = canon_rec(branch_p);
    auto branch_c = TreeBuilder::from_canonical(branch_p, bk.enc);

    // naive contracted order: t-DF over the surviving vertices, with the
    // set root standing in for the new vertex
    std::vector<int> old_to_new(t.vertex_count(), -1);
    int next = 0;
    for (int v = 0; v < t.vertex_count(); ++v)
        if (!in.count(v) || v == root) old_to_new[v] = next++;
    for (int v : set) old_to_new[v] = old_to_new[root];

    std::vector<int> ident(t.leaf_count());
    for (int l = 0; l < t.leaf_count(); ++l) ident[l] = l;
    std::vector<int> all(t.vertex_count());
    for (int v = 0; v < t.vertex_count(); ++v) all[v] = v;

    std::function<PTree(int)> qwalk = [&](int v) -> PTree {
        if (v == root) {
            std::vector<PTree> kids;
            for (const auto &c : cuts) {
                if (c.is_leaf) {
                    kids.push_back(PTree::make_leaf(c.id));
                } else {
                    PTree sub = branch_planar(t, c.id, all, ident);
                    std::function<void(PTree &)> retag = [&](PTree &p) {
                        if (p.leaf) return;
                        p.tag = old_to_new[p.tag];
                        for (auto &k : p.kids) retag(k);
                    };
                    retag(sub);
                    kids.push_back(std::move(sub));
                }
            }
            PTree p = PTree::make_vertex(std::move(kids));
            p.tag = old_to_new[root];
            return p;
        }
        std::vector<PTree> kids;
        for (const auto &s : t.slots(v)) {
            if (s.is_leaf)
                kids.push_back(PTree::make_leaf(s.id));
            else
                kids.push_back(qwalk(s.id));
        }
        PTree p = PTree::make_vertex(std::move(kids));
        p.tag = old_to_new[v];
        return p;
    };
    PTree quot_p = qwalk(0);
    PTree quot_naive = quot_p;
    Key qk = canon_rec(quot_p);
    auto quot_c = TreeBuilder::from_canonical(quot_p, qk.enc);

    Collapse out;
    out.branch = branch_c.tree;
    out.branch_vperm = branch_c.vperm;
    out.branch_naive = std::move(branch_naive);
    out.quotient = quot_c.tree;
    out.quotient_vperm = quot_c.vperm;
    out.quotient_naive = std::move(quot_naive);
    out.collapsed_vertex = quot_c.vperm(old_to_new[root]);
    out.old_to_new = old_to_new;
    return out;
}

std::vector<std::vector<int>> subtrees(const Tree &t, int min_vertices) {
    int nv = t.vertex_count();
    if (nv > 20) throw std::runtime_error("subtrees: tree too large");
    std::vector<std::vector<int>> out;
    for (unsigned mask = 1; mask < (1u << nv); ++mask) {
        int roots = 0, size = 0;
        for (int v = 0; v < nv; ++v)
            if (mask >> v & 1u) {
                ++size;
                int p = t.parent(v);
                if (p < 0 || !(mask >> p & 1u)) ++roots;
            }
        if (roots != 1 || size < min_vertices) continue;
        std::vector<int> set;
        for (int v = 0; v < nv; ++v)
            if (mask >> v & 1u) set.push_back(v);
        out.push_back(std::move(set));
    }
    return out;
}

Split split_at(const Tree &t, const std::vector<int> &upper_set) {
    std::vector<int> up = upper_set;
    std::sort(up.begin(), up.end());
    std::set<int> in(up.begin(), up.end());
    if ((int)in.size() != (int)up.size()) throw std::runtime_error("split_at: repeated vertex");
    for (int v : up) {
        if (v < 0 || v >= t.vertex_count()) throw std::runtime_error("split_at: no such vertex");
        int p = t.parent(v);
        if (p >= 0 && !in.count(p)) throw std::runtime_error("split_at: set not parent-closed");
    }

    Split out;
    out.upper_set = up;
    if (up.empty()) {
        out.upper = Tree::trivial();
        out.upper_vperm = Perm(0);
        out.upper_naive = PTree::make_leaf(0);
        std::vector<int> all_leaves(t.leaf_count());
        for (int l = 0; l < t.leaf_count(); ++l) all_leaves[l] = l;
        out.blocks.push_back(all_leaves);
        out.lower.push_back(t);
        out.lower_vperms.push_back(Perm(t.vertex_count()));
        out.lower_naive.push_back(t.planar());
        std::vector<int> all(t.vertex_count());
        for (int v = 0; v < t.vertex_count(); ++v) all[v] = v;
        out.lower_sets.push_back(all);
        return out;
    }

    auto cuts = cut_edges(t, in);
    std::vector<int> leaf_relabel(t.leaf_count(), -1);
    std::map<int, int> vertex_cut;
    for (size_t j = 0; j < cuts.size(); ++j) {
        if (cuts[j].is_leaf)
            leaf_relabel[cuts[j].id] = (int)j;
        else
            vertex_cut[cuts[j].id] = (int)j;
    }

    PTree up_p = induced_planar(t, 0, in, leaf_relabel, vertex_cut);
    out.upper_naive = up_p;
    Key uk = canon_rec(up_p);
    auto up_c = TreeBuilder::from_canonical(up_p, uk.enc);
    out.upper = up_c.tree;
    out.upper_vperm = up_c.vperm;

    for (const auto &c : cuts) {
        if (c.is_leaf) {
            out.blocks.push_back({c.id});
            out.lower.push_back(Tree::trivial());
            out.lower_vperms.push_back(Perm(0));
            out.lower_naive.push_back(PTree::make_leaf(0));
            out.lower_sets.push_back({});
            continue;
        }
        auto block = leaves_below(t, c.id);
        std::vector<int> relabel(t.leaf_count(), -1);
        for (size_t i = 0; i < block.size(); ++i) relabel[block[i]] = (int)i;
        auto vset = vertices_below(t, c.id);
        PTree bp = branch_planar(t, c.id, vset, relabel);
        out.lower_naive.push_back(bp);
        Key bk = canon_rec(bp);
        auto bc = TreeBuilder::from_canonical(bp, bk.enc);
        out.blocks.push_back(block);
        out.lower.push_back(bc.tree);
        out.lower_vperms.push_back(bc.vperm);
        out.lower_sets.push_back(vset);
    }
    return out;
}

std::vector<std::vector<int>> parent_closed_subsets(const Tree &t) {
    int nv = t.vertex_count();
    if (nv > 20) throw std::runtime_error("parent_closed_subsets: tree too large");
    std::vector<std::vector<int>> out;
    for (unsigned mask = 0; mask < (1u << nv); ++mask) {
        bool ok = true;
        for (int v = 0; v < nv && ok; ++v)
            if (mask >> v & 1u) {
                int p = t.parent(v);
                if (p >= 0 && !(mask >> p & 1u)) ok = false;
            }
        if (!ok) continue;
        std::vector<int> set;
        for (int v = 0; v < nv; ++v)
            if (mask >> v & 1u) set.push_back(v);
        out.push_back(std::move(set));
    }
    return out;
}

std::vector<std::vector<std::vector<int>>> tree_partitions(const Tree &t, int parts) {
    int nv = t.vertex_count();
    std::vector<std::vector<std::vector<int>>> out;
    if (nv == 0) {
        if (parts == 0) out.push_back({});
        return out;
    }
    if (parts < 1 || parts > nv) return out;
    if (nv > 20) throw std::runtime_error("tree_partitions: tree too large");
    // connected partitions correspond to choices of parent edges to cut:
    // the parts are rooted at the root plus the chosen vertices
    int k = parts - 1;
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    while (true) {
        std::set<int> cut;
        for (int i = 0; i < k; ++i) cut.insert(idx[i] + 1);
        std::vector<int> part_root(nv);
        for (int v = 0; v < nv; ++v)
            part_root[v] = (v == 0 || cut.count(v)) ? v : part_root[t.parent(v)];
        std::map<int, std::vector<int>> groups;
        for (int v = 0; v < nv; ++v) groups[part_root[v]].push_back(v);
        std::vector<std::vector<int>> partition;
        for (auto &[r, vs] : groups) partition.push_back(vs);
        out.push_back(std::move(partition));
        if (k == 0) break;
        int i = k - 1;
        while (i >= 0 && idx[i] == nv - 1 - k + i) --i;
        if (i < 0) break;
        ++idx[i];
        for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
    return out;
}

Expand expand_vertex(const Tree &t, int v, const Tree &sub) {
    if (v < 0 || v >= t.vertex_count()) throw std::runtime_error("expand_vertex: no such vertex");
    if (sub.leaf_count() != t.arity(v))
        throw std::runtime_error("expand_vertex: leaf count must match vertex arity");
    int nvs = sub.vertex_count();
    // tensor order: t vertices in DF order with v's position expanded to
    // sub's vertices in sub-DF order
    auto ttag = [&](int u) { return u < v ? u : u + nvs - 1; };

    std::function<PTree(int)> copy_at = [&](int u) {
        std::vector<PTree> kids;
        for (const auto &s : t.slots(u))
            kids.push_back(s.is_leaf ? PTree::make_leaf(s.id) : copy_at(s.id));
        PTree p = PTree::make_vertex(std::move(kids));
        p.tag = ttag(u);
        return p;
    };

    PTree ps = sub.planar();
    std::function<PTree(const PTree &)> fix = [&](const PTree &n) -> PTree {
        if (n.leaf) {
            const auto &s = t.slots(v)[n.label];
            return s.is_leaf ? PTree::make_leaf(s.id) : copy_at(s.id);
        }
        std::vector<PTree> kids;
        for (const auto &k : n.kids) kids.push_back(fix(k));
        PTree p = PTree::make_vertex(std::move(kids));
        p.tag = n.tag + v;
        return p;
    };
    PTree replacement = fix(ps);

    std::function<PTree(int)> walk = [&](int u) -> PTree {
        if (u == v) return replacement;
        std::vector<PTree> kids;
        for (const auto &s : t.slots(u))
            kids.push_back(s.is_leaf ? PTree::make_leaf(s.id) : walk(s.id));
        PTree p = PTree::make_vertex(std::move(kids));
        p.tag = ttag(u);
        return p;
    };
    PTree root = walk(0);
    if (root.leaf) return {Tree::trivial(), Perm(0)};
    Key k = canon_rec(root);
    auto c = TreeBuilder::from_canonical(root, k.enc);
    return {c.tree, c.vperm};
}

int inner_edge_count(const Tree &t) {
    return t.vertex_count() == 0 ? 0 : t.vertex_count() - 1;
}

}  // namespace opal

#include "opal/perm.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace opal {

Perm::Perm(int n) : img_(n) {
    std::iota(img_.begin(), img_.end(), 0);
}

Perm Perm::from_images(std::vector<int> images) {
    std::vector<bool> seen(images.size(), false);
    for (int v : images) {
        if (v < 0 || v >= (int)images.size() || seen[v])
            throw std::invalid_argument("not a permutation");
        seen[v] = true;
    }
    Perm p(0);
    p.img_ = std::move(images);
    return p;
}

Perm Perm::adjacent(int n, int i) {
    if (i < 0 || i + 1 >= n) throw std::invalid_argument("adjacent transposition out of range");
    Perm p(n);
    std::swap(p.img_[i], p.img_[i + 1]);
    return p;
}

Perm Perm::after(const Perm &o) const {
    if (n() != o.n()) throw std::invalid_argument("composing permutations of different sizes");
    Perm p(n());
    for (int i = 0; i < n(); ++i) p.img_[i] = img_[o.img_[i]];
    return p;
}

Perm Perm::inverse() const {
    Perm p(n());
    for (int i = 0; i < n(); ++i) p.img_[img_[i]] = i;
    return p;
}

bool Perm::is_identity() const {
    for (int i = 0; i < n(); ++i)
        if (img_[i] != i) return false;
    return true;
}

int Perm::sign() const {
    int inv = 0;
    for (int i = 0; i < n(); ++i)
        for (int j = i + 1; j < n(); ++j)
            if (img_[i] > img_[j]) ++inv;
    return inv % 2 == 0 ? 1 : -1;
}

std::vector<int> Perm::adjacent_word() const {
    // Bubble-sort the one-line notation; swapping slots (j, j+1) of sigma's
    // one-line form realizes sigma ∘ s_j, so sigma = s_{w_k} ∘ ... ∘ s_{w_1}
    // when the sort applied swaps w_1, ..., w_k in that order.
    std::vector<int> v = img_;
    std::vector<int> swaps;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int j = 0; j + 1 < (int)v.size(); ++j) {
            if (v[j] > v[j + 1]) {
                std::swap(v[j], v[j + 1]);
                swaps.push_back(j);
                changed = true;
            }
        }
    }
    std::reverse(swaps.begin(), swaps.end());
    return swaps;
}

std::vector<Perm> Perm::all(int n) {
    std::vector<int> v(n);
    std::iota(v.begin(), v.end(), 0);
    std::vector<Perm> out;
    do {
        out.push_back(Perm::from_images(v));
    } while (std::next_permutation(v.begin(), v.end()));
    return out;
}

Rat koszul_sign(const Perm &sigma, const std::vector<int> &degrees) {
    if ((int)degrees.size() != sigma.n())
        throw std::invalid_argument("koszul_sign: degree count mismatch");
    long e = 0;
    for (int i = 0; i < sigma.n(); ++i)
        for (int j = i + 1; j < sigma.n(); ++j)
            if (sigma(i) > sigma(j)) e += (long)degrees[i] * degrees[j];
    return sign_pow(e);
}

}  // namespace opal

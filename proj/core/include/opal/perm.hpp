#pragma once

#include <vector>

#include "opal/rational.hpp"

namespace opal {

/* Permutation of {0, ..., n-1}, stored in one-line notation. */
class Perm {
  public:
    explicit Perm(int n = 0);  // identity
    static Perm from_images(std::vector<int> images);
    static Perm adjacent(int n, int i);  // swaps i and i+1

    int n() const { return (int)img_.size(); }
    int operator()(int i) const { return img_[i]; }
    const std::vector<int> &images() const { return img_; }

    Perm after(const Perm &o) const;  // function composition: (this after o)(i) = this(o(i))
    Perm inverse() const;
    bool is_identity() const;
    int sign() const;

    /* Indices w so that this = s_{w[0]} ∘ s_{w[1]} ∘ ... (rightmost applied first). */
    std::vector<int> adjacent_word() const;

    friend bool operator==(const Perm &a, const Perm &b) { return a.img_ == b.img_; }
    friend bool operator!=(const Perm &a, const Perm &b) { return !(a == b); }
    friend bool operator<(const Perm &a, const Perm &b) { return a.img_ < b.img_; }

    static std::vector<Perm> all(int n);  // lexicographic by one-line notation

  private:
    std::vector<int> img_;
};

/* Koszul sign of rearranging x_0 ⊗ ... ⊗ x_{n-1} so that x_i lands in slot
   sigma(i): product of (-1)^{|x_i||x_j|} over pairs i < j with
   sigma(i) > sigma(j). */
Rat koszul_sign(const Perm &sigma, const std::vector<int> &degrees);

}  // namespace opal

#pragma once

#include <gmpxx.h>

#include <iosfwd>
#include <string>

namespace opal {

/* Exact rational scalar over Q. Always canonical: gcd(num,den)=1, den>0. */
class Rat {
  public:
    Rat() : v_(0) {}
    Rat(long n) : v_(n) {}
    Rat(long n, long d);
    explicit Rat(const mpq_class &v) : v_(v) { v_.canonicalize(); }

    // Parses "p", "-p", "p/q". Throws std::invalid_argument on malformed input.
    static Rat parse(const std::string &s);

    // Canonical text form: "p" when den==1, otherwise "p/q" with q>0.
    std::string str() const;

    bool is_zero() const { return sgn(v_) == 0; }
    int sign() const { return sgn(v_); }
    Rat abs() const;

    Rat operator-() const;
    Rat &operator+=(const Rat &o);
    Rat &operator-=(const Rat &o);
    Rat &operator*=(const Rat &o);
    Rat &operator/=(const Rat &o);  // throws on division by zero

    friend Rat operator+(Rat a, const Rat &b) { return a += b; }
    friend Rat operator-(Rat a, const Rat &b) { return a -= b; }
    friend Rat operator*(Rat a, const Rat &b) { return a *= b; }
    friend Rat operator/(Rat a, const Rat &b) { return a /= b; }

    friend bool operator==(const Rat &a, const Rat &b) { return a.v_ == b.v_; }
    friend bool operator!=(const Rat &a, const Rat &b) { return a.v_ != b.v_; }
    friend bool operator<(const Rat &a, const Rat &b) { return a.v_ < b.v_; }
    friend bool operator<=(const Rat &a, const Rat &b) { return a.v_ <= b.v_; }

    Rat inverse() const;

    const mpq_class &raw() const { return v_; }

  private:
    mpq_class v_;
};

std::ostream &operator<<(std::ostream &os, const Rat &r);

// (-1)^k as a scalar.
inline Rat sign_pow(long k) { return (((k % 2) + 2) % 2 == 0) ? Rat(1) : Rat(-1); }

}  // namespace opal

#include "opal/rational.hpp"

#include <ostream>
#include <stdexcept>

namespace opal {

Rat::Rat(long n, long d) {
    if (d == 0) throw std::invalid_argument("rational with zero denominator");
    v_ = mpq_class(n, d);
    v_.canonicalize();
}

Rat Rat::parse(const std::string &s) {
    if (s.empty()) throw std::invalid_argument("empty rational literal");
    auto bad = [&] { throw std::invalid_argument("malformed rational literal: " + s); };
    std::size_t slash = s.find('/');
    std::string num = (slash == std::string::npos) ? s : s.substr(0, slash);
    std::string den = (slash == std::string::npos) ? "1" : s.substr(slash + 1);
    auto check_int = [&](const std::string &t, bool allow_sign) {
        if (t.empty()) bad();
        std::size_t i = 0;
        if (allow_sign && (t[0] == '-' || t[0] == '+')) i = 1;
        if (i == t.size()) bad();
        for (; i < t.size(); ++i)
            if (t[i] < '0' || t[i] > '9') bad();
    };
    check_int(num, true);
    check_int(den, true);
    if (num[0] == '+') num = num.substr(1);
    if (den[0] == '+') den = den.substr(1);
    mpz_class n(num), d(den);
    if (d == 0) bad();
    mpq_class v(n, d);
    v.canonicalize();
    return Rat(v);
}

std::string Rat::str() const {
    if (v_.get_den() == 1) return v_.get_num().get_str();
    return v_.get_num().get_str() + "/" + v_.get_den().get_str();
}

Rat Rat::abs() const { return Rat(mpq_class(::abs(v_))); }

Rat Rat::operator-() const { return Rat(mpq_class(-v_)); }

Rat &Rat::operator+=(const Rat &o) {
    v_ += o.v_;
    return *this;
}
Rat &Rat::operator-=(const Rat &o) {
    v_ -= o.v_;
    return *this;
}
Rat &Rat::operator*=(const Rat &o) {
    v_ *= o.v_;
    return *this;
}
Rat &Rat::operator/=(const Rat &o) {
    if (o.is_zero()) throw std::invalid_argument("rational division by zero");
    v_ /= o.v_;
    return *this;
}

Rat Rat::inverse() const {
    if (is_zero()) throw std::invalid_argument("inverse of zero");
    return Rat(mpq_class(1) / v_);
}

std::ostream &operator<<(std::ostream &os, const Rat &r) { return os << r.str(); }

}  // namespace opal

#pragma once

// Exact rational coefficients. GMP's mpq_class keeps values canonical
// (positive denominator, reduced, zero stored as 0/1) after every operation.

#include <gmpxx.h>

#include <stdexcept>
#include <string>
#include <string_view>

namespace isoforge {

using Rational = mpq_class;
using BigInt = mpz_class;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parses "num/den" or an integer string. Whitespace around the value is ignored.
inline Rational parse_rational(std::string_view text) {
  auto first = text.find_first_not_of(" \t\n");
  auto last = text.find_last_not_of(" \t\n");
  if (first == std::string_view::npos)
    throw ParseError("empty rational");
  std::string s(text.substr(first, last - first + 1));
  auto slash = s.find('/');
  auto valid_int = [](std::string_view v, bool allow_sign) {
    if (v.empty())
      return false;
    std::size_t i = 0;
    if (allow_sign && (v[0] == '-' || v[0] == '+'))
      i = 1;
    if (i == v.size())
      return false;
    for (; i < v.size(); ++i)
      if (v[i] < '0' || v[i] > '9')
        return false;
    return true;
  };
  std::string num = slash == std::string::npos ? s : s.substr(0, slash);
  std::string den = slash == std::string::npos ? "1" : s.substr(slash + 1);
  if (!valid_int(num, true) || !valid_int(den, false))
    throw ParseError("malformed rational '" + s + "'");
  if (num[0] == '+')
    num.erase(0, 1);
  BigInt n(num, 10), d(den, 10);
  if (d == 0)
    throw ParseError("zero denominator in '" + s + "'");
  Rational r(n, d);
  r.canonicalize();
  return r;
}

/// Always "num/den", including integers ("3/1") and zero ("0/1").
inline std::string to_fraction_string(const Rational& r) {
  return r.get_num().get_str() + "/" + r.get_den().get_str();
}

/// "num" for integers, "num/den" otherwise.
inline std::string to_short_string(const Rational& r) {
  if (r.get_den() == 1)
    return r.get_num().get_str();
  return to_fraction_string(r);
}

inline bool is_zero(const Rational& r) { return sgn(r) == 0; }

}  // namespace isoforge

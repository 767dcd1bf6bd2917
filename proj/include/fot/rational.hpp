#pragma once

#include <boost/rational.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fot {

/// Exact rational arithmetic for answer canonicalization and Game of 24
/// evaluation. boost::rational keeps values in lowest terms; all domain
/// values here stay far below the int64 range.
using Rational = boost::rational<long long>;

/// Parses "42", "-42", "3.25", "1,234" or "a/b" into an exact rational.
/// Returns nullopt for anything else (including division by zero).
std::optional<Rational> parse_rational(const std::string& text);

/// Lowest-terms text form: "42" for integers, "-8/3" otherwise.
std::string format_rational(const Rational& r);

/// Space-separated format_rational over a list, e.g. "2 8 8 14".
std::string format_rationals(const std::vector<Rational>& rs);

bool is_integer(const Rational& r);

/// splitmix64-style mixing used to derive per-tree and per-problem seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

/// FNV-1a 64-bit hash, used for config fingerprints and stateless mock RNG.
std::uint64_t fnv1a64(const std::string& data);

}  // namespace fot

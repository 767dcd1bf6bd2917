#include "fot/rational.hpp"

#include <cctype>
#include <cstdlib>
#include <sstream>

namespace fot {

namespace {

bool parse_int(const std::string& s, long long* out) {
    if (s.empty()) return false;
    std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
    if (i == s.size()) return false;
    for (std::size_t k = i; k < s.size(); ++k)
        if (!std::isdigit(static_cast<unsigned char>(s[k]))) return false;
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (errno != 0 || end != s.c_str() + s.size()) return false;
    *out = v;
    return true;
}

}  // namespace

std::optional<Rational> parse_rational(const std::string& text) {
    std::string s;
    s.reserve(text.size());
    // strip surrounding whitespace and thousands separators between digits
    std::size_t b = text.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return std::nullopt;
    std::size_t e = text.find_last_not_of(" \t\r\n");
    for (std::size_t i = b; i <= e; ++i) {
        if (text[i] == ',' && i > b && i + 1 <= e &&
            std::isdigit(static_cast<unsigned char>(text[i - 1])) &&
            std::isdigit(static_cast<unsigned char>(text[i + 1])))
            continue;
        s.push_back(text[i]);
    }
    if (s.empty()) return std::nullopt;

    if (auto slash = s.find('/'); slash != std::string::npos) {
        long long num = 0, den = 0;
        if (!parse_int(s.substr(0, slash), &num)) return std::nullopt;
        if (!parse_int(s.substr(slash + 1), &den)) return std::nullopt;
        if (den == 0) return std::nullopt;
        return Rational(num, den);
    }
    if (auto dot = s.find('.'); dot != std::string::npos) {
        std::string ip = s.substr(0, dot);
        std::string fp = s.substr(dot + 1);
        if (fp.empty() && (ip.empty() || ip == "-" || ip == "+")) return std::nullopt;
        bool neg = !ip.empty() && ip[0] == '-';
        if (ip == "-" || ip == "+" || ip.empty()) ip += "0";
        long long whole = 0;
        if (!parse_int(ip, &whole)) return std::nullopt;
        long long frac = 0;
        long long scale = 1;
        if (!fp.empty()) {
            if (fp.size() > 15) return std::nullopt;
            if (!parse_int(fp, &frac)) return std::nullopt;
            if (frac < 0) return std::nullopt;
            for (std::size_t i = 0; i < fp.size(); ++i) scale *= 10;
        }
        Rational r(std::llabs(whole), 1);
        r += Rational(frac, scale);
        if (neg || whole < 0) r = -r;
        return r;
    }
    long long v = 0;
    if (!parse_int(s, &v)) return std::nullopt;
    return Rational(v, 1);
}

std::string format_rational(const Rational& r) {
    std::ostringstream os;
    os << r.numerator();
    if (r.denominator() != 1) os << '/' << r.denominator();
    return os.str();
}

std::string format_rationals(const std::vector<Rational>& rs) {
    std::string out;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        if (i) out += ' ';
        out += format_rational(rs[i]);
    }
    return out;
}

bool is_integer(const Rational& r) { return r.denominator() == 1; }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace fot

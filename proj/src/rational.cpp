#include "stic/rational.hpp"

#include <charconv>
#include <numeric>

#include "stic/errors.hpp"

namespace stic {

namespace {

constexpr std::int64_t kMaxMagnitude = 1'000'000'000'000'000'000LL;

std::int64_t parse_int(std::string_view s, std::string_view whole) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw FormatError("not a number: '" + std::string(whole) + "'");
  }
  return v;
}

Rational parse_decimal(std::string_view text) {
  std::string_view s = text;
  int exponent = 0;
  if (auto e = s.find_first_of("eE"); e != std::string_view::npos) {
    exponent = static_cast<int>(parse_int(s.substr(e + 1).starts_with('+') ? s.substr(e + 2) : s.substr(e + 1), text));
    s = s.substr(0, e);
  }
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) throw FormatError("not a number: '" + std::string(text) + "'");

  std::int64_t mantissa = 0;
  bool seen_dot = false;
  bool seen_digit = false;
  for (char c : s) {
    if (c == '.') {
      if (seen_dot) throw FormatError("not a number: '" + std::string(text) + "'");
      seen_dot = true;
      continue;
    }
    if (c < '0' || c > '9') throw FormatError("not a number: '" + std::string(text) + "'");
    seen_digit = true;
    if (mantissa > kMaxMagnitude / 10) throw FormatError("too many digits: '" + std::string(text) + "'");
    mantissa = mantissa * 10 + (c - '0');
    if (seen_dot) --exponent;
  }
  if (!seen_digit) throw FormatError("not a number: '" + std::string(text) + "'");

  std::int64_t num = negative ? -mantissa : mantissa;
  std::int64_t den = 1;
  for (; exponent > 0; --exponent) {
    if (num > kMaxMagnitude / 10 || num < -kMaxMagnitude / 10) throw FormatError("out of range: '" + std::string(text) + "'");
    num *= 10;
  }
  for (; exponent < 0; ++exponent) {
    if (den > kMaxMagnitude / 10) throw FormatError("out of range: '" + std::string(text) + "'");
    den *= 10;
  }
  return {num, den};
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw ParameterRangeError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

Rational Rational::parse(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    return {parse_int(text.substr(0, slash), text), parse_int(text.substr(slash + 1), text)};
  }
  return parse_decimal(text);
}

std::string Rational::str() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

}  // namespace stic

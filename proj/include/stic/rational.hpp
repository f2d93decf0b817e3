#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace stic {

// Exact fraction num/den with den > 0, always stored in lowest terms.
// Parses "1/1024", "0.0009765625", "3", "1e-3".
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den);

  static Rational parse(std::string_view text);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string str() const;

  friend bool operator==(const Rational&, const Rational&) = default;

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace stic

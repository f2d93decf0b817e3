#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace stic {

// Counter-based generator: every draw is a pure function of
// (seed, stream id, draw index). The stream key is FNV-1a of the stream id
// mixed with the seed; draw i is the i-th output of SplitMix64 keyed by it.
// One stream per decision site, so adding a site never shifts another.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::string stream);

  std::uint64_t seed() const { return seed_; }
  const std::string& stream() const { return stream_; }
  std::uint64_t cursor() const { return cursor_; }

  // Indexed draws; do not move the cursor.
  std::uint64_t bits_at(std::uint64_t index) const;
  double uniform_at(std::uint64_t index) const;  // [0, 1)
  std::uint64_t below_at(std::uint64_t n, std::uint64_t index) const;  // [0, n)

  // Cursor draws.
  std::uint64_t next_bits() { return bits_at(cursor_++); }
  double next_uniform() { return uniform_at(cursor_++); }
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_uniform(); }
  std::uint64_t next_below(std::uint64_t n) { return below_at(n, cursor_++); }

  // Child stream "<stream>/<name>" with a fresh cursor.
  SeededRng fork(std::string_view name) const;
  SeededRng fork(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::string stream_;
  std::uint64_t key_;
  std::uint64_t cursor_ = 0;
};

std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64_mix(std::uint64_t z);

}  // namespace stic

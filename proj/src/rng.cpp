#include "stic/rng.hpp"

namespace stic {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SeededRng::SeededRng(std::uint64_t seed, std::string stream)
    : seed_(seed), stream_(std::move(stream)), key_(splitmix64_mix(seed ^ splitmix64_mix(fnv1a64(stream_)))) {}

std::uint64_t SeededRng::bits_at(std::uint64_t index) const {
  return splitmix64_mix(key_ + (index + 1) * kGolden);
}

double SeededRng::uniform_at(std::uint64_t index) const {
  return static_cast<double>(bits_at(index) >> 11) * 0x1.0p-53;
}

std::uint64_t SeededRng::below_at(std::uint64_t n, std::uint64_t index) const {
  const unsigned __int128 wide = static_cast<unsigned __int128>(bits_at(index)) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

SeededRng SeededRng::fork(std::string_view name) const {
  std::string child = stream_;
  child += '/';
  child += name;
  return {seed_, std::move(child)};
}

SeededRng SeededRng::fork(std::uint64_t index) const { return fork(std::to_string(index)); }

}  // namespace stic

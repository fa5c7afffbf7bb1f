#include "traceiht/random.hpp"

#include <boost/random/normal_distribution.hpp>

namespace traceiht {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kSplitSalt = 0xd1b54a32d192ed03ULL;
}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed) : key_(splitmix64(seed)) {}

std::uint64_t RandomStream::child_seed(std::uint64_t id) const {
  return splitmix64(key_ ^ splitmix64(id * kSplitSalt + 1));
}

RandomStream RandomStream::split(std::uint64_t id) const {
  return RandomStream(child_seed(id));
}

RandomStream::result_type RandomStream::operator()() {
  return splitmix64(key_ + (counter_++) * kGolden);
}

double RandomStream::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() {
  boost::random::normal_distribution<double> dist;
  return dist(*this);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  RandomStream stream(master);
  std::uint64_t seed = master;
  for (auto id : path) {
    seed = stream.child_seed(id);
    stream = RandomStream(seed);
  }
  return seed;
}

}  // namespace traceiht

#pragma once

#include <cstdint>

namespace gwip {

// splitmix64; the standard finalizer-style mix used for seed derivation and
// counter-based streams.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t mix_key(uint64_t key, uint64_t salt) {
  return splitmix64(key ^ (salt + 0x9e3779b97f4a7c15ull + (key << 6) + (key >> 2)));
}

// Counter-based stream: the value at counter c is a pure function of
// (key, c), so replicates and replays are reproducible without shared state.
//
// Streams are split hierarchically: derive(master, i) gives replicate i its
// own stream, and independent substreams can be split off any key.
class RngStream {
 public:
  explicit RngStream(uint64_t key) : key_(splitmix64(key)) {}

  static RngStream derive(uint64_t master, uint64_t id) {
    return RngStream(mix_key(splitmix64(master), id));
  }

  RngStream split(uint64_t id) const { return RngStream(mix_key(key_, id)); }

  uint64_t key() const { return key_; }

  uint64_t next_u64() { return at(counter_++); }

  // Uniform on the open interval (0,1); never returns 0 or 1 exactly.
  double next_unit() { return to_unit(next_u64()); }

  // Stateless access by counter.
  uint64_t at(uint64_t counter) const { return splitmix64(key_ ^ (counter * 0xd1342543de82ef95ull)); }
  double unit_at(uint64_t counter) const { return to_unit(at(counter)); }

  static double to_unit(uint64_t x) {
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace gwip

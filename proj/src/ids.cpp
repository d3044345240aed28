#include "vera/ids.hpp"

#include <array>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <mutex>
#include <random>
#include <stdexcept>

namespace vera {
namespace {

constexpr char kAlphabet[] = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";

struct IdState {
  std::mutex mutex;
  std::uint64_t last_ms = 0;
  // 80-bit counter split into 16 high bits and 64 low bits.
  std::uint16_t hi = 0;
  std::uint64_t lo = 0;
  std::mt19937_64 entropy{std::random_device{}()};
};

IdState& state() {
  static IdState s;
  return s;
}

std::uint64_t now_ms() {
  using namespace std::chrono;
  return static_cast<std::uint64_t>(
      duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
}

}  // namespace

std::string new_id() {
  auto& s = state();
  std::lock_guard lock(s.mutex);
  std::uint64_t ms = now_ms();
  if (ms > s.last_ms) {
    s.last_ms = ms;
    // Leave headroom in the top bit so increments never wrap within a millisecond.
    s.hi = static_cast<std::uint16_t>(s.entropy() & 0x7fff);
    s.lo = s.entropy();
  } else {
    if (++s.lo == 0) ++s.hi;
  }

  std::array<char, 26> out{};
  std::uint64_t t = s.last_ms;
  for (int i = 9; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kAlphabet[t & 31];
    t >>= 5;
  }
  // 80 random bits -> 16 chars, most significant first.
  std::uint64_t lo = s.lo;
  std::uint64_t hi = s.hi;
  for (int i = 25; i >= 10; --i) {
    out[static_cast<std::size_t>(i)] = kAlphabet[lo & 31];
    lo = (lo >> 5) | ((hi & 31) << 59);
    hi >>= 5;
  }
  return std::string(out.begin(), out.end());
}

long long id_timestamp_ms(const std::string& id) {
  if (id.size() < 10) throw std::invalid_argument("id too short: " + id);
  long long t = 0;
  for (int i = 0; i < 10; ++i) {
    const char c = id[static_cast<std::size_t>(i)];
    int v = -1;
    for (int k = 0; k < 32; ++k)
      if (kAlphabet[k] == c) v = k;
    if (v < 0) throw std::invalid_argument("not a generated id: " + id);
    t = (t << 5) | v;
  }
  return t;
}

std::string utc_timestamp() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t tt = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char full[40];
  std::snprintf(full, sizeof full, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return full;
}

}  // namespace vera

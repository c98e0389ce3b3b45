// Content digests for provenance and reproducibility checks.
//
// FNV-1a 64-bit over raw bytes. Reports embed these digests so a rerun
// with the same config and seed can be compared byte-for-byte without
// storing the full artifacts.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "impsim/error.hpp"

namespace impsim {

class Digest {
 public:
  Digest& update(const void* bytes, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ull;
    }
    return *this;
  }

  Digest& update(const std::string& s) { return update(s.data(), s.size()); }

  Digest& update(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    return update(&bits, sizeof bits);
  }

  Digest& update(const std::vector<double>& v) {
    for (double x : v) update(x);
    return *this;
  }

  std::uint64_t value() const { return hash_; }

  std::string hex() const {
    std::ostringstream os;
    os << std::hex << std::setfill('0') << std::setw(16) << hash_;
    return os.str();
  }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

inline std::string digest_string(const std::string& s) {
  return Digest().update(s).hex();
}

inline std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for digest: " + path);
  Digest d;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    d.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return d.hex();
}

}  // namespace impsim

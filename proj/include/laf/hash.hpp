// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "laf/common.hpp"

namespace laf {

/// 64-bit FNV-1a, used for model/config fingerprints and cache keys.
class Fnv1a {
 public:
  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  void update(const Matrix& m) {
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    update(dims, sizeof dims);
    update(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  }

  std::uint64_t digest() const { return state_; }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string fnv1a_hex(std::string_view s) {
  Fnv1a h;
  h.update(s);
  return h.hex();
}

}  // namespace laf

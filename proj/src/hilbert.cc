// Copyright 2026 The SerialAnon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "serialanon/hilbert.h"

#include <string>

namespace serialanon {
namespace {

void CheckShape(std::size_t dims, int bits) {
  if (bits < 1 || bits > 32 || dims == 0 || dims * static_cast<std::size_t>(bits) > 64) {
    throw Error("Hilbert curve: unsupported shape " + std::to_string(dims) + "x" +
                std::to_string(bits) + " bits");
  }
}

}  // namespace

// Skilling's transpose formulation: undo excess work on the axes, Gray-encode,
// then interleave the transposed bits most significant first.
std::uint64_t HilbertIndex(std::span<const std::uint32_t> point, int bits) {
  const std::size_t n = point.size();
  CheckShape(n, bits);
  std::vector<std::uint32_t> x(point.begin(), point.end());
  const std::uint32_t top = 1u << (bits - 1);
  for (auto v : x) {
    if (bits < 32 && v >= (1u << bits)) throw Error("Hilbert curve: coordinate out of range");
  }
  for (std::uint32_t q = top; q > 1; q >>= 1) {
    const std::uint32_t p = q - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        const std::uint32_t t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
  for (std::size_t i = 1; i < n; ++i) x[i] ^= x[i - 1];
  std::uint32_t t = 0;
  for (std::uint32_t q = top; q > 1; q >>= 1) {
    if (x[n - 1] & q) t ^= q - 1;
  }
  for (auto& v : x) v ^= t;

  std::uint64_t index = 0;
  for (int b = bits - 1; b >= 0; --b) {
    for (std::size_t i = 0; i < n; ++i) index = (index << 1) | ((x[i] >> b) & 1u);
  }
  return index;
}

std::vector<std::uint32_t> HilbertPoint(std::uint64_t index, int dims, int bits) {
  const auto n = static_cast<std::size_t>(dims);
  CheckShape(n, bits);
  std::vector<std::uint32_t> x(n, 0);
  for (int b = bits - 1; b >= 0; --b) {
    for (std::size_t i = 0; i < n; ++i) {
      const int shift = b * dims + static_cast<int>(n - 1 - i);
      x[i] |= static_cast<std::uint32_t>((index >> shift) & 1u) << b;
    }
  }
  const std::uint32_t limit = 2u << (bits - 1);
  std::uint32_t t = x[n - 1] >> 1;
  for (std::size_t i = n - 1; i > 0; --i) x[i] ^= x[i - 1];
  x[0] ^= t;
  for (std::uint32_t q = 2; q != limit && q != 0; q <<= 1) {
    const std::uint32_t p = q - 1;
    for (std::size_t i = n; i-- > 0;) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
  return x;
}

std::uint64_t HilbertIndex(std::span<const int> qi, const QISchema& schema, int bits) {
  schema.CheckContains(qi);
  std::vector<std::uint32_t> point(qi.size());
  for (std::size_t a = 0; a < qi.size(); ++a) {
    const auto& dom = schema.attribute(a).domain;
    if (bits < 32 && static_cast<std::uint64_t>(dom.width()) >= (1ull << bits)) {
      throw Error("Hilbert curve: " + std::to_string(bits) + " bits cannot hold '" +
                  schema.attribute(a).name + "'");
    }
    point[a] = static_cast<std::uint32_t>(qi[a] - dom.lo);
  }
  return HilbertIndex(point, bits);
}

}  // namespace serialanon

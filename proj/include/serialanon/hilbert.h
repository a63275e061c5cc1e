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

// Hilbert space-filling curve over the integer QI grid.

#ifndef SERIALANON_HILBERT_H_
#define SERIALANON_HILBERT_H_

#include <cstdint>
#include <span>
#include <vector>

#include "serialanon/model.h"

namespace serialanon {

inline constexpr int kDefaultHilbertBits = 5;

// Index of a grid point on the d-dimensional curve of 2^bits cells per
// side. Coordinates must lie in [0, 2^bits); d * bits must not exceed 64.
std::uint64_t HilbertIndex(std::span<const std::uint32_t> point, int bits);
// Inverse of HilbertIndex.
std::vector<std::uint32_t> HilbertPoint(std::uint64_t index, int dims, int bits);

// Index of a QI vector after shifting each attribute to start at 0. Throws
// when the vector is outside the schema or an attribute domain needs more
// than `bits` bits.
std::uint64_t HilbertIndex(std::span<const int> qi, const QISchema& schema,
                           int bits = kDefaultHilbertBits);

}  // namespace serialanon

#endif  // SERIALANON_HILBERT_H_

// Copyright 2026 The unigait Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef UNIGAIT_HASH_H_
#define UNIGAIT_HASH_H_

#include <cstddef>
#include <cstdint>

namespace unigait {

// 64-bit FNV-1a.
class Fnv1a64 {
 public:
  void Update(const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t Fnv1a64Hash(const void* bytes, std::size_t n) {
  Fnv1a64 h;
  h.Update(bytes, n);
  return h.digest();
}

}  // namespace unigait

#endif  // UNIGAIT_HASH_H_

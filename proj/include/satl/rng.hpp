/*
 * Copyright 2026 The satl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace satl {

/// Counter-based seed derivation. A parent seed and a list of integer tags map to a
/// child seed through SplitMix64 finalization, so every substream is a pure function
/// of (parent, tags) and never depends on how many draws another stream consumed.
namespace seeds {

constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive(std::uint64_t parent, std::initializer_list<std::uint64_t> tags) noexcept {
    std::uint64_t s = mix(parent);
    for (auto t : tags) { s = mix(s ^ mix(t + 0x632be59bd9b4e019ULL)); }
    return s;
}

/// FNV-1a of a short label, used to turn stream names into tags.
constexpr std::uint64_t tag(std::string_view label) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Fixed substream tags.
inline constexpr std::uint64_t kCovariates = 1;
inline constexpr std::uint64_t kNoise = 2;

}  // namespace seeds

using Engine = std::mt19937_64;

}  // namespace satl

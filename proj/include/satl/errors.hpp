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
#include <stdexcept>
#include <string>

namespace satl {

/// Thrown when a caller breaks an operation's precondition (bad sizes, bad ranges).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a linear system cannot be factorized even after the jitter ladder.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string &what, std::uint64_t points_hash = 0, double max_jitter = 0.0)
        : std::runtime_error(what), points_hash_(points_hash), max_jitter_(max_jitter) {}

    [[nodiscard]] std::uint64_t points_hash() const noexcept { return points_hash_; }
    [[nodiscard]] double max_jitter() const noexcept { return max_jitter_; }

private:
    std::uint64_t points_hash_;
    double max_jitter_;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
inline void require(bool cond, const std::string &msg) {
    if (!cond) { throw ContractError(msg); }
}
}  // namespace detail

}  // namespace satl

// Copyright 2026 The Acorn Authors
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

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace acorn {

// Error taxonomy. The CLI maps these to process exit codes; library code
// throws them directly.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration, arguments, or violated API preconditions. Exit 1.
struct ConfigError : Error {
  using Error::Error;
};

// File read/write/parse failures. Exit 2.
struct IoError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required, or numeric failure
// inside the solver/trainer. Exit 3.
struct NumericError : Error {
  using Error::Error;
};

// Unreadable checkpoints or unsupported checkpoint versions. Exit 4.
struct CheckpointError : Error {
  using Error::Error;
};

// Block budget too small for any feasible decision assignment.
struct InfeasibleError : NumericError {
  InfeasibleError(const std::string& msg, std::int64_t min_blocks)
      : NumericError(msg), min_achievable_blocks(min_blocks) {}
  std::int64_t min_achievable_blocks;
};

}  // namespace acorn

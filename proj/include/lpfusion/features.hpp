/*
 * Copyright 2026 The lpfusion Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "lpfusion/linalg.hpp"

namespace lpfusion {

/// Per-column min-max scaling to [0, 1] fitted on training rows. Constant
/// columns get range 1 so they map to 0.
struct MinMaxScaler {
  Vector lower;
  Vector range;

  static MinMaxScaler fit(const Matrix& x);
  Matrix transform(const Matrix& x) const;
  bool fitted() const { return lower.size() > 0; }
};

}  // namespace lpfusion

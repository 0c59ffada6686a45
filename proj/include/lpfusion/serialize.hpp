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

#include <iosfwd>
#include <string>

#include "lpfusion/fusion.hpp"

namespace lpfusion {

inline constexpr const char* kModelFormat = "lpfusion-model";
inline constexpr int kModelVersion = 1;

/// Self-describing JSON document. Doubles are written in their shortest
/// round-trip form, so a load restores the exact bits.
void save_model(std::ostream& out, const FusionModel& model);
void save_model(const std::string& path, const FusionModel& model);

/// Throws ParseError on a malformed document or unknown format/version.
FusionModel load_model(std::istream& in);
FusionModel load_model(const std::string& path);

}  // namespace lpfusion

/*
 * Copyright 2026 The stratvr Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef STRATVR_IO_HPP
#define STRATVR_IO_HPP

#include <filesystem>
#include <string>
#include <string_view>

namespace stratvr {

/// Shortest round-trip decimal form of x ("nan", "inf", "-inf" otherwise).
std::string format_double(double x);

/// Writes to a sibling temporary and renames it over `path`. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Throws IoError when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

}  // namespace stratvr

#endif  // STRATVR_IO_HPP

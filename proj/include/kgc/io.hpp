// Copyright 2026 The Authors.
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
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace kgc {

using Json = nlohmann::json;

/// Calls fn(record, line_number) for every non-blank line. Lines that are not
/// JSON objects raise ParseError with the 1-based line number.
void read_jsonl(const std::filesystem::path& path,
                const std::function<void(const Json&, std::size_t)>& fn);

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, creating parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits by hash_hex.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hash_hex(std::string_view data);

}  // namespace kgc

// Copyright 2026 The ctxopt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CTXOPT_JSON_IO_HPP_
#define CTXOPT_JSON_IO_HPP_

#include <filesystem>
#include <string>

#include "json.hpp"

namespace ctxopt {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Throws ConfigError when the file is missing or not valid JSON.
nlohmann::json read_json_file(const std::filesystem::path& path);

// Two-space indent and a trailing newline; output is stable for equal input.
void write_json_file(const std::filesystem::path& path,
                     const nlohmann::json& value);

}  // namespace ctxopt

#endif  // CTXOPT_JSON_IO_HPP_

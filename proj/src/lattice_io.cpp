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

#include <charconv>
#include <json.hpp>
#include <string>

#include "stratvr/errors.hpp"
#include "stratvr/io.hpp"
#include "stratvr/lattice.hpp"

namespace stratvr {

namespace {

std::string_view next_field(std::string_view& line) {
  const auto comma = line.find(',');
  std::string_view field = line.substr(0, comma);
  line = comma == std::string_view::npos ? std::string_view{} : line.substr(comma + 1);
  while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.remove_suffix(1);
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  return field;
}

template <typename T>
T parse_number(std::string_view field, std::size_t row) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw InvalidInput("malformed CSV value '" + std::string(field) + "' on data row " +
                       std::to_string(row));
  }
  return value;
}

}  // namespace

void save_lattice(const PixelLattice& lattice, const std::filesystem::path& json_path) {
  std::filesystem::path csv_path = json_path;
  csv_path.replace_extension(".csv");

  nlohmann::ordered_json header;
  header["dims"] = lattice.dims();
  header["K"] = lattice.num_classes();
  header["payload_dim"] = lattice.payload_dim();
  header["csv"] = csv_path.filename().string();

  std::string csv = "class";
  for (std::size_t j = 0; j < lattice.payload_dim(); ++j) csv += ",payload_" + std::to_string(j);
  csv += '\n';
  for (PixelIndex p = 0; p < lattice.size(); ++p) {
    csv += std::to_string(lattice.class_at(p));
    for (double v : lattice.payload_at(p)) {
      csv += ',';
      csv += format_double(v);
    }
    csv += '\n';
  }
  write_file_atomic(csv_path, csv);
  write_file_atomic(json_path, header.dump(2) + "\n");
}

PixelLattice load_lattice(const std::filesystem::path& json_path) {
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(read_file(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed lattice header " + json_path.string() + ": " + e.what());
  }
  if (!header.contains("dims") || !header.contains("K")) {
    throw InvalidInput("lattice header needs 'dims' and 'K'");
  }
  auto dims = header.at("dims").get<std::vector<std::size_t>>();
  const int k = header.at("K").get<int>();
  const auto payload_dim = header.value("payload_dim", std::size_t{0});

  std::filesystem::path csv_path = json_path;
  if (header.contains("csv")) {
    csv_path = json_path.parent_path() / header.at("csv").get<std::string>();
  } else {
    csv_path.replace_extension(".csv");
  }
  const std::string text = read_file(csv_path);

  std::vector<int> classes;
  std::vector<double> payload;
  std::string_view rest(text);
  std::size_t row = 0;
  bool first = true;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.substr(0, 5) == "class") continue;
    }
    classes.push_back(parse_number<int>(next_field(line), row));
    for (std::size_t j = 0; j < payload_dim; ++j) {
      if (line.empty() && j < payload_dim) {
        throw InvalidInput("CSV data row " + std::to_string(row) + " has too few payload columns");
      }
      payload.push_back(parse_number<double>(next_field(line), row));
    }
    if (!line.empty()) {
      throw InvalidInput("CSV data row " + std::to_string(row) + " has extra columns");
    }
    ++row;
  }
  return PixelLattice(std::move(dims), k, std::move(classes), payload_dim, std::move(payload));
}

}  // namespace stratvr

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace estgcn::csv {

// Plain comma separation; the formats handled here never quote fields.
std::vector<std::string> split(std::string_view line);

std::string trim(std::string_view s);

// Shortest text that parses back to the same double.
std::string format_double(double v);

std::string format_optional(const std::optional<double>& v);

double parse_double(std::string_view field, const std::string& context);

std::ofstream open_for_write(const std::filesystem::path& path);

// Reads all non-empty lines; throws InputError if the file cannot be opened.
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Writes a header and rows; each row already formatted.
void write_table(const std::filesystem::path& path, const std::string& header,
                 const std::vector<std::vector<std::string>>& rows);

}  // namespace estgcn::csv

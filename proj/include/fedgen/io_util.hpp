#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedgen {

namespace fs = std::filesystem;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// shortest round-trip decimal formatting for doubles/floats (std::to_chars);
// used everywhere we serialise numbers so artifacts are byte-stable
std::string num_str(double v);
std::string num_str(float v);

std::string read_text_file(const fs::path& p);
void write_text_file(const fs::path& p, const std::string& content);

std::vector<float> read_f32_file(const fs::path& p);
void write_f32_file(const fs::path& p, const float* data, std::size_t n);

// FNV-1a 64-bit over raw bytes; stable content hash for manifests/round logs
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// minimal CSV helpers: no quoting support, which is all we need (numeric
// tables + simple ids); SWaT-style files with quoted fields are handled by
// the tolerant split in swat.cpp
std::vector<std::string> split_csv_line(const std::string& line);
std::vector<std::vector<std::string>> read_csv(const fs::path& p);

}  // namespace fedgen

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pae/spectral.hpp"
#include "pae/tensor.hpp"

namespace pae::io {

// "PAET" binary format: magic, version u32, rank u32, dims u64[], payload
// little-endian f64 row-major.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

void save_mask(const std::string& path, const FrequencyMask& m);
FrequencyMask load_mask(const std::string& path);

void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

std::string sha256_bytes(const void* p, std::size_t n);
std::string sha256_str(const std::string& s);
std::string sha256_file(const std::string& path);

// Canonical content hash of a run's output directory: files sorted by
// relative path, manifest.json excluded, the top-level `timings` member of
// any *.json stripped. Wall-clock never influences the hash.
std::string dir_content_hash(const std::string& dir);

std::vector<std::string> list_files_recursive(const std::string& dir);

}  // namespace pae::io

#pragma once
// Minimal NPZ (zip of NPY) reader, plus a stored-entry writer used by tests.
// Supports stored and deflated members; little-endian scalar dtypes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sdrf::npz {

struct NpyArray {
  std::vector<int64_t> shape;
  char kind = 0;        // 'u', 'i', 'f', 'b'
  int item_size = 0;    // bytes
  std::vector<unsigned char> data;

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
  template <typename T>
  T scalar_at(int64_t i) const;
};

// name (without .npy suffix) -> array
std::map<std::string, NpyArray> load_npz(const std::filesystem::path& path);

// serialize one array as NPY bytes
std::vector<unsigned char> encode_npy(const NpyArray& a);

// write arrays as an uncompressed zip (for test fixtures)
void write_npz_stored(const std::filesystem::path& path,
                      const std::map<std::string, NpyArray>& arrays);

}  // namespace sdrf::npz

#include "sdrf/vvol.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

#include "sdrf/errors.hpp"

namespace sdrf::vol {
namespace {

constexpr char kMagic[4] = {'V', 'V', 'O', 'L'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kDtypeF32 = 0;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32(std::FILE* f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  std::fwrite(b, 1, 4, f);
}

bool get_u32(std::FILE* f, uint32_t* v) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) return false;
  *v = static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
       static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
  return true;
}

}  // namespace

void write_volume(const std::filesystem::path& path, const TensorF& voxels) {
  if (voxels.rank() != 3) throw ShapeError("write_volume expects a (D,H,W) grid");
  FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw IoError("cannot open for write: " + path.string());
  std::fwrite(kMagic, 1, 4, f.get());
  put_u32(f.get(), kVersion);
  put_u32(f.get(), 3);
  for (int i = 0; i < 3; ++i) put_u32(f.get(), static_cast<uint32_t>(voxels.dim(i)));
  put_u32(f.get(), kDtypeF32);
  static_assert(sizeof(float) == 4);
  const std::size_t n = static_cast<std::size_t>(voxels.numel());
  if (std::fwrite(voxels.data(), sizeof(float), n, f.get()) != n)
    throw IoError("short write: " + path.string());
}

TensorF read_volume_grid(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw IoError("cannot open: " + path.string());
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4)
    throw VvolTruncated("truncated header: " + path.string());
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw VvolBadMagic("bad magic in " + path.string());
  uint32_t version, ndim, dims[3], dtype;
  if (!get_u32(f.get(), &version) || !get_u32(f.get(), &ndim))
    throw VvolTruncated("truncated header: " + path.string());
  if (version != kVersion)
    throw VvolBadHeader("unsupported version " + std::to_string(version));
  if (ndim != 3) throw VvolBadHeader("ndim must be 3, got " + std::to_string(ndim));
  for (int i = 0; i < 3; ++i)
    if (!get_u32(f.get(), &dims[i])) throw VvolTruncated("truncated header: " + path.string());
  if (!get_u32(f.get(), &dtype)) throw VvolTruncated("truncated header: " + path.string());
  if (dtype != kDtypeF32) throw VvolBadHeader("unsupported dtype code " + std::to_string(dtype));
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    throw VvolBadHeader("zero dimension in " + path.string());

  TensorF grid(Shape{dims[0], dims[1], dims[2]});
  const std::size_t want = static_cast<std::size_t>(grid.numel());
  const std::size_t got = std::fread(grid.data(), sizeof(float), want, f.get());
  if (got < want)
    throw VvolTruncated("payload short by " + std::to_string(want - got) + " floats: " +
                        path.string());
  unsigned char extra;
  if (std::fread(&extra, 1, 1, f.get()) == 1)
    throw VvolPayloadMismatch("payload exceeds header dims: " + path.string());
  return grid;
}

PhaseVolume read_volume(const std::filesystem::path& path) {
  PhaseVolume v;
  v.voxels = read_volume_grid(path);
  v.phase_name = path.stem().string();
  return v;
}

}  // namespace sdrf::vol

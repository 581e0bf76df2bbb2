#include "gpm/ogt.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

#include "gpm/errors.hpp"

namespace gpm {

namespace {

constexpr char kMagic[4] = {'O', 'G', 'T', '1'};
constexpr int kMaxRank = 4;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32_le(std::uint32_t v, std::FILE* f) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  if (std::fwrite(b, 1, 4, f) != 4) throw DataError("ogt: short write");
}

std::uint32_t get_u32_le(std::FILE* f, const std::string& path) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4)
    throw DataError("ogt: truncated file: " + path);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_ogt(const std::string& path, const std::vector<int>& dims,
               const float* data) {
  if (dims.empty() || static_cast<int>(dims.size()) > kMaxRank)
    throw DataError("ogt: rank must be 1..4: " + path);
  std::size_t count = 1;
  for (int d : dims) {
    if (d <= 0) throw DataError("ogt: non-positive dim: " + path);
    count *= static_cast<std::size_t>(d);
  }
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("ogt: cannot open for write: " + path);
  if (std::fwrite(kMagic, 1, 4, f.get()) != 4)
    throw DataError("ogt: short write: " + path);
  unsigned char rank = static_cast<unsigned char>(dims.size());
  if (std::fwrite(&rank, 1, 1, f.get()) != 1)
    throw DataError("ogt: short write: " + path);
  for (int d : dims) put_u32_le(static_cast<std::uint32_t>(d), f.get());
  // float32 little-endian; all supported targets are little-endian.
  static_assert(sizeof(float) == 4);
  if (std::fwrite(data, sizeof(float), count, f.get()) != count)
    throw DataError("ogt: short write: " + path);
  if (std::fflush(f.get()) != 0) throw DataError("ogt: flush failed: " + path);
}

void write_ogt(const std::string& path, const OgtTensor& t) {
  write_ogt(path, t.dims, t.data.data());
}

OgtTensor read_ogt(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("ogt: cannot open: " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 ||
      std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("ogt: bad magic: " + path);
  unsigned char rank = 0;
  if (std::fread(&rank, 1, 1, f.get()) != 1)
    throw DataError("ogt: truncated file: " + path);
  if (rank < 1 || rank > kMaxRank)
    throw DataError("ogt: unsupported rank: " + path);
  OgtTensor t;
  std::size_t count = 1;
  for (int i = 0; i < rank; ++i) {
    std::uint32_t d = get_u32_le(f.get(), path);
    if (d == 0) throw DataError("ogt: zero dim: " + path);
    t.dims.push_back(static_cast<int>(d));
    count *= d;
  }
  t.data.resize(count);
  if (std::fread(t.data.data(), sizeof(float), count, f.get()) != count)
    throw DataError("ogt: truncated data: " + path);
  // Trailing bytes mean a corrupt or mislabeled file.
  unsigned char extra;
  if (std::fread(&extra, 1, 1, f.get()) == 1)
    throw DataError("ogt: trailing bytes: " + path);
  return t;
}

}  // namespace gpm

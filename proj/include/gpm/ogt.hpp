#ifndef GPM_OGT_HPP_
#define GPM_OGT_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace gpm {

// ".ogt" tensor file: magic "OGT1", u8 rank, rank x u32 LE dims,
// product(dims) x float32 LE values, row-major. Used for checkpoints,
// dataset frames and prediction dumps.
struct OgtTensor {
  std::vector<int> dims;
  std::vector<float> data;
};

void write_ogt(const std::string& path, const std::vector<int>& dims,
               const float* data);
void write_ogt(const std::string& path, const OgtTensor& t);

// Throws DataError on bad magic, truncation or dim/size mismatch.
OgtTensor read_ogt(const std::string& path);

}  // namespace gpm

#endif  // GPM_OGT_HPP_

#ifndef GPM_ERRORS_HPP_
#define GPM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace gpm {

// Bad config file, bad key, invalid hyperparameter combination.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing/corrupt dataset or checkpoint files, IO failures.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf loss or other numerical aborts during training.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gpm

#endif  // GPM_ERRORS_HPP_

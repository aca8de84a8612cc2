#pragma once

#include <stdexcept>
#include <string>

namespace edr {

// Error categories map onto CLI exit codes: config=1, data=2, numeric=3.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class config_error : public error {
 public:
  using error::error;
};

class data_error : public error {
 public:
  using error::error;
};

class numeric_error : public error {
 public:
  using error::error;
};

}  // namespace edr

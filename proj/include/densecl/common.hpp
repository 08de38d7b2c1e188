// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace densecl {

// Error taxonomy shared by every module. The category maps 1:1 onto the
// CLI exit codes (config=2, data=3, numeric=4, io=5).
enum class ErrorCategory {
  config,
  data,
  numeric,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(msg), category_(cat) {}

  ErrorCategory category() const { return category_; }

  int exit_code() const {
    switch (category_) {
      case ErrorCategory::config: return 2;
      case ErrorCategory::data: return 3;
      case ErrorCategory::numeric: return 4;
      case ErrorCategory::io: return 5;
    }
    return 1;
  }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ErrorCategory::config, msg) {}
};
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(ErrorCategory::data, msg) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(ErrorCategory::numeric, msg) {}
};
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorCategory::io, msg) {}
};

#define DCL_CHECK(cond, err_type, msg)        \
  do {                                        \
    if (!(cond)) throw err_type(msg);         \
  } while (0)

}  // namespace densecl

#pragma once

#include <stdexcept>
#include <string>

namespace segsense {

// Exit-code classes used by the command-line front end.
enum class ErrorKind { usage = 1, data = 2, predictor = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct PredictorError : Error {
  explicit PredictorError(const std::string& what) : Error(ErrorKind::predictor, what) {}
};

}  // namespace segsense

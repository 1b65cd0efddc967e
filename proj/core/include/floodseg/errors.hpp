#ifndef FLOODSEG_ERRORS_HPP
#define FLOODSEG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace floodseg {

// Exit-status taxonomy: 0 ok, 2 usage/contract, 3 data, 4 divergence, 5 I/O.
enum class ExitCode : int {
  Ok = 0,
  Usage = 2,
  Data = 3,
  Divergence = 4,
  Io = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

// Violated precondition or shape/config contract.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(ExitCode::Usage, msg) {}
};

// Dataset problems: unpaired files, invalid labels, empty splits.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(ExitCode::Data, msg) {}
};

// Non-finite loss during optimization.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& msg) : Error(ExitCode::Divergence, msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(ExitCode::Io, msg) {}
};

}  // namespace floodseg

#endif

#ifndef SLUA_COMMON_HPP
#define SLUA_COMMON_HPP

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace slua {

using WordId = std::int32_t;

// Embedding rows are contiguous, so everything is row-major.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed files, invalid options, mismatched inputs.
class InputError : public Error {
 public:
  using Error::Error;
};

class FormatError : public InputError {
 public:
  FormatError(const std::string& source, std::size_t line, const std::string& what)
      : InputError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class VocabularyMismatch : public InputError {
 public:
  using InputError::InputError;
};

// Training produced a NaN or infinity.
class NumericError : public Error {
 public:
  NumericError(std::size_t pair_index, const std::string& what)
      : Error("non-finite value at pair " + std::to_string(pair_index) + ": " + what),
        pair_index_(pair_index) {}

  std::size_t pair_index() const { return pair_index_; }

 private:
  std::size_t pair_index_;
};

}  // namespace slua

#endif  // SLUA_COMMON_HPP

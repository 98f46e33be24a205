#pragma once

#include <stdexcept>
#include <string>

namespace mixfit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a differentiable primitive is evaluated outside its domain
/// (log or sqrt of a non-positive intermediate, fractional power of a
/// negative base).  Carries the name of the offending operation.
class DomainError : public Error {
 public:
  DomainError(const std::string& op, double operand)
      : Error(op + " evaluated at non-admissible value " + std::to_string(operand)),
        op_(op) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

/// Triangular factorization of a component covariance failed even after the
/// one-shot jitter rescue; the component has degenerated.
class SingularCovarianceError : public Error {
 public:
  using Error::Error;
};

/// A marginal standard deviation fell below the representable floor.
class DegenerateMarginalError : public Error {
 public:
  using Error::Error;
};

/// Rank transform of a constant column is undefined.
class ConstantColumnError : public Error {
 public:
  using Error::Error;
};

/// The EM-based MFA path requires more observations than dimensions; raised
/// up front for n <= p and when a weighted scatter matrix is singular.
class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t col)
      : Error(what + " (row " + std::to_string(row) + ", column " + std::to_string(col) + ")"),
        row_(row),
        col_(col) {}
  std::size_t row() const { return row_; }
  std::size_t col() const { return col_; }

 private:
  std::size_t row_, col_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mixfit

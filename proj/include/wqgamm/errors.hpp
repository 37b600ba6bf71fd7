#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wqgamm {

/// Pipeline stage that raised an error. Every message is prefixed with it.
enum class Stage { ingest, fetch, basis, gam, arma, gamm, report, config };

std::string_view stage_name(Stage stage) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Stage stage, const std::string& message);
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

// Data problems (exit code 2 from the CLI).
class DataError : public Error {
 public:
  using Error::Error;
};
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};
class EmptyInputError : public DataError {
 public:
  using DataError::DataError;
};
class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};
class RankError : public DataError {
 public:
  using DataError::DataError;
};
class DegenerateColumnError : public DataError {
 public:
  using DataError::DataError;
};

// Numerical / contract problems.
class SingularFitError : public Error {
 public:
  using Error::Error;
};
class ExtrapolationError : public Error {
 public:
  using Error::Error;
};
class DomainError : public Error {
 public:
  using Error::Error;
};
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Network client problems.
class TransportError : public Error {
 public:
  using Error::Error;
};
class NotFoundError : public Error {
 public:
  using Error::Error;
};
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace wqgamm

#pragma once

#include <stdexcept>
#include <string>

namespace latent_gauge {

// Base class for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-contract input (bad file, bad range, duplicate key).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Statistic undefined on the given data (constant series, zero variance, ...).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Design matrix or first stage not of full column rank.
class RankDeficientError : public Error {
 public:
  using Error::Error;
};

// Model response could not be turned into scores.
class ParseError : public Error {
 public:
  enum class Kind { no_json, missing_key, out_of_range, not_numeric };
  ParseError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace latent_gauge

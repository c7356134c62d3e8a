#pragma once

#include <stdexcept>
#include <string>

namespace genselect {

// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TokenBudgetExceeded : public Error {
 public:
  TokenBudgetExceeded(std::size_t estimate, std::size_t budget)
      : Error("prompt needs ~" + std::to_string(estimate) +
              " tokens but only " + std::to_string(budget) +
              " are available"),
        estimate_(estimate),
        budget_(budget) {}

  std::size_t estimate() const noexcept { return estimate_; }
  std::size_t budget() const noexcept { return budget_; }

 private:
  std::size_t estimate_;
  std::size_t budget_;
};

class InvalidGroup : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class InvalidRequest : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

// Transport kept failing after the retry budget was spent.
class BackendUnavailable : public BackendError {
 public:
  using BackendError::BackendError;
};

// The endpoint rejected the prompt as too large for its context window.
class ContextOverflow : public BackendError {
 public:
  using BackendError::BackendError;
};

class MissingFixture : public BackendError {
 public:
  explicit MissingFixture(const std::string& key)
      : BackendError("no replay fixture for request " + key), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class UnparseableJudgment : public Error {
 public:
  using Error::Error;
};

class AllAnswersAbsent : public Error {
 public:
  AllAnswersAbsent() : Error("no candidate has an extractable answer") {}
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class DuplicateId : public DatasetError {
 public:
  DuplicateId(const std::string& id, std::size_t first_line,
              std::size_t second_line)
      : DatasetError("duplicate problem_id '" + id + "' on lines " +
                     std::to_string(first_line) + " and " +
                     std::to_string(second_line)),
        first_line_(first_line),
        second_line_(second_line) {}

  std::size_t first_line() const noexcept { return first_line_; }
  std::size_t second_line() const noexcept { return second_line_; }

 private:
  std::size_t first_line_;
  std::size_t second_line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A selector claimed a correct answer on a problem where no candidate was
// correct. Raised by the metrics reducer.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace genselect

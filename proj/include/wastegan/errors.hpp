#pragma once

#include <stdexcept>
#include <string>

namespace wastegan {

// Exit codes used by the command-line front end.
inline constexpr int kExitMissingInput = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitInvariant = 4;

class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }
  virtual int exit_code() const { return kExitInvariant; }

 private:
  std::string kind_;
};

// Invalid hyperparameters or configuration files.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
  int exit_code() const override { return kExitValidation; }
};

// A caller violated a documented precondition.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract", what) {}
  int exit_code() const override { return kExitValidation; }
};

// Tensor shapes do not conform.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension", what) {}
  int exit_code() const override { return kExitValidation; }
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
  int exit_code() const override { return kExitMissingInput; }
};

// A loss became non-finite during training.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(long step, const std::string& term)
      : Error("diverged", "non-finite " + term + " at step " + std::to_string(step)),
        step_(step),
        term_(term) {}
  long step() const { return step_; }
  const std::string& term() const { return term_; }

 private:
  long step_;
  std::string term_;
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error("invariant", what) {}
};

}  // namespace wastegan

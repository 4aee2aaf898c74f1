#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace eegnn {

/// Operand shapes do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed user input: bad graph arrays, bad JSON, bad configuration.
/// `field()` names the offending field when one is known.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& message, std::string field = {})
      : std::invalid_argument(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Several input problems reported together, e.g. every invalid key of a
/// configuration file.
class ValidationError : public InputError {
 public:
  explicit ValidationError(std::vector<std::string> problems)
      : InputError(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& problems) {
    std::string out = std::to_string(problems.size()) + " invalid setting(s)";
    for (const auto& p : problems) out += "\n  " + p;
    return out;
  }

  std::vector<std::string> problems_;
};

/// An iterative solver hit its iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A node with no neighbours reached an operation that needs degree >= 1.
class IsolatedNodeError : public std::domain_error {
 public:
  explicit IsolatedNodeError(std::size_t node)
      : std::domain_error("node " + std::to_string(node) +
                          " is isolated (degree 0); drop isolated nodes first"),
        node_(node) {}

  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(int epoch)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch)),
        epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace eegnn

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sgsl {

// Programming errors: a caller broke a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid user-facing configuration or corpus shape.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyDocument : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SGSL_EXPECT(cond, msg)                                       \
  do {                                                               \
    if (!(cond)) throw ::sgsl::ContractViolation(std::string(msg)); \
  } while (0)

}  // namespace sgsl

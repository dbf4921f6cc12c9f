#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace spsel {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

// Degenerate inputs for which a quantity is undefined (zero bandwidth, constant series).
class DegenerateInputError : public InputError {
 public:
  using InputError::InputError;
};

class DefinitenessError : public Error {
 public:
  DefinitenessError(const std::string& what, std::size_t pivot)
      : Error(what + " (failing pivot " + std::to_string(pivot) + ")"), pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

class SpectrumError : public Error {
 public:
  SpectrumError(std::size_t requested, std::size_t available)
      : Error("spectral target needs " + std::to_string(requested) +
              " non-negative eigenvalues but only " + std::to_string(available) +
              " are available"),
        requested_(requested),
        available_(available) {}
  std::size_t requested() const noexcept { return requested_; }
  std::size_t available() const noexcept { return available_; }

 private:
  std::size_t requested_;
  std::size_t available_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : Error(what + " at iteration/step " + std::to_string(iteration)), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

class ConstraintError : public Error {
 public:
  explicit ConstraintError(std::vector<std::string> failures)
      : Error(join(failures)), failures_(std::move(failures)) {}
  const std::vector<std::string>& failures() const noexcept { return failures_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out = "constraint violated:";
    for (const auto& item : items) out += "\n  - " + item;
    return out;
  }
  std::vector<std::string> failures_;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class FitError : public Error {
 public:
  FitError(const std::string& what, std::array<double, 4> best)
      : Error(what), best_(best) {}
  const std::array<double, 4>& best_params() const noexcept { return best_; }

 private:
  std::array<double, 4> best_;
};

class JoinError : public Error {
 public:
  explicit JoinError(std::vector<std::string> unmatched)
      : Error(describe(unmatched)), unmatched_(std::move(unmatched)) {}
  const std::vector<std::string>& unmatched() const noexcept { return unmatched_; }

 private:
  static std::string describe(const std::vector<std::string>& ids) {
    std::string out = "unmatched image_id(s):";
    for (const auto& id : ids) out += " " + id;
    return out;
  }
  std::vector<std::string> unmatched_;
};

}  // namespace spsel

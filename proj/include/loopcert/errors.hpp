#pragma once

#include <stdexcept>
#include <string>

namespace loopcert {

// Base for every error raised by the library. Callers that only need to
// distinguish "bad input" from "numerics said no" can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// A state matrix with spectral radius >= 1 - 1e-9 was handed to an
// operation that needs absolutely summable impulse responses.
class NotSchurStable : public Error {
 public:
  explicit NotSchurStable(double rho)
      : Error("matrix is not Schur stable (spectral radius " + std::to_string(rho) + ")"),
        spectral_radius_(rho) {}
  double spectral_radius() const { return spectral_radius_; }

 private:
  double spectral_radius_;
};

class OnKink : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace loopcert

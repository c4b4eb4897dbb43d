#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gridlearn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structural problem with a grid (bad impedance, duplicate bus, non-tree where a tree is required).
class InvalidGrid : public Error {
 public:
  using Error::Error;
};

class UnknownBus : public Error {
 public:
  explicit UnknownBus(const std::string& id) : Error("unknown bus '" + id + "'"), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations, double mismatch)
      : Error(what), iterations_(iterations), mismatch_(mismatch) {}
  int iterations() const { return iterations_; }
  double final_mismatch() const { return mismatch_; }

 private:
  int iterations_;
  double mismatch_;
};

class SingularJacobian : public Error {
 public:
  using Error::Error;
};

/// Raised when estimation code reads a bus that the sample mask hides.
class MaskError : public Error {
 public:
  using Error::Error;
};

class IllConditioned : public Error {
 public:
  IllConditioned(const std::string& bus, double determinant)
      : Error("ill-conditioned injection moments at " + bus), bus_(bus), determinant_(determinant) {}
  const std::string& bus() const { return bus_; }
  double determinant() const { return determinant_; }

 private:
  std::string bus_;
  double determinant_;
};

class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

class ReplayError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  RankDeficient(std::size_t rank, std::size_t unknowns)
      : Error("underdetermined hidden-state system: rank " + std::to_string(rank) + " < " +
              std::to_string(unknowns) + " unknowns"),
        rank_(rank),
        unknowns_(unknowns) {}
  std::size_t rank() const { return rank_; }
  std::size_t unknowns() const { return unknowns_; }

 private:
  std::size_t rank_;
  std::size_t unknowns_;
};

}  // namespace gridlearn

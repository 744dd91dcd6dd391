#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace subrigid {

/// Two adjacent nodes share a position, so the bearing r_ij is undefined.
class CoincidentNodes : public std::invalid_argument {
 public:
  CoincidentNodes(std::size_t i, std::size_t j)
      : std::invalid_argument("coincident adjacent nodes " + std::to_string(i) + " and " +
                              std::to_string(j)),
        first(i),
        second(j) {}
  std::size_t first;
  std::size_t second;
};

/// The rigidity-eigenvalue test needs n >= d + 1 nodes.
class FrameworkTooSmall : public std::invalid_argument {
 public:
  FrameworkTooSmall(std::size_t n, std::size_t d)
      : std::invalid_argument("framework too small for lambda_{f+1} test: n=" + std::to_string(n) +
                              ", d=" + std::to_string(d)) {}
};

/// A subframework (or the whole framework) stopped being infinitesimally rigid.
class RigidityLost : public std::runtime_error {
 public:
  RigidityLost(std::size_t center, double rho)
      : std::runtime_error("rigidity lost at subframework " + std::to_string(center) +
                           " (rho=" + std::to_string(rho) + ")"),
        center(center),
        rho(rho) {}
  std::size_t center;
  double rho;
};

/// Message routing broke an invariant of the exchange protocol.
class ProtocolViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RejectionBudgetExceeded : public std::runtime_error {
 public:
  explicit RejectionBudgetExceeded(std::size_t attempts)
      : std::runtime_error("no acceptable scenario after " + std::to_string(attempts) +
                           " draws") {}
};

}  // namespace subrigid

#ifndef RDLAB_ERROR_HPP
#define RDLAB_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rdlab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonPositiveDefinite : public Error {
 public:
  NonPositiveDefinite(std::size_t node, double lambda_min)
      : Error("metric not positive definite at node " + std::to_string(node) +
              " (lambda_min=" + std::to_string(lambda_min) + ")"),
        node_(node),
        lambda_min_(lambda_min) {}
  std::size_t node() const { return node_; }
  double lambda_min() const { return lambda_min_; }

 private:
  std::size_t node_;
  double lambda_min_;
};

class BallTooLarge : public Error {
 public:
  explicit BallTooLarge(double r) : Error("ball radius " + std::to_string(r) + " does not fit the torus") {}
};

class DegenerateParameters : public Error {
 public:
  using Error::Error;
};

class StepFailure : public Error {
 public:
  using Error::Error;
};

class BlowUpGuard : public Error {
 public:
  BlowUpGuard(double a_seen, double abort_a)
      : Error("L-infinity guard tripped: a=" + std::to_string(a_seen) + " > " + std::to_string(abort_a)),
        a_seen_(a_seen) {}
  double a_seen() const { return a_seen_; }

 private:
  double a_seen_;
};

class SingularJacobian : public Error {
 public:
  SingularJacobian(std::size_t node, double time)
      : Error("non-positive Jacobian determinant at tracking node " + std::to_string(node) + ", t=" +
              std::to_string(time)),
        node_(node),
        time_(time) {}
  std::size_t node() const { return node_; }
  double time() const { return time_; }

 private:
  std::size_t node_;
  double time_;
};

class SearchFailed : public Error {
 public:
  SearchFailed(double attained, double bound)
      : Error("good-slice search failed: minimum " + std::to_string(attained) + " > " + std::to_string(bound)),
        attained_(attained) {}
  double attained() const { return attained_; }

 private:
  double attained_;
};

class NoCurveFound : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& why) : Error("config error [" + key + "]: " + why), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class MissingArtifacts : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace rdlab

#endif  // RDLAB_ERROR_HPP

#pragma once

#include <stdexcept>
#include <string>

namespace fvrm {

/// Base class for all domain errors raised by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// All velocities coincide; no projection of positive dimension exists.
class DegenerateSet : public Error {
public:
  using Error::Error;
};

/// A queried point lies outside the convex hull of the scaled velocities.
class OutsideHull : public Error {
public:
  using Error::Error;
};

/// A density was requested at a point outside the (open) support.
class OutsideSupport : public Error {
public:
  using Error::Error;
};

/// A face density was requested off the relative interior of the face.
class OutsideFace : public Error {
public:
  using Error::Error;
};

/// Operation requires affinely independent velocities.
class NotMinimal : public Error {
public:
  using Error::Error;
};

/// Reduction requested for a motion whose state space already fills R^D.
class AlreadyFullDim : public Error {
public:
  using Error::Error;
};

/// A density was requested for a waiting-time law with atoms.
class AtomicLaw : public Error {
public:
  using Error::Error;
};

/// No finite envelope rate is available on the requested interval.
class UnboundedRate : public Error {
public:
  using Error::Error;
};

/// A count vector is incompatible with the terminal velocity.
class InconsistentCounts : public Error {
public:
  using Error::Error;
};

/// A finite-difference stencil would reach outside the smooth region.
class BoundaryTooClose : public Error {
public:
  using Error::Error;
};

/// The kernel violates the constant-exit-probability condition on a row.
class ConditionViolated : public Error {
public:
  ConditionViolated(const std::string& what, int row) : Error(what), offending_row(row) {}
  int offending_row;
};

/// Configuration rejected; `field` names the offending entry.
class ConfigError : public Error {
public:
  ConfigError(const std::string& field_path, const std::string& message)
      : Error(field_path + ": " + message), field(field_path) {}
  std::string field;
};

} // namespace fvrm

#pragma once

#include <stdexcept>
#include <string>

namespace corrnet {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Mismatched kinds, dimensions, or off-manifold inputs.
struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what) : Error(what) {}
};

/// GL(3) element with |det| below the invertibility floor.
struct SingularGroupElement : Error {
  explicit SingularGroupElement(const std::string& what) : Error(what) {}
};

/// Argument outside the principal-logarithm domain (eigenvalue on the
/// closed negative real axis, or not in the identity component).
struct LogBranchError : Error {
  explicit LogBranchError(const std::string& what) : Error(what) {}
};

/// Pushforward of a sampled function that is not band-limited on a known basis.
struct UnsupportedResample : Error {
  explicit UnsupportedResample(const std::string& what) : Error(what) {}
};

/// Two-sample statistics invoked with a group of size < 2, or no permutations.
struct InsufficientData : Error {
  explicit InsufficientData(const std::string& what) : Error(what) {}
};

/// Non-finite gradient encountered during an optimizer step.
struct NonFiniteGradient : Error {
  explicit NonFiniteGradient(const std::string& what) : Error(what) {}
};

/// Bad configuration file or command-line usage (CLI exit code 2).
struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(what) {}
};

/// Filesystem failure (CLI exit code 3).
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace corrnet

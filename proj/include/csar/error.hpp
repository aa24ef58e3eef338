#pragma once

#include <stdexcept>
#include <string>

namespace csar {

/// Invalid argument or configuration value.
class ParameterError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Input for which the requested quantity does not exist (constant frame
/// for Otsu, coincident points for a rigid fit, zero-length motion angle).
class DegenerateInputError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Bad or unreadable external input: files, directories, JSON documents.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Failure while processing otherwise valid input.
class ProcessingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace csar

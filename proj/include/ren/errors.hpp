#pragma once

#include <stdexcept>
#include <string>

namespace ren {

// Shape or argument contract violated by the caller.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced in a forward or backward pass, or a diverging update.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file, manifest, config or unreadable input.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data that cannot be processed, e.g. an empty foreground mask or a
// point behind the camera.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Graph misuse, e.g. a second backward pass over a consumed graph.
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace ren

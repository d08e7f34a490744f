#pragma once

#include <stdexcept>
#include <string>

namespace catwalk {

// Base of every error raised by the library. Each subclass names one failure
// category so callers (and the CLI) can react per category.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error { using Error::Error; };
struct UnsupportedFormat : Error { using Error::Error; };
struct ManifestError : Error { using Error::Error; };
struct InsufficientFrames : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct FitError : Error { using Error::Error; };
struct InvalidInput : Error { using Error::Error; };
struct InvalidArgument : Error { using Error::Error; };
struct EmptySetError : Error { using Error::Error; };
struct MissingModel : Error { using Error::Error; };
struct LeakageError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace catwalk

#pragma once

#include <stdexcept>
#include <string>

namespace adasr {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct BoundsError : Error {
  using Error::Error;
};
struct DecodeError : Error {
  using Error::Error;
};
struct VersionError : Error {
  using Error::Error;
};

}  // namespace adasr

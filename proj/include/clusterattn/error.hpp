#pragma once

#include <stdexcept>
#include <string>

namespace clusterattn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IndexOutOfRange : Error {
  using Error::Error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};

struct InvalidPermutation : Error {
  using Error::Error;
};

struct InvalidConfig : Error {
  using Error::Error;
};

struct LabelOutOfRange : Error {
  using Error::Error;
};

struct NonFiniteInput : Error {
  using Error::Error;
};

struct InvalidAlpha : Error {
  using Error::Error;
};

struct DegenerateAttention : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct EmptyInput : Error {
  using Error::Error;
};

}  // namespace clusterattn

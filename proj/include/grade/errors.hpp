#pragma once

#include <stdexcept>
#include <string>

namespace grade {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// dynamics
class BadStep : public Error {
  public:
    using Error::Error;
};
class NonFiniteState : public Error {
  public:
    using Error::Error;
};
class GridMismatch : public Error {
  public:
    using Error::Error;
};

// smoother
class SingularLocalDesign : public Error {
  public:
    using Error::Error;
};
class AllSingular : public Error {
  public:
    using Error::Error;
};

// basis / design
class QuadTooCoarse : public Error {
  public:
    using Error::Error;
};

// grade-core
class TargetUnreachable : public Error {
  public:
    using Error::Error;
};
class DimensionMismatch : public Error {
  public:
    using Error::Error;
};
class InsufficientData : public Error {
  public:
    using Error::Error;
};

// io / cli
class ConfigError : public Error {
  public:
    using Error::Error;
};
class IoError : public Error {
  public:
    using Error::Error;
};

}  // namespace grade

#pragma once

#include <stdexcept>
#include <string>

namespace nowcast {

// Base class for every error the library raises on purpose.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InputFormatError : public Error { public: using Error::Error; };
class DuplicateDateError : public Error { public: using Error::Error; };
class NonPositiveBaseError : public Error { public: using Error::Error; };
class TargetGapError : public Error { public: using Error::Error; };
class DegenerateColumnError : public Error { public: using Error::Error; };
class DimensionError : public Error { public: using Error::Error; };
class DegenerateRegressorError : public Error { public: using Error::Error; };
class NumericInputError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class EmptyModelError : public Error { public: using Error::Error; };
class NumericalStabilityError : public Error { public: using Error::Error; };
class TargetMissingError : public Error { public: using Error::Error; };
class AlignmentError : public Error { public: using Error::Error; };
class DegenerateBaselineError : public Error { public: using Error::Error; };
class DegenerateDifferentialError : public Error { public: using Error::Error; };
class CollinearityError : public Error { public: using Error::Error; };
class OptimizationFailedError : public Error { public: using Error::Error; };

} // namespace nowcast

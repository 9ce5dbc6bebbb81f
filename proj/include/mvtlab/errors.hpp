#pragma once

#include <stdexcept>
#include <string>

namespace mvtlab {

/// Base class of every error raised by the library. `what()` carries a
/// human-readable message; the dynamic type names the failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* name() const noexcept { return "Error"; }
};

#define MVTLAB_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                      \
   public:                                                         \
    using Error::Error;                                            \
    const char* name() const noexcept override { return #Name; }   \
  }

// scenario
MVTLAB_DEFINE_ERROR(MissingParameter);
MVTLAB_DEFINE_ERROR(InvalidParameter);
MVTLAB_DEFINE_ERROR(InvalidProbability);
MVTLAB_DEFINE_ERROR(ZeroLoadingInStructuralReflective);
MVTLAB_DEFINE_ERROR(IndexOutOfRange);

// dgp_engine
MVTLAB_DEFINE_ERROR(ContinuousScenarioNotEnumerable);
MVTLAB_DEFINE_ERROR(WeightLengthMismatch);
MVTLAB_DEFINE_ERROR(EmptyCategory);

// estimation
MVTLAB_DEFINE_ERROR(RankDeficient);
MVTLAB_DEFINE_ERROR(InsufficientRows);
MVTLAB_DEFINE_ERROR(PositivityViolation);
MVTLAB_DEFINE_ERROR(TooFewReplicates);

// mvt_verifier
MVTLAB_DEFINE_ERROR(MissingPotentialOutcomes);
MVTLAB_DEFINE_ERROR(InapplicableAugmentation);

// psychometrics
MVTLAB_DEFINE_ERROR(NonPSDInput);
MVTLAB_DEFINE_ERROR(DimensionTooSmall);
MVTLAB_DEFINE_ERROR(HeywoodCase);
MVTLAB_DEFINE_ERROR(NegativeUniqueness);
MVTLAB_DEFINE_ERROR(TooFewIndicators);

// longitudinal
MVTLAB_DEFINE_ERROR(NonlinearParams);

// cli_io
MVTLAB_DEFINE_ERROR(ParseError);
MVTLAB_DEFINE_ERROR(UnknownExperimentKind);
MVTLAB_DEFINE_ERROR(MissingSeed);
MVTLAB_DEFINE_ERROR(MissingColumn);
MVTLAB_DEFINE_ERROR(NonNumericCell);
MVTLAB_DEFINE_ERROR(EmptyFile);

#undef MVTLAB_DEFINE_ERROR

}  // namespace mvtlab

#pragma once

#include <stdexcept>
#include <string>

namespace hinfdae {

// Base class for all failures raised by this library. Callers that only
// want to distinguish "bad input" from "numerical breakdown" can catch the
// two intermediate bases below.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Precondition violations: wrong shapes, invalid parameters, unusable data.
struct InvalidInput : Error {
  using Error::Error;
};

// Numerical failures: an algorithm ran but could not produce a trustworthy
// result.
struct NumericalFailure : Error {
  using Error::Error;
};

struct DimensionMismatch : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct SingularPencil : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct EigFailure : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct UnstableSystem : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct BracketFailure : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct NotStabilizing : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct NoStabilizingSolution : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct SchurFailure : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct SaddleSingular : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct IllConditioned : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct NoConvergence : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct RankRunaway : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct InfeasibleAtGammaMax : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct TieAtCut : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct EmptyModel : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct SpectralRadiusViolation : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct NearSingularZ : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct BoundVacuous : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct RankDeficientJ : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct SteadyStateDivergence : NumericalFailure {
  using NumericalFailure::NumericalFailure;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace hinfdae

#pragma once

#include <stdexcept>
#include <string>

namespace gridmp {

enum class ErrorCode {
  Parse,
  Validation,
  Dimension,
  Disconnected,
  LastGenerator,
  AlreadyDisabled,
  ZeroReactance,
  RankDeficient,
  NegativeResistance,
  SingularJacobian,
  NotConverged,
  ZeroLabelCost,
  TooFewSamples,
  Shape,
  NonFiniteLoss,
  KTooLarge,
  ConfigMismatch,
  EmptyInput,
  Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

template <ErrorCode C>
class CodedError : public Error {
 public:
  explicit CodedError(const std::string& what) : Error(C, what) {}
};

using ParseError = CodedError<ErrorCode::Parse>;
using ValidationError = CodedError<ErrorCode::Validation>;
using DimensionError = CodedError<ErrorCode::Dimension>;
using DisconnectedError = CodedError<ErrorCode::Disconnected>;
using LastGeneratorError = CodedError<ErrorCode::LastGenerator>;
using AlreadyDisabledError = CodedError<ErrorCode::AlreadyDisabled>;
using ZeroReactanceError = CodedError<ErrorCode::ZeroReactance>;
using RankDeficientError = CodedError<ErrorCode::RankDeficient>;
using NegativeResistanceError = CodedError<ErrorCode::NegativeResistance>;
using SingularJacobianError = CodedError<ErrorCode::SingularJacobian>;
using NotConvergedError = CodedError<ErrorCode::NotConverged>;
using ZeroLabelCostError = CodedError<ErrorCode::ZeroLabelCost>;
using TooFewSamplesError = CodedError<ErrorCode::TooFewSamples>;
using ShapeError = CodedError<ErrorCode::Shape>;
using NonFiniteLossError = CodedError<ErrorCode::NonFiniteLoss>;
using KTooLargeError = CodedError<ErrorCode::KTooLarge>;
using ConfigMismatchError = CodedError<ErrorCode::ConfigMismatch>;
using EmptyInputError = CodedError<ErrorCode::EmptyInput>;
using IoError = CodedError<ErrorCode::Io>;

}  // namespace gridmp

#include "gridmp/errors.hpp"

namespace gridmp {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Validation: return "ValidationError";
    case ErrorCode::Dimension: return "DimensionError";
    case ErrorCode::Disconnected: return "DisconnectedError";
    case ErrorCode::LastGenerator: return "LastGeneratorError";
    case ErrorCode::AlreadyDisabled: return "AlreadyDisabledError";
    case ErrorCode::ZeroReactance: return "ZeroReactanceError";
    case ErrorCode::RankDeficient: return "RankDeficientError";
    case ErrorCode::NegativeResistance: return "NegativeResistanceError";
    case ErrorCode::SingularJacobian: return "SingularJacobianError";
    case ErrorCode::NotConverged: return "NotConvergedError";
    case ErrorCode::ZeroLabelCost: return "ZeroLabelCostError";
    case ErrorCode::TooFewSamples: return "TooFewSamplesError";
    case ErrorCode::Shape: return "ShapeError";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLossError";
    case ErrorCode::KTooLarge: return "KTooLargeError";
    case ErrorCode::ConfigMismatch: return "ConfigMismatchError";
    case ErrorCode::EmptyInput: return "EmptyInputError";
    case ErrorCode::Io: return "IoError";
  }
  return "Error";
}

}  // namespace gridmp

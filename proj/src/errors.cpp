#include "efc/errors.hpp"

namespace efc {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Io: return "Io";
    case Errc::MalformedFile: return "MalformedFile";
    case Errc::EmptyFile: return "EmptyFile";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonFinite: return "NonFinite";
    case Errc::SingularProjection: return "SingularProjection";
    case Errc::NumericalFailure: return "NumericalFailure";
    case Errc::FoldTooSmall: return "FoldTooSmall";
    case Errc::AllDiverged: return "AllDiverged";
    case Errc::DomainExceeded: return "DomainExceeded";
    case Errc::SvdFailure: return "SvdFailure";
    case Errc::DegenerateDesign: return "DegenerateDesign";
  }
  return "Unknown";
}

}  // namespace efc

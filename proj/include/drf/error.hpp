#pragma once

#include <stdexcept>
#include <string>

namespace drf {

// Base of every data/model error raised by the library. The CLI maps these
// to exit status 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DRF_DEFINE_ERROR(Name)            \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

DRF_DEFINE_ERROR(SchemaError);
DRF_DEFINE_ERROR(ParseError);
DRF_DEFINE_ERROR(EmptyDatasetError);
DRF_DEFINE_ERROR(StratificationError);
DRF_DEFINE_ERROR(DomainError);
DRF_DEFINE_ERROR(EncodingError);
DRF_DEFINE_ERROR(LookupError);
DRF_DEFINE_ERROR(ConfigError);
DRF_DEFINE_ERROR(FitError);
DRF_DEFINE_ERROR(MetricError);
DRF_DEFINE_ERROR(SpecError);
DRF_DEFINE_ERROR(IoError);

// Model file failures are kept distinct so callers can tell a damaged file
// from one written by another format version.
DRF_DEFINE_ERROR(CorruptModelError);
DRF_DEFINE_ERROR(VersionMismatchError);
DRF_DEFINE_ERROR(TruncatedModelError);

#undef DRF_DEFINE_ERROR

}  // namespace drf

#pragma once

#include <stdexcept>
#include <string>

namespace catwm {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CATWM_DEFINE_ERROR(Name)                 \
  class Name : public Error {                    \
   public:                                       \
    explicit Name(const std::string& what)       \
        : Error(std::string(#Name ": ") + what) {} \
  }

CATWM_DEFINE_ERROR(OutOfRangeParam);
CATWM_DEFINE_ERROR(ShapeMismatch);
CATWM_DEFINE_ERROR(PayloadMismatch);
CATWM_DEFINE_ERROR(LengthMismatch);
CATWM_DEFINE_ERROR(DomainError);
CATWM_DEFINE_ERROR(NonFiniteLoss);
CATWM_DEFINE_ERROR(UnknownPrimitive);
CATWM_DEFINE_ERROR(ParseError);
CATWM_DEFINE_ERROR(ValidationError);
CATWM_DEFINE_ERROR(EmptyDataset);
CATWM_DEFINE_ERROR(UnreadableImage);
CATWM_DEFINE_ERROR(IOError);

#undef CATWM_DEFINE_ERROR

}  // namespace catwm

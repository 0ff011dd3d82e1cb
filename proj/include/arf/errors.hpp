#pragma once

#include <stdexcept>
#include <string>

namespace arf {

// Base of every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ARF_DEFINE_ERROR(Name)            \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

ARF_DEFINE_ERROR(ZeroVectorError);
ARF_DEFINE_ERROR(DimensionError);
ARF_DEFINE_ERROR(InvalidArgumentError);
ARF_DEFINE_ERROR(MissingCaptionError);
ARF_DEFINE_ERROR(CheckpointMismatchError);
ARF_DEFINE_ERROR(EmptySplitError);
ARF_DEFINE_ERROR(EmptyFinetuneSetError);
ARF_DEFINE_ERROR(BadMagicError);
ARF_DEFINE_ERROR(VersionUnsupportedError);
ARF_DEFINE_ERROR(RowCountMismatchError);
ARF_DEFINE_ERROR(MissingFieldError);
ARF_DEFINE_ERROR(HashMismatchError);
ARF_DEFINE_ERROR(ConfigError);
ARF_DEFINE_ERROR(IoError);

#undef ARF_DEFINE_ERROR

}  // namespace arf

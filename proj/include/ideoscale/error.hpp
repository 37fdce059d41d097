#pragma once

#include <stdexcept>
#include <string>

namespace ideo {

// Base for every error raised by the toolkit. kind() is the stable name
// used in CLI messages and HTTP error bodies.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define IDEO_DEFINE_ERROR(Name)                                        \
  class Name : public ::ideo::Error {                                  \
   public:                                                             \
    using ::ideo::Error::Error;                                        \
    const char* kind() const noexcept override { return #Name; }      \
  }

// Shared across modules.
IDEO_DEFINE_ERROR(EmptyResult);
IDEO_DEFINE_ERROR(ParseError);
IDEO_DEFINE_ERROR(ConfigError);
IDEO_DEFINE_ERROR(DimensionMismatch);
IDEO_DEFINE_ERROR(RankDeficient);

}  // namespace ideo

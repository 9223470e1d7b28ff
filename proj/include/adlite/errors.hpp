#pragma once

#include <stdexcept>
#include <string>

namespace adlite {

// Every error raised by the engine derives from Error and carries the
// process exit code the CLI reports for it.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, int exit_code)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kConfig = 2;
inline constexpr int kDataset = 3;
inline constexpr int kFormat = 4;
inline constexpr int kNumeric = 5;
inline constexpr int kIo = 6;
inline constexpr int kSplit = 7;
inline constexpr int kShape = 8;
inline constexpr int kLabel = 9;
inline constexpr int kState = 10;
}  // namespace exit_code

#define ADLITE_DEFINE_ERROR(Name, code)                                   \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(what, code) {}         \
  };

ADLITE_DEFINE_ERROR(ConfigError, exit_code::kConfig)
ADLITE_DEFINE_ERROR(DatasetError, exit_code::kDataset)
ADLITE_DEFINE_ERROR(FormatError, exit_code::kFormat)
ADLITE_DEFINE_ERROR(NumericError, exit_code::kNumeric)
ADLITE_DEFINE_ERROR(IoError, exit_code::kIo)
ADLITE_DEFINE_ERROR(SplitError, exit_code::kSplit)
ADLITE_DEFINE_ERROR(ShapeError, exit_code::kShape)
ADLITE_DEFINE_ERROR(LabelError, exit_code::kLabel)
ADLITE_DEFINE_ERROR(StateError, exit_code::kState)

#undef ADLITE_DEFINE_ERROR

}  // namespace adlite

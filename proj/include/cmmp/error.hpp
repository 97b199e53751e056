#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cmmp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// CSV row with the wrong field count or an unparsable number.
struct MalformedRow : Error {
  MalformedRow(std::size_t line_no, const std::string& msg)
      : Error("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
  std::size_t line;
};

// Field value outside its legal range (lon/lat bounds, si <= 0, sp < 0).
struct RangeError : Error {
  RangeError(std::size_t line_no, const std::string& msg)
      : Error("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
  std::size_t line;
};

struct InvalidCellSize : Error { using Error::Error; };
struct InvalidBounds : Error { using Error::Error; };
struct SampleOutOfBounds : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct InvalidGrid : Error { using Error::Error; };
struct NotScalar : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct CorruptCheckpoint : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct NonSquare : Error { using Error::Error; };
// Unreadable or structurally invalid data file (bad magic, truncation).
struct FormatError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace cmmp

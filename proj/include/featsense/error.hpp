#pragma once

#include <stdexcept>
#include <string>

namespace featsense {

enum class Errc {
  MalformedFile,
  DimensionMismatch,
  EmptyCloud,
  MalformedLine,
  NonMonotonicTimestamps,
  BadKernel,
  MapEmpty,
  Degenerate,
  TooFewPoints,
  DegenerateDirection,
  GeometryMismatch,
  StoreIo,
  NoOverlap,
  DegenerateGeometry,
  Io,
  Config,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace featsense

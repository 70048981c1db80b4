// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace shadowkit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape, rank or dimension contract violated by a caller.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Image file could not be read or has an unsupported layout.
class DecodeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Dataset directory is malformed (missing folder, orphan file, ...).
class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incompatible configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A metric was asked for over a region with no pixels.
class EmptyRegionError : public Error {
 public:
  using Error::Error;
};

/// Failure inside one stage of the inference pipeline.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what) : Error(stage + " stage: " + what), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch, int step)
      : Error(what), epoch_(epoch), step_(step) {}
  int epoch() const noexcept { return epoch_; }
  int step() const noexcept { return step_; }

 private:
  int epoch_;
  int step_;
};

}  // namespace shadowkit

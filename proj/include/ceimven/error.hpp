// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ceimven {

/// Base of every error raised by the library. The CLI maps the concrete
/// subclass onto an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or argument contract violated by the caller.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ValueError : public Error {
 public:
  using Error::Error;
};

/// Dataset content problems such as an undecodable image or an empty split.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or similar numeric breakdown during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Model artifact failures. Each failure mode has its own type so callers can
/// tell a stale artifact from a damaged one.
class ArtifactError : public IoError {
 public:
  using IoError::IoError;
};

class ArtifactVersionError : public ArtifactError {
 public:
  using ArtifactError::ArtifactError;
};

class ArtifactChecksumError : public ArtifactError {
 public:
  using ArtifactError::ArtifactError;
};

class ArtifactTruncatedError : public ArtifactError {
 public:
  using ArtifactError::ArtifactError;
};

/// Weight import found nothing usable or a tensor with the wrong shape.
class ImportError : public Error {
 public:
  using Error::Error;
};

}  // namespace ceimven

// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace oodkit {

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a scan carries no predicted segmentation: the pipeline
/// only scores scans for which a segmentation was generated.
struct NoSegmentationError : Error {
  using Error::Error;
};

/// Malformed or inconsistent on-disk data (headers, payload sizes, rows).
struct DataFormatError : Error {
  using Error::Error;
};

/// Training labels contain a single class.
struct SingleClassError : Error {
  using Error::Error;
};

/// A statistical estimator could not produce a usable result
/// (e.g. singular covariance at zero shrinkage).
struct EstimationError : Error {
  using Error::Error;
};

/// Invalid configuration or command usage.
struct UsageError : Error {
  using Error::Error;
};

}  // namespace oodkit

// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace drbfr {

// Error categories surfaced through the C API as status codes.
enum class ErrorKind {
  kArgument = 1,
  kDecode = 2,
  kFormat = 3,
  kData = 4,
  kDegradation = 5,
  kConfig = 6,
  kHashMismatch = 7,
  kIo = 8,
  kUsage = 9,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define DRBFR_DEFINE_ERROR(Name, Kind)                                     \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

DRBFR_DEFINE_ERROR(ArgumentError, kArgument)
DRBFR_DEFINE_ERROR(DecodeError, kDecode)
DRBFR_DEFINE_ERROR(FormatError, kFormat)
DRBFR_DEFINE_ERROR(DataError, kData)
DRBFR_DEFINE_ERROR(DegradationError, kDegradation)
DRBFR_DEFINE_ERROR(ConfigError, kConfig)
DRBFR_DEFINE_ERROR(HashMismatchError, kHashMismatch)
DRBFR_DEFINE_ERROR(IoError, kIo)
DRBFR_DEFINE_ERROR(UsageError, kUsage)

#undef DRBFR_DEFINE_ERROR

const char* error_kind_name(ErrorKind kind) noexcept;

}  // namespace drbfr

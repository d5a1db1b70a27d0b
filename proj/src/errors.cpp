// Copyright 2026 The drbfr Authors
// SPDX-License-Identifier: Apache-2.0

#include "errors.hpp"

namespace drbfr {

const char* error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kArgument: return "argument_error";
    case ErrorKind::kDecode: return "decode_error";
    case ErrorKind::kFormat: return "format_error";
    case ErrorKind::kData: return "data_error";
    case ErrorKind::kDegradation: return "degradation_error";
    case ErrorKind::kConfig: return "configuration_error";
    case ErrorKind::kHashMismatch: return "hash_mismatch";
    case ErrorKind::kIo: return "io_error";
    case ErrorKind::kUsage: return "usage_error";
  }
  return "unknown_error";
}

}  // namespace drbfr

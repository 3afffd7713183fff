#pragma once

#include <gtest/gtest.h>

#include "cdistill/error.hpp"
#include "numeric_support.hpp"

namespace cdistill::testing {

// Code of the cdistill::Error thrown by f; records a failure when none is.
template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no cdistill::Error thrown";
  return ErrorCode::IoFailure;
}

}  // namespace cdistill::testing

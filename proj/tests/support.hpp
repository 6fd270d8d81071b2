#pragma once

#include "doctest.h"
#include "hgx/error.hpp"

namespace hgx::testing {

// Kind of the hgx::Error thrown by fn; fails the test if nothing is thrown.
template <class F>
ErrorKind kind_of(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an hgx::Error");
  return ErrorKind::Io;
}

}  // namespace hgx::testing

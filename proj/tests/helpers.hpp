#pragma once

#include <functional>

#include <doctest.h>

#include "sepdiff/error.hpp"
#include "sepdiff/kernel.hpp"

namespace testing {

inline void expect_error(sepdiff::ErrorKind kind, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const sepdiff::Error& e) {
    CHECK_MESSAGE(e.kind() == kind, e.what());
    return;
  }
  FAIL("expected " << sepdiff::to_string(kind));
}

inline sepdiff::JumpKernel nn(int d = 1) { return sepdiff::JumpKernel::symmetric_nearest_neighbor(d); }

/// {(+2, 1/3), (-1, 2/3)}.
inline sepdiff::JumpKernel mean_zero() { return sepdiff::JumpKernel(1, {{{2}, 1.0 / 3.0}, {{-1}, 2.0 / 3.0}}); }

/// {(+1, 1)}.
inline sepdiff::JumpKernel totally_asymmetric() { return sepdiff::JumpKernel(1, {{{1}, 1.0}}); }

}  // namespace testing

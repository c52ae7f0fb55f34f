#pragma once

// Scalar type selection. The library is built twice: once with 32-bit reals
// (the default, used for training and inference) and once with
// YOTO_REAL_DOUBLE for finite-difference gradient verification. Each build
// lives in its own inline namespace so both can link into one binary.

#if defined(YOTO_REAL_DOUBLE)
#define YOTO_ABI f64
#else
#define YOTO_ABI f32
#endif

#define YOTO_BEGIN_NAMESPACE \
  namespace yoto {           \
  inline namespace YOTO_ABI {
#define YOTO_END_NAMESPACE \
  }                        \
  }

YOTO_BEGIN_NAMESPACE

#if defined(YOTO_REAL_DOUBLE)
using real = double;
#else
using real = float;
#endif

YOTO_END_NAMESPACE

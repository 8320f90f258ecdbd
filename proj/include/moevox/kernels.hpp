#pragma once

// Raw dense 3-D convolution kernels. Every kernel comes in a serial
// reference flavor and an OpenMP flavor that tile the same per-output-element
// body, so both produce bitwise-identical results at any thread count. All
// kernels accumulate (+=) into their destination; callers hand in
// zero-initialized buffers when plain assignment is wanted.

#include <cstdint>

#include "moevox/common.hpp"

namespace moevox::kernels {

enum class Backend { serial, openmp };

Backend backend();
void set_backend(Backend b);

// Output extent of a strided/padded/dilated convolution along one axis.
int conv_out_dim(int in, int k, int s, int p, int dil);
// Output extent of a transposed convolution along one axis (dilation 1).
int convt_out_dim(int in, int k, int s, int p);

struct Conv3dDims {
  int B, IC, OC;
  int K, S, P, DIL;
  int ID, IH, IW;
  int OD, OH, OW;
};

// Validates extents and derives output sizes.
Conv3dDims conv3d_dims(int B, int IC, int OC, int K, int S, int P, int DIL,
                       int ID, int IH, int IW);

// x: [B, IC, ID, IH, IW], w: [OC, IC, K, K, K], bias: [OC] or nullptr,
// y: [B, OC, OD, OH, OW].
void conv3d_forward_ref(const real* x, const real* w, const real* bias,
                        real* y, const Conv3dDims& d);
void conv3d_forward_omp(const real* x, const real* w, const real* bias,
                        real* y, const Conv3dDims& d);
void conv3d_forward(const real* x, const real* w, const real* bias, real* y,
                    const Conv3dDims& d);

// dy: [B, OC, OD, OH, OW] -> dx: [B, IC, ID, IH, IW].
void conv3d_dgrad_ref(const real* dy, const real* w, real* dx,
                      const Conv3dDims& d);
void conv3d_dgrad_omp(const real* dy, const real* w, real* dx,
                      const Conv3dDims& d);
void conv3d_dgrad(const real* dy, const real* w, real* dx,
                  const Conv3dDims& d);

// dy: [B, OC, OD, OH, OW], x: [B, IC, ID, IH, IW] -> dw: [OC, IC, K, K, K].
void conv3d_wgrad_ref(const real* dy, const real* x, real* dw,
                      const Conv3dDims& d);
void conv3d_wgrad_omp(const real* dy, const real* x, real* dw,
                      const Conv3dDims& d);
void conv3d_wgrad(const real* dy, const real* x, real* dw,
                  const Conv3dDims& d);

// dy: [B, C, spatial] -> db: [C]; used for conv bias grads.
void channel_grad_sum(const real* dy, int B, int C, int64_t spatial, real* db);

}  // namespace moevox::kernels

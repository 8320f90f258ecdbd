#include "moevox/kernels.hpp"

#include <stdexcept>
#include <string>

namespace moevox::kernels {

namespace {
Backend g_backend = Backend::openmp;
}

Backend backend() { return g_backend; }
void set_backend(Backend b) { g_backend = b; }

int conv_out_dim(int in, int k, int s, int p, int dil) {
  const int eff = (k - 1) * dil + 1;
  const int num = in + 2 * p - eff;
  if (num < 0)
    throw std::invalid_argument("conv kernel (effective " +
                                std::to_string(eff) +
                                ") larger than padded input " +
                                std::to_string(in + 2 * p));
  return num / s + 1;
}

int convt_out_dim(int in, int k, int s, int p) {
  const int out = (in - 1) * s - 2 * p + k;
  if (out < 1)
    throw std::invalid_argument("transposed conv output collapses to " +
                                std::to_string(out));
  return out;
}

Conv3dDims conv3d_dims(int B, int IC, int OC, int K, int S, int P, int DIL,
                       int ID, int IH, int IW) {
  if (B < 1 || IC < 1 || OC < 1 || K < 1 || ID < 1 || IH < 1 || IW < 1)
    throw std::invalid_argument("conv3d dims must be positive");
  if (S < 1 || DIL < 1)
    throw std::invalid_argument("conv3d stride and dilation must be >= 1");
  if (P < 0) throw std::invalid_argument("conv3d padding must be >= 0");
  Conv3dDims d;
  d.B = B; d.IC = IC; d.OC = OC;
  d.K = K; d.S = S; d.P = P; d.DIL = DIL;
  d.ID = ID; d.IH = IH; d.IW = IW;
  d.OD = conv_out_dim(ID, K, S, P, DIL);
  d.OH = conv_out_dim(IH, K, S, P, DIL);
  d.OW = conv_out_dim(IW, K, S, P, DIL);
  return d;
}

namespace {

// One (batch, out-channel) tile of the forward pass.
inline void forward_tile(int b, int oc, const real* x, const real* w,
                         const real* bias, real* y, const Conv3dDims& d) {
  const int64_t x_c = int64_t(d.ID) * d.IH * d.IW;
  const int64_t x_b = d.IC * x_c;
  const int64_t w_ic = int64_t(d.K) * d.K * d.K;
  const int64_t w_oc = d.IC * w_ic;
  const int64_t y_c = int64_t(d.OD) * d.OH * d.OW;
  const int64_t y_b = d.OC * y_c;
  const real* wb = w + oc * w_oc;
  real* yb = y + b * y_b + oc * y_c;
  const real bval = bias ? bias[oc] : real(0);
  for (int od = 0; od < d.OD; ++od)
    for (int oh = 0; oh < d.OH; ++oh)
      for (int ow = 0; ow < d.OW; ++ow) {
        real acc = bval;
        for (int ic = 0; ic < d.IC; ++ic) {
          const real* xc = x + b * x_b + ic * x_c;
          const real* wc = wb + ic * w_ic;
          for (int kz = 0; kz < d.K; ++kz) {
            const int iz = od * d.S - d.P + kz * d.DIL;
            if (iz < 0 || iz >= d.ID) continue;
            for (int ky = 0; ky < d.K; ++ky) {
              const int iy = oh * d.S - d.P + ky * d.DIL;
              if (iy < 0 || iy >= d.IH) continue;
              const real* xrow = xc + (int64_t(iz) * d.IH + iy) * d.IW;
              const real* wrow = wc + (int64_t(kz) * d.K + ky) * d.K;
              for (int kx = 0; kx < d.K; ++kx) {
                const int ix = ow * d.S - d.P + kx * d.DIL;
                if (ix < 0 || ix >= d.IW) continue;
                acc += xrow[ix] * wrow[kx];
              }
            }
          }
        }
        yb[(int64_t(od) * d.OH + oh) * d.OW + ow] += acc;
      }
}

// One (batch, in-channel) tile of the input-gradient pass. Gather form: each
// input element scans the weight taps that could have touched it.
inline void dgrad_tile(int b, int ic, const real* dy, const real* w, real* dx,
                       const Conv3dDims& d) {
  const int64_t x_c = int64_t(d.ID) * d.IH * d.IW;
  const int64_t x_b = d.IC * x_c;
  const int64_t w_ic = int64_t(d.K) * d.K * d.K;
  const int64_t w_oc = d.IC * w_ic;
  const int64_t y_c = int64_t(d.OD) * d.OH * d.OW;
  const int64_t y_b = d.OC * y_c;
  real* dxc = dx + b * x_b + ic * x_c;
  for (int iz = 0; iz < d.ID; ++iz)
    for (int iy = 0; iy < d.IH; ++iy)
      for (int ix = 0; ix < d.IW; ++ix) {
        real acc = 0;
        for (int oc = 0; oc < d.OC; ++oc) {
          const real* dyc = dy + b * y_b + oc * y_c;
          const real* wc = w + oc * w_oc + ic * w_ic;
          for (int kz = 0; kz < d.K; ++kz) {
            const int tz = iz + d.P - kz * d.DIL;
            if (tz < 0 || tz % d.S != 0) continue;
            const int od = tz / d.S;
            if (od >= d.OD) continue;
            for (int ky = 0; ky < d.K; ++ky) {
              const int ty = iy + d.P - ky * d.DIL;
              if (ty < 0 || ty % d.S != 0) continue;
              const int oh = ty / d.S;
              if (oh >= d.OH) continue;
              for (int kx = 0; kx < d.K; ++kx) {
                const int tx = ix + d.P - kx * d.DIL;
                if (tx < 0 || tx % d.S != 0) continue;
                const int ow = tx / d.S;
                if (ow >= d.OW) continue;
                acc += dyc[(int64_t(od) * d.OH + oh) * d.OW + ow] *
                       wc[(int64_t(kz) * d.K + ky) * d.K + kx];
              }
            }
          }
        }
        dxc[(int64_t(iz) * d.IH + iy) * d.IW + ix] += acc;
      }
}

// One (out-channel, in-channel) tile of the weight-gradient pass.
inline void wgrad_tile(int oc, int ic, const real* dy, const real* x, real* dw,
                       const Conv3dDims& d) {
  const int64_t x_c = int64_t(d.ID) * d.IH * d.IW;
  const int64_t x_b = d.IC * x_c;
  const int64_t w_ic = int64_t(d.K) * d.K * d.K;
  const int64_t w_oc = d.IC * w_ic;
  const int64_t y_c = int64_t(d.OD) * d.OH * d.OW;
  const int64_t y_b = d.OC * y_c;
  real* dwc = dw + oc * w_oc + ic * w_ic;
  for (int kz = 0; kz < d.K; ++kz)
    for (int ky = 0; ky < d.K; ++ky)
      for (int kx = 0; kx < d.K; ++kx) {
        real acc = 0;
        for (int b = 0; b < d.B; ++b) {
          const real* dyc = dy + b * y_b + oc * y_c;
          const real* xc = x + b * x_b + ic * x_c;
          for (int od = 0; od < d.OD; ++od) {
            const int iz = od * d.S - d.P + kz * d.DIL;
            if (iz < 0 || iz >= d.ID) continue;
            for (int oh = 0; oh < d.OH; ++oh) {
              const int iy = oh * d.S - d.P + ky * d.DIL;
              if (iy < 0 || iy >= d.IH) continue;
              const real* dyrow = dyc + (int64_t(od) * d.OH + oh) * d.OW;
              const real* xrow = xc + (int64_t(iz) * d.IH + iy) * d.IW;
              for (int ow = 0; ow < d.OW; ++ow) {
                const int ix = ow * d.S - d.P + kx * d.DIL;
                if (ix < 0 || ix >= d.IW) continue;
                acc += dyrow[ow] * xrow[ix];
              }
            }
          }
        }
        dwc[(int64_t(kz) * d.K + ky) * d.K + kx] += acc;
      }
}

}  // namespace

void conv3d_forward_ref(const real* x, const real* w, const real* bias,
                        real* y, const Conv3dDims& d) {
  for (int b = 0; b < d.B; ++b)
    for (int oc = 0; oc < d.OC; ++oc) forward_tile(b, oc, x, w, bias, y, d);
}

void conv3d_forward_omp(const real* x, const real* w, const real* bias,
                        real* y, const Conv3dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < d.B; ++b)
    for (int oc = 0; oc < d.OC; ++oc) forward_tile(b, oc, x, w, bias, y, d);
}

void conv3d_forward(const real* x, const real* w, const real* bias, real* y,
                    const Conv3dDims& d) {
  if (g_backend == Backend::serial)
    conv3d_forward_ref(x, w, bias, y, d);
  else
    conv3d_forward_omp(x, w, bias, y, d);
}

void conv3d_dgrad_ref(const real* dy, const real* w, real* dx,
                      const Conv3dDims& d) {
  for (int b = 0; b < d.B; ++b)
    for (int ic = 0; ic < d.IC; ++ic) dgrad_tile(b, ic, dy, w, dx, d);
}

void conv3d_dgrad_omp(const real* dy, const real* w, real* dx,
                      const Conv3dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < d.B; ++b)
    for (int ic = 0; ic < d.IC; ++ic) dgrad_tile(b, ic, dy, w, dx, d);
}

void conv3d_dgrad(const real* dy, const real* w, real* dx,
                  const Conv3dDims& d) {
  if (g_backend == Backend::serial)
    conv3d_dgrad_ref(dy, w, dx, d);
  else
    conv3d_dgrad_omp(dy, w, dx, d);
}

void conv3d_wgrad_ref(const real* dy, const real* x, real* dw,
                      const Conv3dDims& d) {
  for (int oc = 0; oc < d.OC; ++oc)
    for (int ic = 0; ic < d.IC; ++ic) wgrad_tile(oc, ic, dy, x, dw, d);
}

void conv3d_wgrad_omp(const real* dy, const real* x, real* dw,
                      const Conv3dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < d.OC; ++oc)
    for (int ic = 0; ic < d.IC; ++ic) wgrad_tile(oc, ic, dy, x, dw, d);
}

void conv3d_wgrad(const real* dy, const real* x, real* dw,
                  const Conv3dDims& d) {
  if (g_backend == Backend::serial)
    conv3d_wgrad_ref(dy, x, dw, d);
  else
    conv3d_wgrad_omp(dy, x, dw, d);
}

void channel_grad_sum(const real* dy, int B, int C, int64_t spatial,
                      real* db) {
  for (int c = 0; c < C; ++c) {
    real acc = 0;
    for (int b = 0; b < B; ++b) {
      const real* base = dy + (int64_t(b) * C + c) * spatial;
      for (int64_t i = 0; i < spatial; ++i) acc += base[i];
    }
    db[c] += acc;
  }
}

}  // namespace moevox::kernels

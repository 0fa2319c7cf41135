// 2-D convolution via im2col and single-precision GEMM, processed in chunks of
// output rows so the column buffer stays cache-resident.

#include <cblas.h>

#include <algorithm>
#include <memory>

#include "glean/autograd.hpp"
#include "glean/errors.hpp"

namespace glean::ag {

namespace {

struct ConvGeom {
  int n, cin, h, w, cout, k, stride, pad, ho, wo;
  int rows() const { return cin * k * k; }
  int out_rows() const { return n * ho; }  // one "row" = one output scanline of one image
};

using Buffer = std::unique_ptr<float[]>;

Buffer scratch(std::size_t n) { return Buffer(new float[n]); }

// Output scanlines per chunk, aiming at a few hundred KB of columns.
int rows_per_chunk(const ConvGeom& g) {
  const int target_cols = std::clamp(262144 / g.rows(), 256, 4096);
  return std::max(1, target_cols / g.wo);
}

// Output columns ox in [lo, hi) read inside the input row for tap kx.
void valid_span(const ConvGeom& g, int kx, int& lo, int& hi) {
  // ix = ox·s − p + kx must satisfy 0 ≤ ix < w.
  const int off = kx - g.pad;
  lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  hi = (g.w - 1 - off) < 0 ? 0 : (g.w - 1 - off) / g.stride + 1;
  hi = std::min(hi, g.wo);
  lo = std::min(lo, hi);
}

// cols[(c·k + ky)·k + kx][(r − r0)·wo + ox] = x[b, c, oy·s − p + ky, ox·s − p + kx]
// with r = b·ho + oy, zero outside the input.
void im2col_rows(const float* x, const ConvGeom& g, int r0, int r1, float* cols) {
  const std::size_t ld = static_cast<std::size_t>(r1 - r0) * g.wo;
  for (int c = 0; c < g.cin; ++c)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        int lo, hi;
        valid_span(g, kx, lo, hi);
        const int off = kx - g.pad;
        float* row = cols + (static_cast<std::size_t>(c * g.k + ky) * g.k + kx) * ld;
        for (int r = r0; r < r1; ++r) {
          const int b = r / g.ho, oy = r % g.ho;
          const int iy = oy * g.stride - g.pad + ky;
          float* drow = row + static_cast<std::size_t>(r - r0) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(drow, g.wo, 0.0f);
            continue;
          }
          const float* srow = x + ((static_cast<std::size_t>(b) * g.cin + c) * g.h + iy) * g.w + off;
          std::fill_n(drow, lo, 0.0f);
          if (g.stride == 1) {
            std::copy(srow + lo, srow + hi, drow + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) drow[ox] = srow[ox * g.stride];
          }
          std::fill(drow + hi, drow + g.wo, 0.0f);
        }
      }
}

void col2im_rows_add(const float* cols, const ConvGeom& g, int r0, int r1, float* x) {
  const std::size_t ld = static_cast<std::size_t>(r1 - r0) * g.wo;
  for (int c = 0; c < g.cin; ++c)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        int lo, hi;
        valid_span(g, kx, lo, hi);
        const int off = kx - g.pad;
        const float* row = cols + (static_cast<std::size_t>(c * g.k + ky) * g.k + kx) * ld;
        for (int r = r0; r < r1; ++r) {
          const int b = r / g.ho, oy = r % g.ho;
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const float* srow = row + static_cast<std::size_t>(r - r0) * g.wo;
          float* drow = x + ((static_cast<std::size_t>(b) * g.cin + c) * g.h + iy) * g.w + off;
          if (g.stride == 1) {
            for (int ox = lo; ox < hi; ++ox) drow[ox] += srow[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) drow[ox * g.stride] += srow[ox];
          }
        }
      }
}

// Moves scanlines [r0, r1) of every output channel between NCHW storage and a
// [cout, (r1 − r0)·wo] chunk.
void gather_rows(const float* nchw, const ConvGeom& g, int r0, int r1, float* chunk) {
  const std::size_t ld = static_cast<std::size_t>(r1 - r0) * g.wo;
  for (int co = 0; co < g.cout; ++co)
    for (int r = r0; r < r1; ++r) {
      const int b = r / g.ho, oy = r % g.ho;
      std::copy_n(nchw + ((static_cast<std::size_t>(b) * g.cout + co) * g.ho + oy) * g.wo, g.wo,
                  chunk + co * ld + static_cast<std::size_t>(r - r0) * g.wo);
    }
}

void scatter_rows(const float* chunk, const float* bias, const ConvGeom& g, int r0, int r1, float* nchw) {
  const std::size_t ld = static_cast<std::size_t>(r1 - r0) * g.wo;
  for (int co = 0; co < g.cout; ++co) {
    const float bv = bias ? bias[co] : 0.0f;
    for (int r = r0; r < r1; ++r) {
      const int b = r / g.ho, oy = r % g.ho;
      const float* src = chunk + co * ld + static_cast<std::size_t>(r - r0) * g.wo;
      float* dst = nchw + ((static_cast<std::size_t>(b) * g.cout + co) * g.ho + oy) * g.wo;
      for (int ox = 0; ox < g.wo; ++ox) dst[ox] = src[ox] + bv;
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Tensor& tx = x.value();
  const Tensor& tw = weight.value();
  if (tx.rank() != 4 || tw.rank() != 4) throw ShapeError("conv2d: expected rank-4 input and weight");
  if (tw.dim(1) != tx.c()) {
    throw ShapeError("conv2d: input channels " + std::to_string(tx.c()) + " but weight " + shape_str(tw.shape()));
  }
  if (tw.dim(2) != tw.dim(3)) throw ShapeError("conv2d: non-square kernel");
  ConvGeom g{tx.n(), tx.c(), tx.h(), tx.w(), tw.dim(0), tw.dim(2), stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError("conv2d: input " + shape_str(tx.shape()) + " too small for kernel");
  if (bias.defined() && static_cast<int>(bias.value().numel()) != g.cout) throw ShapeError("conv2d: bias size mismatch");

  const int step = rows_per_chunk(g);
  const std::size_t max_cols = static_cast<std::size_t>(std::min(step, g.out_rows())) * g.wo;
  const Buffer cols = scratch(static_cast<std::size_t>(g.rows()) * max_cols);
  const Buffer ychunk = scratch(static_cast<std::size_t>(g.cout) * max_cols);
  Tensor out({g.n, g.cout, g.ho, g.wo});
  for (int r0 = 0; r0 < g.out_rows(); r0 += step) {
    const int r1 = std::min(r0 + step, g.out_rows());
    const int ncols = (r1 - r0) * g.wo;
    im2col_rows(tx.data(), g, r0, r1, cols.get());
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, g.cout, ncols, g.rows(), 1.0f, tw.data(), g.rows(),
                cols.get(), ncols, 0.0f, ychunk.get(), ncols);
    scatter_rows(ychunk.get(), bias.defined() ? bias.value().data() : nullptr, g, r0, r1, out.data());
  }

  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(out), std::move(parents), [g](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;

    if (pb && pb->requires_grad) {
      Tensor& gb = pb->grad_buffer();
      const std::size_t plane = static_cast<std::size_t>(g.ho) * g.wo;
      for (int co = 0; co < g.cout; ++co) {
        double s = 0.0;
        for (int b = 0; b < g.n; ++b) {
          const float* row = self.grad.data() + (static_cast<std::size_t>(b) * g.cout + co) * plane;
          for (std::size_t i = 0; i < plane; ++i) s += row[i];
        }
        gb[co] += static_cast<float>(s);
      }
    }
    if (!pw.requires_grad && !px.requires_grad) return;

    const int step = rows_per_chunk(g);
    const std::size_t max_cols = static_cast<std::size_t>(std::min(step, g.out_rows())) * g.wo;
    const Buffer cols = scratch(static_cast<std::size_t>(g.rows()) * max_cols);
    const Buffer dychunk = scratch(static_cast<std::size_t>(g.cout) * max_cols);
    float* gw = pw.requires_grad ? pw.grad_buffer().data() : nullptr;
    float* gx = px.requires_grad ? px.grad_buffer().data() : nullptr;
    for (int r0 = 0; r0 < g.out_rows(); r0 += step) {
      const int r1 = std::min(r0 + step, g.out_rows());
      const int ncols = (r1 - r0) * g.wo;
      gather_rows(self.grad.data(), g, r0, r1, dychunk.get());
      if (gw) {
        im2col_rows(px.value.data(), g, r0, r1, cols.get());
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, g.cout, g.rows(), ncols, 1.0f, dychunk.get(), ncols,
                    cols.get(), ncols, 1.0f, gw, g.rows());
      }
      if (gx) {
        cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, g.rows(), ncols, g.cout, 1.0f, pw.value.data(), g.rows(),
                    dychunk.get(), ncols, 0.0f, cols.get(), ncols);
        col2im_rows_add(cols.get(), g, r0, r1, gx);
      }
    }
  });
}

}  // namespace glean::ag

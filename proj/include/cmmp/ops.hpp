#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "cmmp/tape.hpp"
#include "cmmp/tensor.hpp"

namespace cmmp {

struct Conv2dOpts {
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t dilation = 1;
};

struct TConv2dOpts {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

namespace detail {

// c[m,n] += sum_k a[m,k] * b[k,n]. Accumulation order is k ascending for
// every output element, so results are independent of any outer scheduling.
template <typename T>
void matmul_ab_acc(const T* a, const T* b, T* c, std::size_t M, std::size_t K,
                   std::size_t N) {
  for (std::size_t m = 0; m < M; ++m) {
    const T* arow = a + m * K;
    T* crow = c + m * N;
    for (std::size_t k = 0; k < K; ++k) {
      const T av = arow[k];
      const T* brow = b + k * N;
      for (std::size_t n = 0; n < N; ++n) crow[n] += av * brow[n];
    }
  }
}

// c[m,j] += sum_n a[m,n] * b[j,n]
template <typename T>
void matmul_abt_acc(const T* a, const T* b, T* c, std::size_t M, std::size_t N,
                    std::size_t J) {
  for (std::size_t m = 0; m < M; ++m) {
    const T* arow = a + m * N;
    for (std::size_t j = 0; j < J; ++j) {
      const T* brow = b + j * N;
      T acc = T(0);
      for (std::size_t n = 0; n < N; ++n) acc += arow[n] * brow[n];
      c[m * J + j] += acc;
    }
  }
}

// c[k,n] += sum_m a[m,k] * b[m,n]
template <typename T>
void matmul_atb_acc(const T* a, const T* b, T* c, std::size_t M, std::size_t K,
                    std::size_t N) {
  for (std::size_t m = 0; m < M; ++m) {
    const T* arow = a + m * K;
    const T* brow = b + m * N;
    for (std::size_t k = 0; k < K; ++k) {
      const T av = arow[k];
      T* crow = c + k * N;
      for (std::size_t n = 0; n < N; ++n) crow[n] += av * brow[n];
    }
  }
}

// col has one row per (c, kh, kw) and one column per output position; zero
// where the tap falls outside the image.
template <typename T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t dil, std::size_t out_h,
            std::size_t out_w, T* col) {
  const std::size_t cols = out_h * out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < C; ++c) {
    const T* plane = x + c * H * W;
    for (std::size_t kh = 0; kh < k; ++kh) {
      for (std::size_t kw = 0; kw < k; ++kw, ++row) {
        T* dst = col + row * cols;
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const std::int64_t ih = std::int64_t(oh * stride) - std::int64_t(pad) +
                                  std::int64_t(kh * dil);
          if (ih < 0 || ih >= std::int64_t(H)) {
            for (std::size_t ow = 0; ow < out_w; ++ow) dst[oh * out_w + ow] = T(0);
            continue;
          }
          const T* src = plane + std::size_t(ih) * W;
          for (std::size_t ow = 0; ow < out_w; ++ow) {
            const std::int64_t iw = std::int64_t(ow * stride) - std::int64_t(pad) +
                                    std::int64_t(kw * dil);
            dst[oh * out_w + ow] =
                (iw < 0 || iw >= std::int64_t(W)) ? T(0) : src[std::size_t(iw)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-accumulate col back into the image.
template <typename T>
void col2im_acc(const T* col, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
                std::size_t stride, std::size_t pad, std::size_t dil, std::size_t out_h,
                std::size_t out_w, T* x) {
  const std::size_t cols = out_h * out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < C; ++c) {
    T* plane = x + c * H * W;
    for (std::size_t kh = 0; kh < k; ++kh) {
      for (std::size_t kw = 0; kw < k; ++kw, ++row) {
        const T* src = col + row * cols;
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const std::int64_t ih = std::int64_t(oh * stride) - std::int64_t(pad) +
                                  std::int64_t(kh * dil);
          if (ih < 0 || ih >= std::int64_t(H)) continue;
          T* dstrow = plane + std::size_t(ih) * W;
          for (std::size_t ow = 0; ow < out_w; ++ow) {
            const std::int64_t iw = std::int64_t(ow * stride) - std::int64_t(pad) +
                                    std::int64_t(kw * dil);
            if (iw < 0 || iw >= std::int64_t(W)) continue;
            dstrow[std::size_t(iw)] += src[oh * out_w + ow];
          }
        }
      }
    }
  }
}

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                                   std::size_t pad, std::size_t dil) {
  const std::int64_t num = std::int64_t(in) + 2 * std::int64_t(pad) -
                           std::int64_t(dil) * (std::int64_t(k) - 1) - 1;
  if (num < 0 || stride == 0)
    throw ShapeMismatch("non-positive convolution output extent");
  return std::size_t(num) / stride + 1;
}

template <typename T>
bool wants_grad(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape) return false;
  for (const auto* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

}  // namespace detail

// Standard cross-correlation. x: N x Cin x H x W, weight: Cout x Cin x k x k,
// bias: Cout. Zero padding.
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                 const Tensor<T>& b, Conv2dOpts opt = {}) {
  if (x.rank() != 4 || w.rank() != 4 || b.rank() != 1)
    throw ShapeMismatch("conv2d expects x rank 4, weight rank 4, bias rank 1");
  if (w.dim(2) != w.dim(3)) throw ShapeMismatch("conv2d kernels must be square");
  if (x.dim(1) != w.dim(1))
    throw ShapeMismatch("conv2d channel mismatch: x " + shape_str(x.shape()) +
                        " vs weight " + shape_str(w.shape()));
  if (b.dim(0) != w.dim(0)) throw ShapeMismatch("conv2d bias length mismatch");
  if (opt.stride == 0 || opt.dilation == 0)
    throw ShapeMismatch("conv2d stride and dilation must be >= 1");

  const std::size_t N = x.dim(0), cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const std::size_t oh = detail::conv_out_extent(H, k, opt.stride, opt.pad, opt.dilation);
  const std::size_t ow = detail::conv_out_extent(W, k, opt.stride, opt.pad, opt.dilation);
  const std::size_t ck = cin * k * k;
  const std::size_t ohw = oh * ow;

  const bool rec = detail::wants_grad(tape, {&x, &w, &b});
  Tensor<T> y = Tensor<T>::zeros({N, cout, oh, ow}, rec);

  // Columns are kept for the weight gradient when recording.
  auto cols = std::make_shared<std::vector<std::vector<T>>>();
  const bool keep_cols = rec && w.requires_grad();
  std::vector<T> scratch;
  if (keep_cols)
    cols->assign(N, std::vector<T>(ck * ohw));
  else
    scratch.resize(ck * ohw);

  for (std::size_t n = 0; n < N; ++n) {
    T* col = keep_cols ? (*cols)[n].data() : scratch.data();
    detail::im2col(x.data() + n * cin * H * W, cin, H, W, k, opt.stride, opt.pad,
                   opt.dilation, oh, ow, col);
    T* yn = y.data() + n * cout * ohw;
    detail::matmul_ab_acc(w.data(), col, yn, cout, ck, ohw);
    for (std::size_t co = 0; co < cout; ++co) {
      const T bv = b.data()[co];
      T* yrow = yn + co * ohw;
      for (std::size_t i = 0; i < ohw; ++i) yrow[i] += bv;
    }
  }

  if (rec) {
    Tensor<T> xc = x, wc = w, bc = b, yc = y;
    tape->record([xc, wc, bc, yc, cols, opt, N, cin, H, W, cout, k, oh, ow, ck,
                  ohw]() mutable {
      const T* dy = yc.grad().data();
      for (std::size_t n = 0; n < N; ++n) {
        const T* dyn = dy + n * cout * ohw;
        if (wc.requires_grad())
          detail::matmul_abt_acc(dyn, (*cols)[n].data(), wc.grad_data(), cout, ohw, ck);
        if (bc.requires_grad()) {
          for (std::size_t co = 0; co < cout; ++co) {
            T acc = T(0);
            const T* dyrow = dyn + co * ohw;
            for (std::size_t i = 0; i < ohw; ++i) acc += dyrow[i];
            bc.grad_data()[co] += acc;
          }
        }
        if (xc.requires_grad()) {
          std::vector<T> dcol(ck * ohw, T(0));
          detail::matmul_atb_acc(wc.data(), dyn, dcol.data(), cout, ck, ohw);
          detail::col2im_acc(dcol.data(), cin, H, W, k, opt.stride, opt.pad, opt.dilation,
                             oh, ow, xc.grad_data() + n * cin * H * W);
        }
      }
    });
  }
  return y;
}

// Transposed convolution (scatter-accumulate, the gradient of conv2d with
// respect to its input). x: N x Cin x H x W, weight: Cin x Cout x k x k.
// Output extent: (H - 1) * stride - 2 * pad + k.
template <typename T>
Tensor<T> transposed_conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                            const Tensor<T>& b, TConv2dOpts opt = {}) {
  if (x.rank() != 4 || w.rank() != 4 || b.rank() != 1)
    throw ShapeMismatch("transposed_conv2d expects x rank 4, weight rank 4, bias rank 1");
  if (w.dim(2) != w.dim(3)) throw ShapeMismatch("transposed_conv2d kernels must be square");
  if (x.dim(1) != w.dim(0))
    throw ShapeMismatch("transposed_conv2d channel mismatch: x " + shape_str(x.shape()) +
                        " vs weight " + shape_str(w.shape()));
  if (b.dim(0) != w.dim(1)) throw ShapeMismatch("transposed_conv2d bias length mismatch");
  if (opt.stride == 0) throw ShapeMismatch("transposed_conv2d stride must be >= 1");

  const std::size_t N = x.dim(0), cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t cout = w.dim(1), k = w.dim(2);
  const std::int64_t oh_s = std::int64_t(H - 1) * std::int64_t(opt.stride) -
                            2 * std::int64_t(opt.pad) + std::int64_t(k);
  const std::int64_t ow_s = std::int64_t(W - 1) * std::int64_t(opt.stride) -
                            2 * std::int64_t(opt.pad) + std::int64_t(k);
  if (oh_s <= 0 || ow_s <= 0)
    throw ShapeMismatch("non-positive transposed convolution output extent");
  const std::size_t oh = std::size_t(oh_s), ow = std::size_t(ow_s);
  const std::size_t ck = cout * k * k;
  const std::size_t hw = H * W;

  const bool rec = detail::wants_grad(tape, {&x, &w, &b});
  Tensor<T> y = Tensor<T>::zeros({N, cout, oh, ow}, rec);

  std::vector<T> col(ck * hw);
  for (std::size_t n = 0; n < N; ++n) {
    std::fill(col.begin(), col.end(), T(0));
    detail::matmul_atb_acc(w.data(), x.data() + n * cin * hw, col.data(), cin, ck, hw);
    T* yn = y.data() + n * cout * oh * ow;
    detail::col2im_acc(col.data(), cout, oh, ow, k, opt.stride, opt.pad, std::size_t(1),
                       H, W, yn);
    for (std::size_t co = 0; co < cout; ++co) {
      const T bv = b.data()[co];
      T* yrow = yn + co * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i) yrow[i] += bv;
    }
  }

  if (rec) {
    Tensor<T> xc = x, wc = w, bc = b, yc = y;
    tape->record([xc, wc, bc, yc, opt, N, cin, H, W, cout, k, oh, ow, ck, hw]() mutable {
      std::vector<T> dycol(ck * hw);
      for (std::size_t n = 0; n < N; ++n) {
        const T* dyn = yc.grad().data() + n * cout * oh * ow;
        detail::im2col(dyn, cout, oh, ow, k, opt.stride, opt.pad, std::size_t(1), H, W,
                       dycol.data());
        if (xc.requires_grad())
          detail::matmul_ab_acc(wc.data(), dycol.data(), xc.grad_data() + n * cin * hw,
                                cin, ck, hw);
        if (wc.requires_grad())
          detail::matmul_abt_acc(xc.data() + n * cin * hw, dycol.data(), wc.grad_data(),
                                 cin, hw, ck);
        if (bc.requires_grad()) {
          for (std::size_t co = 0; co < cout; ++co) {
            T acc = T(0);
            const T* dyrow = dyn + co * oh * ow;
            for (std::size_t i = 0; i < oh * ow; ++i) acc += dyrow[i];
            bc.grad_data()[co] += acc;
          }
        }
      }
    });
  }
  return y;
}

// 2x2 max pooling with stride 2. Gradient routes to the argmax; ties go to
// the first element in window scan order.
template <typename T>
Tensor<T> maxpool2d(Tape<T>* tape, const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeMismatch("maxpool2d expects rank 4");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw ShapeMismatch("maxpool2d needs even spatial extents, got " + shape_str(x.shape()));
  const std::size_t oh = H / 2, ow = W / 2;

  const bool rec = detail::wants_grad(tape, {&x});
  Tensor<T> y = Tensor<T>::zeros({N, C, oh, ow}, rec);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(y.numel());

  std::size_t oi = 0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* plane = x.data() + (n * C + c) * H * W;
      const std::size_t base = (n * C + c) * H * W;
      for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t col = 0; col < ow; ++col, ++oi) {
          std::size_t best = (2 * r) * W + 2 * col;
          T bv = plane[best];
          const std::size_t cand[3] = {(2 * r) * W + 2 * col + 1,
                                       (2 * r + 1) * W + 2 * col,
                                       (2 * r + 1) * W + 2 * col + 1};
          for (std::size_t q : cand) {
            if (plane[q] > bv) {
              bv = plane[q];
              best = q;
            }
          }
          y.data()[oi] = bv;
          (*argmax)[oi] = std::uint32_t(base + best);
        }
      }
    }
  }

  if (rec) {
    Tensor<T> xc = x, yc = y;
    tape->record([xc, yc, argmax]() mutable {
      if (!xc.requires_grad()) return;
      const T* dy = yc.grad().data();
      T* dx = xc.grad_data();
      for (std::size_t i = 0; i < yc.numel(); ++i) dx[(*argmax)[i]] += dy[i];
    });
  }
  return y;
}

// Max pooling over a gy x gx partition of the plane with region boundaries
// at floor(j*H/gy), floor(j*W/gx). Output: N x C x gy x gx.
template <typename T>
Tensor<T> region_maxpool(Tape<T>* tape, const Tensor<T>& x, std::size_t gy,
                         std::size_t gx) {
  if (x.rank() != 4) throw ShapeMismatch("region_maxpool expects rank 4");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gy == 0 || gx == 0 || gy > H || gx > W)
    throw InvalidGrid("region grid " + std::to_string(gy) + "x" + std::to_string(gx) +
                      " does not fit " + shape_str(x.shape()));

  const bool rec = detail::wants_grad(tape, {&x});
  Tensor<T> y = Tensor<T>::zeros({N, C, gy, gx}, rec);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(y.numel());

  std::size_t oi = 0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* plane = x.data() + (n * C + c) * H * W;
      const std::size_t base = (n * C + c) * H * W;
      for (std::size_t jy = 0; jy < gy; ++jy) {
        const std::size_t r0 = jy * H / gy, r1 = (jy + 1) * H / gy;
        for (std::size_t jx = 0; jx < gx; ++jx, ++oi) {
          const std::size_t c0 = jx * W / gx, c1 = (jx + 1) * W / gx;
          std::size_t best = r0 * W + c0;
          T bv = plane[best];
          for (std::size_t r = r0; r < r1; ++r) {
            for (std::size_t col = c0; col < c1; ++col) {
              const std::size_t q = r * W + col;
              if (plane[q] > bv) {
                bv = plane[q];
                best = q;
              }
            }
          }
          y.data()[oi] = bv;
          (*argmax)[oi] = std::uint32_t(base + best);
        }
      }
    }
  }

  if (rec) {
    Tensor<T> xc = x, yc = y;
    tape->record([xc, yc, argmax]() mutable {
      if (!xc.requires_grad()) return;
      const T* dy = yc.grad().data();
      T* dx = xc.grad_data();
      for (std::size_t i = 0; i < yc.numel(); ++i) dx[(*argmax)[i]] += dy[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  const bool rec = detail::wants_grad(tape, {&x});
  Tensor<T> y = Tensor<T>::zeros(x.shape(), rec);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T v = x.data()[i];
    y.data()[i] = v > T(0) ? v : T(0);
  }
  if (rec) {
    Tensor<T> xc = x, yc = y;
    tape->record([xc, yc]() mutable {
      if (!xc.requires_grad()) return;
      const T* dy = yc.grad().data();
      T* dx = xc.grad_data();
      for (std::size_t i = 0; i < xc.numel(); ++i)
        if (xc.data()[i] > T(0)) dx[i] += dy[i];  // derivative at 0 is 0
    });
  }
  return y;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x) {
  const bool rec = detail::wants_grad(tape, {&x});
  Tensor<T> y = Tensor<T>::zeros(x.shape(), rec);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T v = x.data()[i];
    if (v >= T(0)) {
      const T e = std::exp(-v);
      y.data()[i] = T(1) / (T(1) + e);
    } else {
      const T e = std::exp(v);
      y.data()[i] = e / (T(1) + e);
    }
  }
  if (rec) {
    Tensor<T> xc = x, yc = y;
    tape->record([xc, yc]() mutable {
      if (!xc.requires_grad()) return;
      const T* dy = yc.grad().data();
      T* dx = xc.grad_data();
      for (std::size_t i = 0; i < xc.numel(); ++i) {
        const T s = yc.data()[i];
        dx[i] += dy[i] * s * (T(1) - s);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& y) {
  if (x.shape() != y.shape())
    throw ShapeMismatch("add shape mismatch: " + shape_str(x.shape()) + " vs " +
                        shape_str(y.shape()));
  const bool rec = detail::wants_grad(tape, {&x, &y});
  Tensor<T> z = Tensor<T>::zeros(x.shape(), rec);
  for (std::size_t i = 0; i < x.numel(); ++i) z.data()[i] = x.data()[i] + y.data()[i];
  if (rec) {
    Tensor<T> xc = x, yc = y, zc = z;
    tape->record([xc, yc, zc]() mutable {
      const T* dz = zc.grad().data();
      if (xc.requires_grad()) {
        T* dx = xc.grad_data();
        for (std::size_t i = 0; i < xc.numel(); ++i) dx[i] += dz[i];
      }
      if (yc.requires_grad()) {
        T* dy = yc.grad_data();
        for (std::size_t i = 0; i < yc.numel(); ++i) dy[i] += dz[i];
      }
    });
  }
  return z;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& y) {
  if (x.shape() != y.shape())
    throw ShapeMismatch("mul shape mismatch: " + shape_str(x.shape()) + " vs " +
                        shape_str(y.shape()));
  const bool rec = detail::wants_grad(tape, {&x, &y});
  Tensor<T> z = Tensor<T>::zeros(x.shape(), rec);
  for (std::size_t i = 0; i < x.numel(); ++i) z.data()[i] = x.data()[i] * y.data()[i];
  if (rec) {
    Tensor<T> xc = x, yc = y, zc = z;
    tape->record([xc, yc, zc]() mutable {
      const T* dz = zc.grad().data();
      if (xc.requires_grad()) {
        T* dx = xc.grad_data();
        for (std::size_t i = 0; i < xc.numel(); ++i) dx[i] += dz[i] * yc.data()[i];
      }
      if (yc.requires_grad()) {
        T* dy = yc.grad_data();
        for (std::size_t i = 0; i < yc.numel(); ++i) dy[i] += dz[i] * xc.data()[i];
      }
    });
  }
  return z;
}

template <typename T>
Tensor<T> add_scalar(Tape<T>* tape, const Tensor<T>& x, T s) {
  const bool rec = detail::wants_grad(tape, {&x});
  Tensor<T> y = Tensor<T>::zeros(x.shape(), rec);
  for (std::size_t i = 0; i < x.numel(); ++i) y.data()[i] = x.data()[i] + s;
  if (rec) {
    Tensor<T> xc = x, yc = y;
    tape->record([xc, yc]() mutable {
      if (!xc.requires_grad()) return;
      const T* dy = yc.grad().data();
      T* dx = xc.grad_data();
      for (std::size_t i = 0; i < xc.numel(); ++i) dx[i] += dy[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul_scalar(Tape<T>* tape, const Tensor<T>& x, T s) {
  const bool rec = detail::wants_grad(tape, {&x});
  Tensor<T> y = Tensor<T>::zeros(x.shape(), rec);
  for (std::size_t i = 0; i < x.numel(); ++i) y.data()[i] = x.data()[i] * s;
  if (rec) {
    Tensor<T> xc = x, yc = y;
    tape->record([xc, yc, s]() mutable {
      if (!xc.requires_grad()) return;
      const T* dy = yc.grad().data();
      T* dx = xc.grad_data();
      for (std::size_t i = 0; i < xc.numel(); ++i) dx[i] += dy[i] * s;
    });
  }
  return y;
}

// Scalar sum of all elements, accumulated in double.
template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x) {
  const bool rec = detail::wants_grad(tape, {&x});
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += double(x.data()[i]);
  Tensor<T> y = Tensor<T>::from({1}, {T(acc)}, rec);
  if (rec) {
    Tensor<T> xc = x, yc = y;
    tape->record([xc, yc]() mutable {
      if (!xc.requires_grad()) return;
      const T dy = yc.grad()[0];
      T* dx = xc.grad_data();
      for (std::size_t i = 0; i < xc.numel(); ++i) dx[i] += dy;
    });
  }
  return y;
}

// Concatenate along the channel dimension; inputs must share N, h, w.
template <typename T>
Tensor<T> concat_channels(Tape<T>* tape, const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ShapeMismatch("concat_channels needs at least one input");
  const std::size_t N = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
  std::size_t ctot = 0;
  bool rec = false;
  for (const auto& x : xs) {
    if (x.rank() != 4 || x.dim(0) != N || x.dim(2) != H || x.dim(3) != W)
      throw ShapeMismatch("concat_channels inputs must share N, h, w");
    ctot += x.dim(1);
    rec = rec || (tape && x.requires_grad());
  }
  Tensor<T> y = Tensor<T>::zeros({N, ctot, H, W}, rec);
  const std::size_t hw = H * W;
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t coff = 0;
    for (const auto& x : xs) {
      const std::size_t c = x.dim(1);
      std::copy_n(x.data() + n * c * hw, c * hw, y.data() + (n * ctot + coff) * hw);
      coff += c;
    }
  }
  if (rec) {
    std::vector<Tensor<T>> xcs = xs;
    Tensor<T> yc = y;
    tape->record([xcs, yc, N, ctot, hw]() mutable {
      const T* dy = yc.grad().data();
      for (std::size_t n = 0; n < N; ++n) {
        std::size_t coff = 0;
        for (auto& x : xcs) {
          const std::size_t c = x.dim(1);
          if (x.requires_grad()) {
            T* dx = x.grad_data() + n * c * hw;
            const T* src = dy + (n * ctot + coff) * hw;
            for (std::size_t i = 0; i < c * hw; ++i) dx[i] += src[i];
          }
          coff += c;
        }
      }
    });
  }
  return y;
}

// y = x * w^T + b. x: N x din, w: dout x din, b: dout.
template <typename T>
Tensor<T> fully_connected(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                          const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
    throw ShapeMismatch("fully_connected expects x rank 2, weight rank 2, bias rank 1");
  if (x.dim(1) != w.dim(1))
    throw ShapeMismatch("fully_connected input width mismatch: x " + shape_str(x.shape()) +
                        " vs weight " + shape_str(w.shape()));
  if (b.dim(0) != w.dim(0)) throw ShapeMismatch("fully_connected bias length mismatch");

  const std::size_t N = x.dim(0), din = x.dim(1), dout = w.dim(0);
  const bool rec = detail::wants_grad(tape, {&x, &w, &b});
  Tensor<T> y = Tensor<T>::zeros({N, dout}, rec);
  detail::matmul_abt_acc(x.data(), w.data(), y.data(), N, din, dout);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < dout; ++o) y.data()[n * dout + o] += b.data()[o];

  if (rec) {
    Tensor<T> xc = x, wc = w, bc = b, yc = y;
    tape->record([xc, wc, bc, yc, N, din, dout]() mutable {
      const T* dy = yc.grad().data();
      if (xc.requires_grad())
        detail::matmul_ab_acc(dy, wc.data(), xc.grad_data(), N, dout, din);
      if (wc.requires_grad())
        detail::matmul_atb_acc(dy, xc.data(), wc.grad_data(), N, dout, din);
      if (bc.requires_grad()) {
        T* db = bc.grad_data();
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t o = 0; o < dout; ++o) db[o] += dy[n * dout + o];
      }
    });
  }
  return y;
}

// v: N x c -> N x c x h x w, each channel value copied over the plane.
template <typename T>
Tensor<T> broadcast_spatial(Tape<T>* tape, const Tensor<T>& v, std::size_t h,
                            std::size_t w) {
  if (v.rank() != 2) throw ShapeMismatch("broadcast_spatial expects rank 2");
  const std::size_t N = v.dim(0), C = v.dim(1);
  const bool rec = detail::wants_grad(tape, {&v});
  Tensor<T> y = Tensor<T>::zeros({N, C, h, w}, rec);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T val = v.data()[n * C + c];
      T* plane = y.data() + (n * C + c) * h * w;
      for (std::size_t i = 0; i < h * w; ++i) plane[i] = val;
    }
  if (rec) {
    Tensor<T> vc = v, yc = y;
    tape->record([vc, yc, N, C, h, w]() mutable {
      if (!vc.requires_grad()) return;
      const T* dy = yc.grad().data();
      T* dv = vc.grad_data();
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          T acc = T(0);
          const T* plane = dy + (n * C + c) * h * w;
          for (std::size_t i = 0; i < h * w; ++i) acc += plane[i];
          dv[n * C + c] += acc;
        }
    });
  }
  return y;
}

// Same data, new shape (element count preserved).
template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeMismatch("reshape cannot go from " + shape_str(x.shape()) + " to " +
                        shape_str(shape));
  const bool rec = detail::wants_grad(tape, {&x});
  Tensor<T> y = Tensor<T>::zeros(std::move(shape), rec);
  std::copy_n(x.data(), x.numel(), y.data());
  if (rec) {
    Tensor<T> xc = x, yc = y;
    tape->record([xc, yc]() mutable {
      if (!xc.requires_grad()) return;
      const T* dy = yc.grad().data();
      T* dx = xc.grad_data();
      for (std::size_t i = 0; i < xc.numel(); ++i) dx[i] += dy[i];
    });
  }
  return y;
}

// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
// Gradient flows to pred only; it is zero where the clamp is active.
template <typename T>
Tensor<T> bce_loss(Tape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw ShapeMismatch("bce_loss shape mismatch: " + shape_str(pred.shape()) + " vs " +
                        shape_str(target.shape()));
  constexpr double kEps = 1e-7;
  const std::size_t n = pred.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(double(pred.data()[i]), kEps, 1.0 - kEps);
    const double t = double(target.data()[i]);
    acc += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  }
  const bool rec = detail::wants_grad(tape, {&pred});
  Tensor<T> loss = Tensor<T>::from({1}, {T(acc / double(n))}, rec);
  if (rec) {
    Tensor<T> pc = pred, tc = target, lc = loss;
    tape->record([pc, tc, lc, n]() mutable {
      if (!pc.requires_grad()) return;
      const double up = double(lc.grad()[0]) / double(n);
      T* dp = pc.grad_data();
      for (std::size_t i = 0; i < n; ++i) {
        const double p = double(pc.data()[i]);
        if (p <= kEps || p >= 1.0 - kEps) continue;
        const double t = double(tc.data()[i]);
        dp[i] += T(up * (-t / p + (1.0 - t) / (1.0 - p)));
      }
    });
  }
  return loss;
}

}  // namespace cmmp

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "ecoc/tape.hpp"
#include "ecoc/tensor.hpp"

/// Differentiable primitives. Each records one node on the operands' tape
/// together with its adjoint.
namespace ecoc::ag {

namespace detail {

template <typename T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
void require_rank(const char* op, Var<T> a, std::size_t rank) {
  if (a.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
  }
}

template <typename T>
Tape<T>& tape_of(const char* op, std::initializer_list<Var<T>> vars) {
  Tape<T>* tape = vars.begin()->tape;
  for (const Var<T>& v : vars) {
    if (v.tape != tape || tape == nullptr) {
      throw std::invalid_argument(std::string(op) + ": operands recorded on different tapes");
    }
  }
  return *tape;
}

/// Unary elementwise op given f(x) and f'(x, f(x)).
template <typename T, typename F, typename D>
Var<T> unary(const char* op, Var<T> x, F f, D df) {
  return x.tape->record(
      op, {x},
      [f](const typename Tape<T>::Inputs& in) {
        Tensor<T> out(in[0]->shape());
        const T* a = in[0]->data();
        T* o = out.data();
        for (std::size_t i = 0, n = out.size(); i < n; ++i) o[i] = f(a[i]);
        return out;
      },
      [df](const Tensor<T>& g, const typename Tape<T>::Inputs& in, const Tensor<T>& out,
           std::vector<Tensor<T>*>& gi) {
        if (!gi[0]) return;
        const T* a = in[0]->data();
        const T* y = out.data();
        T* d = gi[0]->data();
        for (std::size_t i = 0, n = g.size(); i < n; ++i) d[i] += g[i] * df(a[i], y[i]);
      });
}

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t filters, kh, kw, stride, pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* col) {
  const std::size_t P = g.pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) &&
                                ix < static_cast<long>(g.width);
            row[oy * g.out_w + ox] =
                inside ? image[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                               static_cast<std::size_t>(ix)]
                       : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* image) {
  const std::size_t P = g.pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            image[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                  static_cast<std::size_t>(ix)] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::tape_of("add", {a, b});
  detail::require_same_shape("add", a, b);
  return tape.record(
      "add", {a, b},
      [](const auto& in) {
        Tensor<T> out = *in[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*in[1])[i];
        return out;
      },
      [](const Tensor<T>& g, const auto&, const Tensor<T>&, std::vector<Tensor<T>*>& gi) {
        for (Tensor<T>* s : gi) {
          if (!s) continue;
          for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += g[i];
        }
      });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::tape_of("sub", {a, b});
  detail::require_same_shape("sub", a, b);
  return tape.record(
      "sub", {a, b},
      [](const auto& in) {
        Tensor<T> out = *in[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= (*in[1])[i];
        return out;
      },
      [](const Tensor<T>& g, const auto&, const Tensor<T>&, std::vector<Tensor<T>*>& gi) {
        if (gi[0])
          for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
        if (gi[1])
          for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] -= g[i];
      });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::tape_of("mul", {a, b});
  detail::require_same_shape("mul", a, b);
  return tape.record(
      "mul", {a, b},
      [](const auto& in) {
        Tensor<T> out = *in[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*in[1])[i];
        return out;
      },
      [](const Tensor<T>& g, const auto& in, const Tensor<T>&, std::vector<Tensor<T>*>& gi) {
        if (gi[0])
          for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * (*in[1])[i];
        if (gi[1])
          for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] += g[i] * (*in[0])[i];
      });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  return detail::unary<T>(
      "scale", x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T c) {
  return detail::unary<T>(
      "add_scalar", x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> neg(Var<T> x) {
  return scale(x, T(-1));
}

template <typename T>
Var<T> relu(Var<T> x) {
  return detail::unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return detail::unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

/// max(x, c) elementwise; the gradient at x == c is taken as zero.
template <typename T>
Var<T> maximum(Var<T> x, T c) {
  return detail::unary<T>(
      "maximum", x, [c](T v) { return v > c ? v : c; },
      [c](T v, T) { return v > c ? T(1) : T(0); });
}

/// Clamp into [lo, hi]; gradient passes on the closed interval.
template <typename T>
Var<T> clip(Var<T> x, T lo, T hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clip: lo > hi");
  return detail::unary<T>(
      "clip", x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

/// sign with sign(0) = +1; zero gradient everywhere.
template <typename T>
Var<T> sign(Var<T> x) {
  return detail::unary<T>(
      "sign", x, [](T v) { return sign_of(v); }, [](T, T) { return T(0); });
}

template <typename T>
Var<T> sum(Var<T> x) {
  return x.tape->record(
      "sum", {x},
      [](const auto& in) {
        T s = 0;
        for (T v : in[0]->values()) s += v;
        return Tensor<T>::scalar(s);
      },
      [](const Tensor<T>& g, const auto&, const Tensor<T>&, std::vector<Tensor<T>*>& gi) {
        if (!gi[0]) return;
        for (T& d : gi[0]->values()) d += g[0];
      });
}

template <typename T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

/// Row-wise softmax over the last axis of a rank-2 tensor.
template <typename T>
Var<T> softmax(Var<T> x) {
  detail::require_rank("softmax", x, 2);
  return x.tape->record(
      "softmax", {x},
      [](const auto& in) {
        const Tensor<T>& a = *in[0];
        const std::size_t R = a.dim(0), C = a.dim(1);
        Tensor<T> out(a.shape());
        for (std::size_t r = 0; r < R; ++r) {
          T m = a.at(r, 0);
          for (std::size_t c = 1; c < C; ++c) m = std::max(m, a.at(r, c));
          T z = 0;
          for (std::size_t c = 0; c < C; ++c) z += (out.at(r, c) = std::exp(a.at(r, c) - m));
          for (std::size_t c = 0; c < C; ++c) out.at(r, c) /= z;
        }
        return out;
      },
      [](const Tensor<T>& g, const auto&, const Tensor<T>& y, std::vector<Tensor<T>*>& gi) {
        if (!gi[0]) return;
        const std::size_t R = y.dim(0), C = y.dim(1);
        for (std::size_t r = 0; r < R; ++r) {
          T dot = 0;
          for (std::size_t c = 0; c < C; ++c) dot += g.at(r, c) * y.at(r, c);
          for (std::size_t c = 0; c < C; ++c) gi[0]->at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
        }
      });
}

/// Row-wise log-softmax over the last axis of a rank-2 tensor.
template <typename T>
Var<T> log_softmax(Var<T> x) {
  detail::require_rank("log_softmax", x, 2);
  return x.tape->record(
      "log_softmax", {x},
      [](const auto& in) {
        const Tensor<T>& a = *in[0];
        const std::size_t R = a.dim(0), C = a.dim(1);
        Tensor<T> out(a.shape());
        for (std::size_t r = 0; r < R; ++r) {
          T m = a.at(r, 0);
          for (std::size_t c = 1; c < C; ++c) m = std::max(m, a.at(r, c));
          T z = 0;
          for (std::size_t c = 0; c < C; ++c) z += std::exp(a.at(r, c) - m);
          const T lse = m + std::log(z);
          for (std::size_t c = 0; c < C; ++c) out.at(r, c) = a.at(r, c) - lse;
        }
        return out;
      },
      [](const Tensor<T>& g, const auto&, const Tensor<T>& y, std::vector<Tensor<T>*>& gi) {
        if (!gi[0]) return;
        const std::size_t R = y.dim(0), C = y.dim(1);
        for (std::size_t r = 0; r < R; ++r) {
          T gs = 0;
          for (std::size_t c = 0; c < C; ++c) gs += g.at(r, c);
          for (std::size_t c = 0; c < C; ++c)
            gi[0]->at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * gs;
        }
      });
}

/// Row-wise maximum of a rank-2 tensor, shape (R). Ties route the gradient
/// to the first maximal column.
template <typename T>
Var<T> max_rows(Var<T> x) {
  detail::require_rank("max_rows", x, 2);
  auto argmax = [](const Tensor<T>& a, std::size_t r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < a.dim(1); ++c)
      if (a.at(r, c) > a.at(r, best)) best = c;
    return best;
  };
  return x.tape->record(
      "max_rows", {x},
      [argmax](const auto& in) {
        const Tensor<T>& a = *in[0];
        Tensor<T> out({a.dim(0)});
        for (std::size_t r = 0; r < a.dim(0); ++r) out[r] = a.at(r, argmax(a, r));
        return out;
      },
      [argmax](const Tensor<T>& g, const auto& in, const Tensor<T>&,
               std::vector<Tensor<T>*>& gi) {
        if (!gi[0]) return;
        const Tensor<T>& a = *in[0];
        for (std::size_t r = 0; r < a.dim(0); ++r) gi[0]->at(r, argmax(a, r)) += g[r];
      });
}

/// Picks x[r, index[r]] for each row r; shape (R).
template <typename T>
Var<T> gather(Var<T> x, std::vector<std::size_t> index) {
  detail::require_rank("gather", x, 2);
  if (index.size() != x.shape()[0]) {
    throw ShapeError("gather: " + std::to_string(index.size()) + " indices for " +
                     std::to_string(x.shape()[0]) + " rows");
  }
  for (std::size_t c : index) {
    if (c >= x.shape()[1]) throw ShapeError("gather: column index out of range");
  }
  return x.tape->record(
      "gather", {x},
      [index](const auto& in) {
        Tensor<T> out({index.size()});
        for (std::size_t r = 0; r < index.size(); ++r) out[r] = in[0]->at(r, index[r]);
        return out;
      },
      [index](const Tensor<T>& g, const auto&, const Tensor<T>&, std::vector<Tensor<T>*>& gi) {
        if (!gi[0]) return;
        for (std::size_t r = 0; r < index.size(); ++r) gi[0]->at(r, index[r]) += g[r];
      });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  if (shape_numel(shape) != x.value().size()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return x.tape->record(
      "reshape", {x}, [shape](const auto& in) { return in[0]->reshaped(shape); },
      [](const Tensor<T>& g, const auto&, const Tensor<T>&, std::vector<Tensor<T>*>& gi) {
        if (!gi[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
      });
}

/// Flattens all axes after the first: (B, ...) -> (B, rest).
template <typename T>
Var<T> flatten(Var<T> x) {
  const std::size_t batch = x.shape().at(0);
  return reshape(x, Shape{batch, x.value().size() / batch});
}

/// Columns [begin, end) of a rank-2 tensor.
template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end) {
  detail::require_rank("slice_cols", x, 2);
  if (begin >= end || end > x.shape()[1]) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + shape_str(x.shape()));
  }
  return x.tape->record(
      "slice_cols", {x},
      [begin, end](const auto& in) {
        const Tensor<T>& a = *in[0];
        Tensor<T> out({a.dim(0), end - begin});
        for (std::size_t r = 0; r < a.dim(0); ++r)
          for (std::size_t c = begin; c < end; ++c) out.at(r, c - begin) = a.at(r, c);
        return out;
      },
      [begin, end](const Tensor<T>& g, const auto&, const Tensor<T>&,
                   std::vector<Tensor<T>*>& gi) {
        if (!gi[0]) return;
        for (std::size_t r = 0; r < g.dim(0); ++r)
          for (std::size_t c = begin; c < end; ++c) gi[0]->at(r, c) += g.at(r, c - begin);
      });
}

/// Concatenates rank-2 tensors along columns.
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  std::size_t rows = parts.front().shape().at(0), cols = 0;
  for (const Var<T>& p : parts) {
    detail::require_rank("concat_cols", p, 2);
    if (p.shape()[0] != rows || p.tape != parts.front().tape) {
      throw ShapeError("concat_cols: row count mismatch " + shape_str(p.shape()));
    }
    cols += p.shape()[1];
  }
  return parts.front().tape->record(
      "concat_cols", parts,
      [rows, cols](const auto& in) {
        Tensor<T> out({rows, cols});
        std::size_t off = 0;
        for (const Tensor<T>* a : in) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < a->dim(1); ++c) out.at(r, off + c) = a->at(r, c);
          off += a->dim(1);
        }
        return out;
      },
      [rows](const Tensor<T>& g, const auto& in, const Tensor<T>&,
             std::vector<Tensor<T>*>& gi) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          const std::size_t w = in[k]->dim(1);
          if (gi[k])
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < w; ++c) gi[k]->at(r, c) += g.at(r, off + c);
          off += w;
        }
      });
}

/// Fully-connected layer: x (B, I), weight (O, I), bias (O) -> (B, O).
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  Tape<T>& tape = detail::tape_of("linear", {x, weight, bias});
  detail::require_rank("linear", x, 2);
  detail::require_rank("linear", weight, 2);
  detail::require_rank("linear", bias, 1);
  if (x.shape()[1] != weight.shape()[1] || bias.shape()[0] != weight.shape()[0]) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  return tape.record(
      "linear", {x, weight, bias},
      [](const auto& in) {
        const Tensor<T>& a = *in[0];
        const Tensor<T>& w = *in[1];
        const Tensor<T>& b = *in[2];
        const std::size_t B = a.dim(0), I = a.dim(1), O = w.dim(0);
        Tensor<T> out({B, O});
        for (std::size_t r = 0; r < B; ++r) {
          const T* xr = a.data() + r * I;
          for (std::size_t o = 0; o < O; ++o) {
            const T* wr = w.data() + o * I;
            T s = b[o];
            for (std::size_t i = 0; i < I; ++i) s += wr[i] * xr[i];
            out.at(r, o) = s;
          }
        }
        return out;
      },
      [](const Tensor<T>& g, const auto& in, const Tensor<T>&, std::vector<Tensor<T>*>& gi) {
        const Tensor<T>& a = *in[0];
        const Tensor<T>& w = *in[1];
        const std::size_t B = a.dim(0), I = a.dim(1), O = w.dim(0);
        for (std::size_t r = 0; r < B; ++r) {
          for (std::size_t o = 0; o < O; ++o) {
            const T go = g.at(r, o);
            if (gi[0]) {
              T* dx = gi[0]->data() + r * I;
              const T* wr = w.data() + o * I;
              for (std::size_t i = 0; i < I; ++i) dx[i] += go * wr[i];
            }
            if (gi[1]) {
              T* dw = gi[1]->data() + o * I;
              const T* xr = a.data() + r * I;
              for (std::size_t i = 0; i < I; ++i) dw[i] += go * xr[i];
            }
            if (gi[2]) (*gi[2])[o] += go;
          }
        }
      });
}

/// 2-D convolution (cross-correlation): x (B, C, H, W), weight (F, C, KH, KW),
/// bias (F) -> (B, F, OH, OW) with OH = (H + 2 pad - KH) / stride + 1.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t pad) {
  Tape<T>& tape = detail::tape_of("conv2d", {x, weight, bias});
  detail::require_rank("conv2d", x, 4);
  detail::require_rank("conv2d", weight, 4);
  detail::require_rank("conv2d", bias, 1);
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (xs[1] != ws[1] || bias.shape()[0] != ws[0] || xs[2] + 2 * pad < ws[2] ||
      xs[3] + 2 * pad < ws[3]) {
    throw ShapeError("conv2d: input " + shape_str(xs) + ", weight " + shape_str(ws) +
                     ", bias " + shape_str(bias.shape()) + ", padding " + std::to_string(pad));
  }
  detail::ConvGeometry geo{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], stride, pad, 0, 0};
  geo.out_h = (geo.height + 2 * pad - geo.kh) / stride + 1;
  geo.out_w = (geo.width + 2 * pad - geo.kw) / stride + 1;

  return tape.record(
      "conv2d", {x, weight, bias},
      [geo](const auto& in) {
        const Tensor<T>& a = *in[0];
        const Tensor<T>& w = *in[1];
        const Tensor<T>& b = *in[2];
        const std::size_t K = geo.patch(), P = geo.pixels();
        const std::size_t image = geo.channels * geo.height * geo.width;
        Tensor<T> out({geo.batch, geo.filters, geo.out_h, geo.out_w});
        std::vector<T> col(K * P);
        for (std::size_t n = 0; n < geo.batch; ++n) {
          detail::im2col(geo, a.data() + n * image, col.data());
          T* o = out.data() + n * geo.filters * P;
          for (std::size_t f = 0; f < geo.filters; ++f) {
            T* of = o + f * P;
            std::fill(of, of + P, b[f]);
            const T* wf = w.data() + f * K;
            for (std::size_t k = 0; k < K; ++k) {
              const T wk = wf[k];
              const T* ck = col.data() + k * P;
              for (std::size_t p = 0; p < P; ++p) of[p] += wk * ck[p];
            }
          }
        }
        return out;
      },
      [geo](const Tensor<T>& g, const auto& in, const Tensor<T>&, std::vector<Tensor<T>*>& gi) {
        const Tensor<T>& a = *in[0];
        const Tensor<T>& w = *in[1];
        const std::size_t K = geo.patch(), P = geo.pixels();
        const std::size_t image = geo.channels * geo.height * geo.width;
        std::vector<T> col(K * P), dcol;
        if (gi[0]) dcol.resize(K * P);
        for (std::size_t n = 0; n < geo.batch; ++n) {
          const T* gn = g.data() + n * geo.filters * P;
          if (gi[2]) {
            for (std::size_t f = 0; f < geo.filters; ++f) {
              T s = 0;
              for (std::size_t p = 0; p < P; ++p) s += gn[f * P + p];
              (*gi[2])[f] += s;
            }
          }
          if (gi[1]) {
            detail::im2col(geo, a.data() + n * image, col.data());
            for (std::size_t f = 0; f < geo.filters; ++f) {
              const T* gf = gn + f * P;
              T* dw = gi[1]->data() + f * K;
              for (std::size_t k = 0; k < K; ++k) {
                const T* ck = col.data() + k * P;
                T s = 0;
                for (std::size_t p = 0; p < P; ++p) s += gf[p] * ck[p];
                dw[k] += s;
              }
            }
          }
          if (gi[0]) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            for (std::size_t f = 0; f < geo.filters; ++f) {
              const T* gf = gn + f * P;
              const T* wf = w.data() + f * K;
              for (std::size_t k = 0; k < K; ++k) {
                const T wk = wf[k];
                T* dk = dcol.data() + k * P;
                for (std::size_t p = 0; p < P; ++p) dk[p] += wk * gf[p];
              }
            }
            detail::col2im_add(geo, dcol.data(), gi[0]->data() + n * image);
          }
        }
      });
}

/// Mean negative log-likelihood of `labels` under softmax(scores).
template <typename T>
Var<T> cross_entropy(Var<T> scores, const std::vector<std::size_t>& labels) {
  return neg(mean(gather(log_softmax(scores), labels)));
}

}  // namespace ecoc::ag

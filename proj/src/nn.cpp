#include "seilab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "seilab/parallel.hpp"
#include "seilab/rng.hpp"

namespace seilab::nn {

namespace {

using json = nlohmann::json;

constexpr double kBnEpsilon = 1e-5;
constexpr double kBnMomentum = 0.9;

void check_finite(const std::vector<double>& v, const std::string& where) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw processing_error("non-finite value in " + where);
    }
  }
}

struct PadInfo {
  int out_h, out_w, pad_top, pad_left;
};

PadInfo conv_geometry(int h, int w, const LayerSpec& s) {
  PadInfo p{};
  const int kh = s.kernel[0], kw = s.kernel[1];
  const int sh = s.stride[0], sw = s.stride[1];
  if (s.padding == Padding::same) {
    p.out_h = (h + sh - 1) / sh;
    p.out_w = (w + sw - 1) / sw;
    const int pad_h = std::max((p.out_h - 1) * sh + kh - h, 0);
    const int pad_w = std::max((p.out_w - 1) * sw + kw - w, 0);
    p.pad_top = pad_h / 2;
    p.pad_left = pad_w / 2;
  } else {
    require(h >= kh && w >= kw, "valid conv kernel larger than input");
    p.out_h = (h - kh) / sh + 1;
    p.out_w = (w - kw) / sw + 1;
  }
  return p;
}

}  // namespace

LayerSpec LayerSpec::Dense(int units, Activation act) {
  LayerSpec s{LayerKind::dense};
  s.units = units;
  s.activation = act;
  return s;
}
LayerSpec LayerSpec::Conv2d(int filters, std::array<int, 2> kernel,
                            std::array<int, 2> stride, Activation act,
                            Padding pad) {
  LayerSpec s{LayerKind::conv2d};
  s.filters = filters;
  s.kernel = kernel;
  s.stride = stride;
  s.activation = act;
  s.padding = pad;
  return s;
}
LayerSpec LayerSpec::Conv2dTranspose(int filters, std::array<int, 2> kernel,
                                     std::array<int, 2> stride,
                                     Activation act) {
  LayerSpec s{LayerKind::conv2d_transpose};
  s.filters = filters;
  s.kernel = kernel;
  s.stride = stride;
  s.activation = act;
  return s;
}
LayerSpec LayerSpec::MaxPool(std::array<int, 2> window,
                             std::array<int, 2> stride, Activation act) {
  LayerSpec s{LayerKind::maxpool};
  s.kernel = window;
  s.stride = stride;
  s.activation = act;
  return s;
}
LayerSpec LayerSpec::Upsample(std::array<int, 2> factor) {
  LayerSpec s{LayerKind::upsample};
  s.kernel = factor;
  s.stride = factor;
  return s;
}
LayerSpec LayerSpec::Flatten() { return LayerSpec{LayerKind::flatten}; }
LayerSpec LayerSpec::BatchNorm(Activation act) {
  LayerSpec s{LayerKind::batchnorm};
  s.activation = act;
  return s;
}

// ---------------------------------------------------------------------------
// layer implementations
// ---------------------------------------------------------------------------

namespace {

class LayerImpl {
 public:
  explicit LayerImpl(const LayerSpec& spec) : spec_(spec) {}
  virtual ~LayerImpl() = default;

  virtual std::vector<int> out_shape(const std::vector<int>& in) const = 0;
  virtual void forward(const Tensor& in, Tensor& out, bool training) = 0;
  virtual void backward(const Tensor& in, const Tensor& gout,
                        Tensor& gin) = 0;

  virtual std::int64_t param_count() const { return 0; }
  virtual std::int64_t state_count() const { return 0; }
  virtual void bind(double* params, double* grads, double* state) {
    (void)params;
    (void)grads;
    (void)state;
  }
  virtual void init(Rng& rng) { (void)rng; }
  virtual void mark_weights(std::vector<bool>::iterator mask) const {
    (void)mask;
  }

 protected:
  LayerSpec spec_;
};

class DenseLayer : public LayerImpl {
 public:
  DenseLayer(const LayerSpec& spec, const std::vector<int>& in_shape)
      : LayerImpl(spec) {
    require(in_shape.size() == 1, "dense layer expects flat input");
    require(spec.units > 0, "dense layer needs units > 0");
    in_ = in_shape[0];
    out_ = spec.units;
  }

  std::vector<int> out_shape(const std::vector<int>&) const override {
    return {out_};
  }
  std::int64_t param_count() const override {
    return static_cast<std::int64_t>(in_) * out_ + out_;
  }
  void bind(double* p, double* g, double*) override {
    w_ = p;
    b_ = p + static_cast<std::int64_t>(in_) * out_;
    gw_ = g;
    gb_ = g + static_cast<std::int64_t>(in_) * out_;
  }
  void init(Rng& rng) override {
    const double lim = std::sqrt(6.0 / in_);
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(in_) * out_; ++i) {
      w_[i] = rng.uniform(-lim, lim);
    }
    for (int i = 0; i < out_; ++i) b_[i] = 0.0;
  }
  void mark_weights(std::vector<bool>::iterator mask) const override {
    std::fill(mask, mask + static_cast<std::int64_t>(in_) * out_, true);
  }

  void forward(const Tensor& in, Tensor& out, bool) override {
    const int n = in.batch();
    parallel::parallel_for(n, [&](std::int64_t s) {
      const double* x = in.data.data() + s * in_;
      double* y = out.data.data() + s * out_;
      for (int u = 0; u < out_; ++u) {
        const double* wr = w_ + static_cast<std::int64_t>(u) * in_;
        double acc = b_[u];
        for (int d = 0; d < in_; ++d) acc += wr[d] * x[d];
        y[u] = acc;
      }
    });
  }

  void backward(const Tensor& in, const Tensor& gout, Tensor& gin) override {
    const int n = in.batch();
    parallel::parallel_for(out_, [&](std::int64_t u) {
      double* gw = gw_ + u * in_;
      double gb = 0.0;
      for (int s = 0; s < n; ++s) {
        const double g = gout.data[static_cast<size_t>(s) * out_ + static_cast<size_t>(u)];
        const double* x = in.data.data() + static_cast<std::int64_t>(s) * in_;
        gb += g;
        for (int d = 0; d < in_; ++d) gw[d] += g * x[d];
      }
      gb_[u] += gb;
    });
    parallel::parallel_for(n, [&](std::int64_t s) {
      const double* g = gout.data.data() + s * out_;
      double* gx = gin.data.data() + s * in_;
      for (int u = 0; u < out_; ++u) {
        const double* wr = w_ + static_cast<std::int64_t>(u) * in_;
        const double gu = g[u];
        for (int d = 0; d < in_; ++d) gx[d] += gu * wr[d];
      }
    });
  }

 private:
  int in_ = 0, out_ = 0;
  double *w_ = nullptr, *b_ = nullptr, *gw_ = nullptr, *gb_ = nullptr;
};

class Conv2dLayer : public LayerImpl {
 public:
  Conv2dLayer(const LayerSpec& spec, const std::vector<int>& in_shape)
      : LayerImpl(spec) {
    require(in_shape.size() == 3, "conv2d expects [C,H,W] input");
    require(spec.filters > 0, "conv2d needs filters > 0");
    require(spec.kernel[0] > 0 && spec.kernel[1] > 0, "bad kernel");
    require(spec.stride[0] > 0 && spec.stride[1] > 0, "bad stride");
    c_ = in_shape[0];
    h_ = in_shape[1];
    w_in_ = in_shape[2];
    f_ = spec.filters;
    geo_ = conv_geometry(h_, w_in_, spec);
  }

  std::vector<int> out_shape(const std::vector<int>&) const override {
    return {f_, geo_.out_h, geo_.out_w};
  }
  std::int64_t param_count() const override {
    return static_cast<std::int64_t>(f_) * c_ * spec_.kernel[0] *
               spec_.kernel[1] +
           f_;
  }
  void bind(double* p, double* g, double*) override {
    const std::int64_t wn = param_count() - f_;
    w_ = p;
    b_ = p + wn;
    gw_ = g;
    gb_ = g + wn;
  }
  void init(Rng& rng) override {
    const std::int64_t wn = param_count() - f_;
    const double lim =
        std::sqrt(6.0 / (static_cast<double>(c_) * spec_.kernel[0] *
                         spec_.kernel[1]));
    for (std::int64_t i = 0; i < wn; ++i) w_[i] = rng.uniform(-lim, lim);
    for (int i = 0; i < f_; ++i) b_[i] = 0.0;
  }
  void mark_weights(std::vector<bool>::iterator mask) const override {
    std::fill(mask, mask + (param_count() - f_), true);
  }

  void forward(const Tensor& in, Tensor& out, bool) override {
    const int n = in.batch();
    const int kh = spec_.kernel[0], kw = spec_.kernel[1];
    const int sh = spec_.stride[0], sw = spec_.stride[1];
    const std::int64_t in_stride = static_cast<std::int64_t>(c_) * h_ * w_in_;
    const std::int64_t out_stride =
        static_cast<std::int64_t>(f_) * geo_.out_h * geo_.out_w;
    parallel::parallel_for(n, [&](std::int64_t s) {
      const double* x = in.data.data() + s * in_stride;
      double* y = out.data.data() + s * out_stride;
      for (int f = 0; f < f_; ++f) {
        double* yf = y + static_cast<std::int64_t>(f) * geo_.out_h * geo_.out_w;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(geo_.out_h) * geo_.out_w; ++i) {
          yf[i] = b_[f];
        }
        for (int c = 0; c < c_; ++c) {
          const double* xc = x + static_cast<std::int64_t>(c) * h_ * w_in_;
          const double* wfc = w_ + ((static_cast<std::int64_t>(f) * c_ + c) * kh) * kw;
          for (int oy = 0; oy < geo_.out_h; ++oy) {
            double* yrow = yf + static_cast<std::int64_t>(oy) * geo_.out_w;
            const int ih0 = oy * sh - geo_.pad_top;
            for (int i = 0; i < kh; ++i) {
              const int ih = ih0 + i;
              if (ih < 0 || ih >= h_) continue;
              const double* xrow = xc + static_cast<std::int64_t>(ih) * w_in_;
              const double* wrow = wfc + static_cast<std::int64_t>(i) * kw;
              for (int ox = 0; ox < geo_.out_w; ++ox) {
                const int iw0 = ox * sw - geo_.pad_left;
                const int j0 = std::max(0, -iw0);
                const int j1 = std::min(kw, w_in_ - iw0);
                double acc = 0.0;
                for (int j = j0; j < j1; ++j) acc += xrow[iw0 + j] * wrow[j];
                yrow[ox] += acc;
              }
            }
          }
        }
      }
    });
  }

  void backward(const Tensor& in, const Tensor& gout, Tensor& gin) override {
    const int n = in.batch();
    const int kh = spec_.kernel[0], kw = spec_.kernel[1];
    const int sh = spec_.stride[0], sw = spec_.stride[1];
    const std::int64_t in_stride = static_cast<std::int64_t>(c_) * h_ * w_in_;
    const std::int64_t out_stride =
        static_cast<std::int64_t>(f_) * geo_.out_h * geo_.out_w;

    // weight/bias grads: one thread owns one filter
    parallel::parallel_for(f_, [&](std::int64_t f) {
      double* gwf = gw_ + ((f * c_) * kh) * kw;
      double gb = 0.0;
      for (int s = 0; s < n; ++s) {
        const double* x = in.data.data() + s * in_stride;
        const double* gy =
            gout.data.data() + s * out_stride + f * geo_.out_h * geo_.out_w;
        for (int oy = 0; oy < geo_.out_h; ++oy) {
          const int ih0 = oy * sh - geo_.pad_top;
          const double* gyr = gy + static_cast<std::int64_t>(oy) * geo_.out_w;
          for (int ox = 0; ox < geo_.out_w; ++ox) {
            const double g = gyr[ox];
            if (g == 0.0) continue;
            const int iw0 = ox * sw - geo_.pad_left;
            for (int c = 0; c < c_; ++c) {
              const double* xc = x + static_cast<std::int64_t>(c) * h_ * w_in_;
              double* gwc = gwf + (static_cast<std::int64_t>(c) * kh) * kw;
              for (int i = 0; i < kh; ++i) {
                const int ih = ih0 + i;
                if (ih < 0 || ih >= h_) continue;
                const double* xrow = xc + static_cast<std::int64_t>(ih) * w_in_;
                double* gwr = gwc + static_cast<std::int64_t>(i) * kw;
                const int j0 = std::max(0, -iw0);
                const int j1 = std::min(kw, w_in_ - iw0);
                for (int j = j0; j < j1; ++j) gwr[j] += g * xrow[iw0 + j];
              }
            }
          }
        }
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(geo_.out_h) * geo_.out_w; ++i) {
          gb += gy[i];
        }
      }
      gb_[f] += gb;
    });

    // data grads: one thread owns one sample
    parallel::parallel_for(n, [&](std::int64_t s) {
      const double* gy = gout.data.data() + s * out_stride;
      double* gx = gin.data.data() + s * in_stride;
      for (int f = 0; f < f_; ++f) {
        const double* gyf = gy + static_cast<std::int64_t>(f) * geo_.out_h * geo_.out_w;
        for (int oy = 0; oy < geo_.out_h; ++oy) {
          const int ih0 = oy * sh - geo_.pad_top;
          const double* gyr = gyf + static_cast<std::int64_t>(oy) * geo_.out_w;
          for (int ox = 0; ox < geo_.out_w; ++ox) {
            const double g = gyr[ox];
            if (g == 0.0) continue;
            const int iw0 = ox * sw - geo_.pad_left;
            for (int c = 0; c < c_; ++c) {
              double* gxc = gx + static_cast<std::int64_t>(c) * h_ * w_in_;
              const double* wfc =
                  w_ + ((static_cast<std::int64_t>(f) * c_ + c) * kh) * kw;
              for (int i = 0; i < kh; ++i) {
                const int ih = ih0 + i;
                if (ih < 0 || ih >= h_) continue;
                double* gxr = gxc + static_cast<std::int64_t>(ih) * w_in_;
                const double* wrow = wfc + static_cast<std::int64_t>(i) * kw;
                const int j0 = std::max(0, -iw0);
                const int j1 = std::min(kw, w_in_ - iw0);
                for (int j = j0; j < j1; ++j) gxr[iw0 + j] += g * wrow[j];
              }
            }
          }
        }
      }
    });
  }

 private:
  int c_ = 0, h_ = 0, w_in_ = 0, f_ = 0;
  PadInfo geo_{};
  double *w_ = nullptr, *b_ = nullptr, *gw_ = nullptr, *gb_ = nullptr;
};

class ConvTransposeLayer : public LayerImpl {
 public:
  ConvTransposeLayer(const LayerSpec& spec, const std::vector<int>& in_shape)
      : LayerImpl(spec) {
    require(in_shape.size() == 3, "conv2d_transpose expects [C,H,W] input");
    require(spec.filters > 0, "conv2d_transpose needs filters > 0");
    c_ = in_shape[0];
    h_ = in_shape[1];
    w_in_ = in_shape[2];
    f_ = spec.filters;
    out_h_ = h_ * spec.stride[0];
    out_w_ = w_in_ * spec.stride[1];
    pad_top_ = std::max(spec.kernel[0] - spec.stride[0], 0) / 2;
    pad_left_ = std::max(spec.kernel[1] - spec.stride[1], 0) / 2;
  }

  std::vector<int> out_shape(const std::vector<int>&) const override {
    return {f_, out_h_, out_w_};
  }
  std::int64_t param_count() const override {
    return static_cast<std::int64_t>(c_) * f_ * spec_.kernel[0] *
               spec_.kernel[1] +
           f_;
  }
  void bind(double* p, double* g, double*) override {
    const std::int64_t wn = param_count() - f_;
    w_ = p;
    b_ = p + wn;
    gw_ = g;
    gb_ = g + wn;
  }
  void init(Rng& rng) override {
    const std::int64_t wn = param_count() - f_;
    const double lim =
        std::sqrt(6.0 / (static_cast<double>(c_) * spec_.kernel[0] *
                         spec_.kernel[1]));
    for (std::int64_t i = 0; i < wn; ++i) w_[i] = rng.uniform(-lim, lim);
    for (int i = 0; i < f_; ++i) b_[i] = 0.0;
  }
  void mark_weights(std::vector<bool>::iterator mask) const override {
    std::fill(mask, mask + (param_count() - f_), true);
  }

  void forward(const Tensor& in, Tensor& out, bool) override {
    const int n = in.batch();
    const int kh = spec_.kernel[0], kw = spec_.kernel[1];
    const int sh = spec_.stride[0], sw = spec_.stride[1];
    const std::int64_t in_stride = static_cast<std::int64_t>(c_) * h_ * w_in_;
    const std::int64_t out_stride = static_cast<std::int64_t>(f_) * out_h_ * out_w_;
    parallel::parallel_for(n, [&](std::int64_t s) {
      const double* x = in.data.data() + s * in_stride;
      double* y = out.data.data() + s * out_stride;
      for (int f = 0; f < f_; ++f) {
        double* yf = y + static_cast<std::int64_t>(f) * out_h_ * out_w_;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(out_h_) * out_w_; ++i) {
          yf[i] = b_[f];
        }
        for (int c = 0; c < c_; ++c) {
          const double* xc = x + static_cast<std::int64_t>(c) * h_ * w_in_;
          const double* wcf =
              w_ + ((static_cast<std::int64_t>(c) * f_ + f) * kh) * kw;
          for (int hh = 0; hh < h_; ++hh) {
            for (int ww = 0; ww < w_in_; ++ww) {
              const double v = xc[static_cast<std::int64_t>(hh) * w_in_ + ww];
              if (v == 0.0) continue;
              for (int i = 0; i < kh; ++i) {
                const int oy = hh * sh + i - pad_top_;
                if (oy < 0 || oy >= out_h_) continue;
                double* yrow = yf + static_cast<std::int64_t>(oy) * out_w_;
                const double* wrow = wcf + static_cast<std::int64_t>(i) * kw;
                for (int j = 0; j < kw; ++j) {
                  const int ox = ww * sw + j - pad_left_;
                  if (ox < 0 || ox >= out_w_) continue;
                  yrow[ox] += v * wrow[j];
                }
              }
            }
          }
        }
      }
    });
  }

  void backward(const Tensor& in, const Tensor& gout, Tensor& gin) override {
    const int n = in.batch();
    const int kh = spec_.kernel[0], kw = spec_.kernel[1];
    const int sh = spec_.stride[0], sw = spec_.stride[1];
    const std::int64_t in_stride = static_cast<std::int64_t>(c_) * h_ * w_in_;
    const std::int64_t out_stride = static_cast<std::int64_t>(f_) * out_h_ * out_w_;

    parallel::parallel_for(f_, [&](std::int64_t f) {
      double gb = 0.0;
      for (int s = 0; s < n; ++s) {
        const double* x = in.data.data() + s * in_stride;
        const double* gy = gout.data.data() + s * out_stride + f * out_h_ * out_w_;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(out_h_) * out_w_; ++i) {
          gb += gy[i];
        }
        for (int c = 0; c < c_; ++c) {
          const double* xc = x + static_cast<std::int64_t>(c) * h_ * w_in_;
          double* gwcf = gw_ + ((static_cast<std::int64_t>(c) * f_ + f) * kh) * kw;
          for (int hh = 0; hh < h_; ++hh) {
            for (int ww = 0; ww < w_in_; ++ww) {
              const double v = xc[static_cast<std::int64_t>(hh) * w_in_ + ww];
              if (v == 0.0) continue;
              for (int i = 0; i < kh; ++i) {
                const int oy = hh * sh + i - pad_top_;
                if (oy < 0 || oy >= out_h_) continue;
                const double* gyr = gy + static_cast<std::int64_t>(oy) * out_w_;
                double* gwr = gwcf + static_cast<std::int64_t>(i) * kw;
                for (int j = 0; j < kw; ++j) {
                  const int ox = ww * sw + j - pad_left_;
                  if (ox < 0 || ox >= out_w_) continue;
                  gwr[j] += v * gyr[ox];
                }
              }
            }
          }
        }
      }
      gb_[f] += gb;
    });

    parallel::parallel_for(n, [&](std::int64_t s) {
      const double* gy = gout.data.data() + s * out_stride;
      double* gx = gin.data.data() + s * in_stride;
      for (int c = 0; c < c_; ++c) {
        double* gxc = gx + static_cast<std::int64_t>(c) * h_ * w_in_;
        for (int f = 0; f < f_; ++f) {
          const double* gyf = gy + static_cast<std::int64_t>(f) * out_h_ * out_w_;
          const double* wcf =
              w_ + ((static_cast<std::int64_t>(c) * f_ + f) * kh) * kw;
          for (int hh = 0; hh < h_; ++hh) {
            for (int ww = 0; ww < w_in_; ++ww) {
              double acc = 0.0;
              for (int i = 0; i < kh; ++i) {
                const int oy = hh * sh + i - pad_top_;
                if (oy < 0 || oy >= out_h_) continue;
                const double* gyr = gyf + static_cast<std::int64_t>(oy) * out_w_;
                const double* wrow = wcf + static_cast<std::int64_t>(i) * kw;
                for (int j = 0; j < kw; ++j) {
                  const int ox = ww * sw + j - pad_left_;
                  if (ox < 0 || ox >= out_w_) continue;
                  acc += gyr[ox] * wrow[j];
                }
              }
              gxc[static_cast<std::int64_t>(hh) * w_in_ + ww] += acc;
            }
          }
        }
      }
    });
  }

 private:
  int c_ = 0, h_ = 0, w_in_ = 0, f_ = 0;
  int out_h_ = 0, out_w_ = 0, pad_top_ = 0, pad_left_ = 0;
  double *w_ = nullptr, *b_ = nullptr, *gw_ = nullptr, *gb_ = nullptr;
};

class MaxPoolLayer : public LayerImpl {
 public:
  MaxPoolLayer(const LayerSpec& spec, const std::vector<int>& in_shape)
      : LayerImpl(spec) {
    require(in_shape.size() == 3, "maxpool expects [C,H,W] input");
    c_ = in_shape[0];
    h_ = in_shape[1];
    w_in_ = in_shape[2];
    out_h_ = h_ >= spec.kernel[0] ? (h_ - spec.kernel[0]) / spec.stride[0] + 1 : 1;
    out_w_ = w_in_ >= spec.kernel[1] ? (w_in_ - spec.kernel[1]) / spec.stride[1] + 1 : 1;
  }

  std::vector<int> out_shape(const std::vector<int>&) const override {
    return {c_, out_h_, out_w_};
  }

  void forward(const Tensor& in, Tensor& out, bool training) override {
    const int n = in.batch();
    const std::int64_t in_stride = static_cast<std::int64_t>(c_) * h_ * w_in_;
    const std::int64_t out_stride = static_cast<std::int64_t>(c_) * out_h_ * out_w_;
    if (training) {
      argmax_.assign(static_cast<size_t>(n) * static_cast<size_t>(out_stride), 0);
    }
    parallel::parallel_for(n, [&](std::int64_t s) {
      const double* x = in.data.data() + s * in_stride;
      double* y = out.data.data() + s * out_stride;
      std::int64_t* am = training ? argmax_.data() + s * out_stride : nullptr;
      std::int64_t o = 0;
      for (int c = 0; c < c_; ++c) {
        const double* xc = x + static_cast<std::int64_t>(c) * h_ * w_in_;
        for (int oy = 0; oy < out_h_; ++oy) {
          const int y0 = oy * spec_.stride[0];
          const int y1 = std::min(y0 + spec_.kernel[0], h_);
          for (int ox = 0; ox < out_w_; ++ox, ++o) {
            const int x0 = ox * spec_.stride[1];
            const int x1 = std::min(x0 + spec_.kernel[1], w_in_);
            double best = -INFINITY;
            std::int64_t best_i = 0;
            for (int yy = y0; yy < y1; ++yy) {
              for (int xx = x0; xx < x1; ++xx) {
                const std::int64_t idx = static_cast<std::int64_t>(yy) * w_in_ + xx;
                if (xc[idx] > best) {
                  best = xc[idx];
                  best_i = idx;
                }
              }
            }
            y[o] = best;
            if (am) am[o] = static_cast<std::int64_t>(c) * h_ * w_in_ + best_i;
          }
        }
      }
    });
  }

  void backward(const Tensor& in, const Tensor& gout, Tensor& gin) override {
    const int n = in.batch();
    const std::int64_t in_stride = static_cast<std::int64_t>(c_) * h_ * w_in_;
    const std::int64_t out_stride = static_cast<std::int64_t>(c_) * out_h_ * out_w_;
    parallel::parallel_for(n, [&](std::int64_t s) {
      const double* gy = gout.data.data() + s * out_stride;
      double* gx = gin.data.data() + s * in_stride;
      const std::int64_t* am = argmax_.data() + s * out_stride;
      for (std::int64_t o = 0; o < out_stride; ++o) gx[am[o]] += gy[o];
    });
  }

 private:
  int c_ = 0, h_ = 0, w_in_ = 0, out_h_ = 0, out_w_ = 0;
  std::vector<std::int64_t> argmax_;
};

class UpsampleLayer : public LayerImpl {
 public:
  UpsampleLayer(const LayerSpec& spec, const std::vector<int>& in_shape)
      : LayerImpl(spec) {
    require(in_shape.size() == 3, "upsample expects [C,H,W] input");
    require(spec.kernel[0] >= 1 && spec.kernel[1] >= 1, "bad upsample factor");
    c_ = in_shape[0];
    h_ = in_shape[1];
    w_in_ = in_shape[2];
  }

  std::vector<int> out_shape(const std::vector<int>&) const override {
    return {c_, h_ * spec_.kernel[0], w_in_ * spec_.kernel[1]};
  }

  void forward(const Tensor& in, Tensor& out, bool) override {
    const int n = in.batch();
    const int uh = spec_.kernel[0], uw = spec_.kernel[1];
    const int oh = h_ * uh, ow = w_in_ * uw;
    const std::int64_t in_stride = static_cast<std::int64_t>(c_) * h_ * w_in_;
    const std::int64_t out_stride = static_cast<std::int64_t>(c_) * oh * ow;
    parallel::parallel_for(n, [&](std::int64_t s) {
      const double* x = in.data.data() + s * in_stride;
      double* y = out.data.data() + s * out_stride;
      for (int c = 0; c < c_; ++c) {
        for (int oy = 0; oy < oh; ++oy) {
          const double* xrow =
              x + (static_cast<std::int64_t>(c) * h_ + oy / uh) * w_in_;
          double* yrow = y + (static_cast<std::int64_t>(c) * oh + oy) * ow;
          for (int ox = 0; ox < ow; ++ox) yrow[ox] = xrow[ox / uw];
        }
      }
    });
  }

  void backward(const Tensor& in, const Tensor& gout, Tensor& gin) override {
    const int n = in.batch();
    const int uh = spec_.kernel[0], uw = spec_.kernel[1];
    const int oh = h_ * uh, ow = w_in_ * uw;
    const std::int64_t in_stride = static_cast<std::int64_t>(c_) * h_ * w_in_;
    const std::int64_t out_stride = static_cast<std::int64_t>(c_) * oh * ow;
    parallel::parallel_for(n, [&](std::int64_t s) {
      const double* gy = gout.data.data() + s * out_stride;
      double* gx = gin.data.data() + s * in_stride;
      for (int c = 0; c < c_; ++c) {
        for (int oy = 0; oy < oh; ++oy) {
          const double* gyr = gy + (static_cast<std::int64_t>(c) * oh + oy) * ow;
          double* gxr = gx + (static_cast<std::int64_t>(c) * h_ + oy / uh) * w_in_;
          for (int ox = 0; ox < ow; ++ox) gxr[ox / uw] += gyr[ox];
        }
      }
    });
  }

 private:
  int c_ = 0, h_ = 0, w_in_ = 0;
};

class FlattenLayer : public LayerImpl {
 public:
  FlattenLayer(const LayerSpec& spec, const std::vector<int>& in_shape)
      : LayerImpl(spec) {
    flat_ = 1;
    for (int d : in_shape) flat_ *= d;
  }
  std::vector<int> out_shape(const std::vector<int>&) const override {
    return {static_cast<int>(flat_)};
  }
  void forward(const Tensor& in, Tensor& out, bool) override {
    out.data = in.data;
  }
  void backward(const Tensor&, const Tensor& gout, Tensor& gin) override {
    gin.data = gout.data;
  }

 private:
  std::int64_t flat_ = 0;
};

class BatchNormLayer : public LayerImpl {
 public:
  BatchNormLayer(const LayerSpec& spec, const std::vector<int>& in_shape)
      : LayerImpl(spec) {
    require(in_shape.size() == 3 || in_shape.size() == 1,
            "batchnorm expects [C,H,W] or flat input");
    if (in_shape.size() == 3) {
      ch_ = in_shape[0];
      spatial_ = static_cast<std::int64_t>(in_shape[1]) * in_shape[2];
    } else {
      ch_ = in_shape[0];
      spatial_ = 1;
    }
  }

  std::vector<int> out_shape(const std::vector<int>& in) const override {
    return in;
  }
  std::int64_t param_count() const override { return 2 * ch_; }
  std::int64_t state_count() const override { return 2 * ch_; }
  void bind(double* p, double* g, double* s) override {
    gamma_ = p;
    beta_ = p + ch_;
    ggamma_ = g;
    gbeta_ = g + ch_;
    run_mean_ = s;
    run_var_ = s + ch_;
  }
  void init(Rng&) override {
    for (int c = 0; c < ch_; ++c) {
      gamma_[c] = 1.0;
      beta_[c] = 0.0;
      run_mean_[c] = 0.0;
      run_var_[c] = 1.0;
    }
  }

  void forward(const Tensor& in, Tensor& out, bool training) override {
    const int n = in.batch();
    const std::int64_t stride = static_cast<std::int64_t>(ch_) * spatial_;
    const double m = static_cast<double>(n) * static_cast<double>(spatial_);
    if (training) {
      mean_.assign(static_cast<size_t>(ch_), 0.0);
      invstd_.assign(static_cast<size_t>(ch_), 0.0);
    }

    parallel::parallel_for(ch_, [&](std::int64_t c) {
      double mu, var;
      if (training) {
        double acc = 0.0;
        for (int s = 0; s < n; ++s) {
          const double* x = in.data.data() + s * stride + c * spatial_;
          for (std::int64_t i = 0; i < spatial_; ++i) acc += x[i];
        }
        mu = acc / m;
        double acc2 = 0.0;
        for (int s = 0; s < n; ++s) {
          const double* x = in.data.data() + s * stride + c * spatial_;
          for (std::int64_t i = 0; i < spatial_; ++i) {
            acc2 += (x[i] - mu) * (x[i] - mu);
          }
        }
        var = acc2 / m;
        run_mean_[c] = kBnMomentum * run_mean_[c] + (1.0 - kBnMomentum) * mu;
        run_var_[c] = kBnMomentum * run_var_[c] + (1.0 - kBnMomentum) * var;
        const double inv = 1.0 / std::sqrt(var + kBnEpsilon);
        mean_[static_cast<size_t>(c)] = mu;
        invstd_[static_cast<size_t>(c)] = inv;
      } else {
        // frozen statistics: a pure affine map, no state is touched
        mu = run_mean_[c];
        var = run_var_[c];
      }
      const double inv = 1.0 / std::sqrt(var + kBnEpsilon);
      for (int s = 0; s < n; ++s) {
        const double* x = in.data.data() + s * stride + c * spatial_;
        double* y = out.data.data() + s * stride + c * spatial_;
        const double g = gamma_[c], b = beta_[c];
        for (std::int64_t i = 0; i < spatial_; ++i) {
          y[i] = g * (x[i] - mu) * inv + b;
        }
      }
    });
  }

  void backward(const Tensor& in, const Tensor& gout, Tensor& gin) override {
    const int n = in.batch();
    const std::int64_t stride = static_cast<std::int64_t>(ch_) * spatial_;
    const double m = static_cast<double>(n) * static_cast<double>(spatial_);
    parallel::parallel_for(ch_, [&](std::int64_t c) {
      const double mu = mean_[static_cast<size_t>(c)];
      const double inv = invstd_[static_cast<size_t>(c)];
      double sum_g = 0.0, sum_gx = 0.0;
      for (int s = 0; s < n; ++s) {
        const double* x = in.data.data() + s * stride + c * spatial_;
        const double* gy = gout.data.data() + s * stride + c * spatial_;
        for (std::int64_t i = 0; i < spatial_; ++i) {
          sum_g += gy[i];
          sum_gx += gy[i] * (x[i] - mu) * inv;
        }
      }
      ggamma_[c] += sum_gx;
      gbeta_[c] += sum_g;
      const double g = gamma_[c];
      for (int s = 0; s < n; ++s) {
        const double* x = in.data.data() + s * stride + c * spatial_;
        const double* gy = gout.data.data() + s * stride + c * spatial_;
        double* gx = gin.data.data() + s * stride + c * spatial_;
        for (std::int64_t i = 0; i < spatial_; ++i) {
          const double xhat = (x[i] - mu) * inv;
          gx[i] += g * inv * (gy[i] - sum_g / m - xhat * sum_gx / m);
        }
      }
    });
  }

 private:
  int ch_ = 0;
  std::int64_t spatial_ = 0;
  double *gamma_ = nullptr, *beta_ = nullptr;
  double *ggamma_ = nullptr, *gbeta_ = nullptr;
  double *run_mean_ = nullptr, *run_var_ = nullptr;
  std::vector<double> mean_, invstd_;
};

std::unique_ptr<LayerImpl> make_layer(const LayerSpec& spec,
                                      const std::vector<int>& in_shape) {
  switch (spec.kind) {
    case LayerKind::dense:
      return std::make_unique<DenseLayer>(spec, in_shape);
    case LayerKind::conv2d:
      return std::make_unique<Conv2dLayer>(spec, in_shape);
    case LayerKind::conv2d_transpose:
      return std::make_unique<ConvTransposeLayer>(spec, in_shape);
    case LayerKind::maxpool:
      return std::make_unique<MaxPoolLayer>(spec, in_shape);
    case LayerKind::upsample:
      return std::make_unique<UpsampleLayer>(spec, in_shape);
    case LayerKind::flatten:
      return std::make_unique<FlattenLayer>(spec, in_shape);
    case LayerKind::batchnorm:
      return std::make_unique<BatchNormLayer>(spec, in_shape);
  }
  throw validation_error("unknown layer kind");
}

void validate_activation(const LayerSpec& spec) {
  if (spec.activation == Activation::softmax) {
    require(spec.kind == LayerKind::dense,
            "softmax is only legal on dense layers");
  }
  if (spec.kind == LayerKind::flatten || spec.kind == LayerKind::upsample) {
    require(spec.activation == Activation::none,
            "flatten/upsample layers take no activation");
  }
}

void apply_activation(Activation act, Tensor& t, int per_sample) {
  switch (act) {
    case Activation::none:
      return;
    case Activation::relu:
      for (double& v : t.data) v = v > 0.0 ? v : 0.0;
      return;
    case Activation::sigmoid:
      for (double& v : t.data) v = 1.0 / (1.0 + std::exp(-v));
      return;
    case Activation::softmax: {
      const int n = t.batch();
      for (int s = 0; s < n; ++s) {
        double* row = t.data.data() + static_cast<std::int64_t>(s) * per_sample;
        double mx = row[0];
        for (int i = 1; i < per_sample; ++i) mx = std::max(mx, row[i]);
        double sum = 0.0;
        for (int i = 0; i < per_sample; ++i) {
          row[i] = std::exp(row[i] - mx);
          sum += row[i];
        }
        for (int i = 0; i < per_sample; ++i) row[i] /= sum;
      }
      return;
    }
  }
}

// activation backward, in place on g, given the post-activation output y
void activation_backward(Activation act, const Tensor& y, Tensor& g,
                         int per_sample) {
  switch (act) {
    case Activation::none:
      return;
    case Activation::relu:
      for (size_t i = 0; i < g.data.size(); ++i) {
        if (y.data[i] <= 0.0) g.data[i] = 0.0;
      }
      return;
    case Activation::sigmoid:
      for (size_t i = 0; i < g.data.size(); ++i) {
        g.data[i] *= y.data[i] * (1.0 - y.data[i]);
      }
      return;
    case Activation::softmax: {
      const int n = g.batch();
      for (int s = 0; s < n; ++s) {
        const double* yr = y.data.data() + static_cast<std::int64_t>(s) * per_sample;
        double* gr = g.data.data() + static_cast<std::int64_t>(s) * per_sample;
        double dot = 0.0;
        for (int i = 0; i < per_sample; ++i) dot += gr[i] * yr[i];
        for (int i = 0; i < per_sample; ++i) gr[i] = yr[i] * (gr[i] - dot);
      }
      return;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

struct Network::Impl {
  std::vector<std::unique_ptr<LayerImpl>> layers;
  std::vector<std::vector<int>> shapes;  // per-sample, shapes[0] = input
  std::vector<Tensor> acts;              // acts[i] = output of layer i-1
  std::vector<double> state;             // batchnorm running stats
};

Network::~Network() = default;

Network::Network(std::vector<int> input_shape, std::vector<LayerSpec> specs,
                 std::uint64_t seed)
    : input_shape_(std::move(input_shape)),
      specs_(std::move(specs)),
      impl_(std::make_unique<Impl>()) {
  require(!input_shape_.empty(), "network needs an input shape");
  require(!specs_.empty(), "network needs at least one layer");

  impl_->shapes.push_back(input_shape_);
  std::int64_t total_params = 0, total_state = 0;
  for (const auto& spec : specs_) {
    validate_activation(spec);
    auto layer = make_layer(spec, impl_->shapes.back());
    impl_->shapes.push_back(layer->out_shape(impl_->shapes.back()));
    total_params += layer->param_count();
    total_state += layer->state_count();
    impl_->layers.push_back(std::move(layer));
  }
  output_shape_ = impl_->shapes.back();

  params_.assign(static_cast<size_t>(total_params), 0.0);
  grads_.assign(static_cast<size_t>(total_params), 0.0);
  weight_mask_.assign(static_cast<size_t>(total_params), false);
  impl_->state.assign(static_cast<size_t>(total_state), 0.0);

  Rng rng(derive_seed(seed, 0x696e6974ULL));
  std::int64_t p_off = 0, s_off = 0;
  for (size_t i = 0; i < impl_->layers.size(); ++i) {
    auto& layer = impl_->layers[i];
    layer->bind(params_.data() + p_off, grads_.data() + p_off,
                impl_->state.data() + s_off);
    layer->init(rng);
    layer->mark_weights(weight_mask_.begin() + p_off);
    p_off += layer->param_count();
    s_off += layer->state_count();
  }
}

std::vector<std::vector<int>> Network::shape_schedule() const {
  return impl_->shapes;
}

void Network::zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

Tensor Network::forward(const Tensor& batch, bool training) {
  require(batch.shape.size() == input_shape_.size() + 1,
          "batch rank mismatch at layer 0");
  for (size_t d = 0; d < input_shape_.size(); ++d) {
    if (batch.shape[d + 1] != input_shape_[d]) {
      throw validation_error("input shape mismatch at layer 0");
    }
  }
  const int n = batch.batch();
  impl_->acts.assign(impl_->layers.size() + 1, Tensor{});
  impl_->acts[0] = batch;

  for (size_t i = 0; i < impl_->layers.size(); ++i) {
    std::vector<int> out_shape = impl_->shapes[i + 1];
    out_shape.insert(out_shape.begin(), n);
    Tensor out(out_shape);
    impl_->layers[i]->forward(impl_->acts[i], out, training);
    apply_activation(specs_[i].activation, out,
                     static_cast<int>(Tensor::numel_of(impl_->shapes[i + 1])));
    for (double v : out.data) {
      if (!std::isfinite(v)) {
        throw processing_error("non-finite output at layer " +
                               std::to_string(i));
      }
    }
    impl_->acts[i + 1] = std::move(out);
  }
  if (!training) {
    Tensor result = std::move(impl_->acts.back());
    impl_->acts.clear();
    return result;
  }
  return impl_->acts.back();
}

Tensor Network::infer(const Tensor& batch) const {
  require(batch.shape.size() == input_shape_.size() + 1,
          "batch rank mismatch at layer 0");
  for (size_t d = 0; d < input_shape_.size(); ++d) {
    if (batch.shape[d + 1] != input_shape_[d]) {
      throw validation_error("input shape mismatch at layer 0");
    }
  }
  const int n = batch.batch();
  Tensor cur = batch;
  for (size_t i = 0; i < impl_->layers.size(); ++i) {
    std::vector<int> out_shape = impl_->shapes[i + 1];
    out_shape.insert(out_shape.begin(), n);
    Tensor out(out_shape);
    // layers leave all member state untouched when training is false
    impl_->layers[i]->forward(cur, out, false);
    apply_activation(specs_[i].activation, out,
                     static_cast<int>(Tensor::numel_of(impl_->shapes[i + 1])));
    for (double v : out.data) {
      if (!std::isfinite(v)) {
        throw processing_error("non-finite output at layer " +
                               std::to_string(i));
      }
    }
    cur = std::move(out);
  }
  return cur;
}

Tensor Network::backward(const Tensor& output_grad) {
  require(!impl_->acts.empty(), "backward requires a cached forward pass");
  Tensor g = output_grad;
  for (int i = static_cast<int>(impl_->layers.size()) - 1; i >= 0; --i) {
    activation_backward(
        specs_[static_cast<size_t>(i)].activation, impl_->acts[static_cast<size_t>(i) + 1], g,
        static_cast<int>(Tensor::numel_of(impl_->shapes[static_cast<size_t>(i) + 1])));
    std::vector<int> in_shape = impl_->shapes[static_cast<size_t>(i)];
    in_shape.insert(in_shape.begin(), g.batch());
    Tensor gin(in_shape);
    impl_->layers[static_cast<size_t>(i)]->backward(impl_->acts[static_cast<size_t>(i)], g, gin);
    g = std::move(gin);
  }
  check_finite(grads_, "parameter gradients");
  return g;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

double mse(const Tensor& pred, const Tensor& target) {
  require(pred.shape == target.shape, "mse shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.data.size());
}

Tensor mse_grad(const Tensor& pred, const Tensor& target) {
  require(pred.shape == target.shape, "mse shape mismatch");
  Tensor g(pred.shape);
  const double s = 2.0 / static_cast<double>(pred.data.size());
  for (size_t i = 0; i < pred.data.size(); ++i) {
    g.data[i] = s * (pred.data[i] - target.data[i]);
  }
  return g;
}

double cce(const Tensor& pred, const Tensor& onehot) {
  require(pred.shape == onehot.shape, "cce shape mismatch");
  require(pred.shape.size() == 2, "cce expects [N, classes]");
  const int n = pred.batch();
  double acc = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    if (onehot.data[i] != 0.0) {
      acc -= onehot.data[i] * std::log(std::max(pred.data[i], 1e-12));
    }
  }
  return acc / n;
}

Tensor cce_grad(const Tensor& pred, const Tensor& onehot) {
  require(pred.shape == onehot.shape, "cce shape mismatch");
  Tensor g(pred.shape);
  const int n = pred.batch();
  for (size_t i = 0; i < pred.data.size(); ++i) {
    if (onehot.data[i] != 0.0) {
      g.data[i] = -onehot.data[i] / std::max(pred.data[i], 1e-12) / n;
    }
  }
  return g;
}

double bce(const Tensor& pred, double target) {
  double acc = 0.0;
  for (double p : pred.data) {
    const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
    acc -= target * std::log(q) + (1.0 - target) * std::log(1.0 - q);
  }
  return acc / static_cast<double>(pred.data.size());
}

Tensor bce_grad(const Tensor& pred, double target) {
  Tensor g(pred.shape);
  const double n = static_cast<double>(pred.data.size());
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double q = std::clamp(pred.data[i], 1e-12, 1.0 - 1e-12);
    g.data[i] = (-target / q + (1.0 - target) / (1.0 - q)) / n;
  }
  return g;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "learning rate must be positive");
  require(minibatch >= 1, "minibatch must be >= 1");
  require(epochs >= 0, "epochs must be >= 0");
  require(grad_clip > 0.0, "grad_clip must be positive");
  require(l2 >= 0.0, "l2 must be >= 0");
}

AdamOptimizer::AdamOptimizer(std::size_t param_count, const TrainConfig& cfg)
    : cfg_(cfg), m_(param_count, 0.0), v_(param_count, 0.0),
      scratch_(param_count, 0.0) {}

void AdamOptimizer::step(std::vector<double>& params,
                         const std::vector<double>& grads,
                         const std::vector<bool>& weight_mask) {
  require(params.size() == m_.size() && grads.size() == m_.size(),
          "optimizer size mismatch");
  // effective gradient: data + L2 (weights only), then global-norm clip
  double norm2 = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    if (cfg_.l2 > 0.0 && weight_mask[i]) g += 2.0 * cfg_.l2 * params[i];
    scratch_[i] = g;
    norm2 += g * g;
  }
  last_norm_ = std::sqrt(norm2);
  const double scale =
      last_norm_ > cfg_.grad_clip ? cfg_.grad_clip / last_norm_ : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = scratch_[i] * scale;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    const double mh = m_[i] / bc1;
    const double vh = v_[i] / bc2;
    params[i] -= cfg_.learning_rate * mh / (std::sqrt(vh) + cfg_.epsilon);
  }
}

namespace {

Tensor gather_rows(const Tensor& all, const std::vector<int>& idx, int begin,
                   int end) {
  std::vector<int> shape = all.shape;
  shape[0] = end - begin;
  Tensor out(shape);
  const std::int64_t row = Tensor::numel_of(
      std::vector<int>(all.shape.begin() + 1, all.shape.end()));
  for (int i = begin; i < end; ++i) {
    std::memcpy(out.data.data() + static_cast<std::int64_t>(i - begin) * row,
                all.data.data() + static_cast<std::int64_t>(idx[static_cast<size_t>(i)]) * row,
                static_cast<size_t>(row) * sizeof(double));
  }
  return out;
}

}  // namespace

TrainResult train(Network& net, const Tensor& inputs, const Tensor& targets,
                  LossKind loss, const TrainConfig& cfg) {
  cfg.validate();
  require(inputs.batch() == targets.batch(), "dataset size mismatch");
  require(inputs.batch() >= 1, "dataset is empty");

  const int n = inputs.batch();
  AdamOptimizer opt(net.params().size(), cfg);
  Rng shuffle_rng(derive_seed(cfg.seed, 0x73687566ULL));
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // seed-fixed shuffle schedule
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    double epoch_loss = 0.0;
    int batches = 0;
    for (int b = 0; b < n; b += cfg.minibatch) {
      const int e = std::min(n, b + cfg.minibatch);
      const Tensor x = gather_rows(inputs, order, b, e);
      const Tensor y = gather_rows(targets, order, b, e);
      const Tensor pred = net.forward(x, true);
      const double l = loss == LossKind::mse ? mse(pred, y) : cce(pred, y);
      if (!std::isfinite(l)) {
        throw processing_error("training diverged at epoch " +
                               std::to_string(epoch));
      }
      epoch_loss += l;
      ++batches;
      net.zero_grads();
      net.backward(loss == LossKind::mse ? mse_grad(pred, y)
                                         : cce_grad(pred, y));
      opt.step(net.params(), net.param_grads(), net.weight_mask());
    }
    result.loss_curve.push_back(epoch_loss / std::max(batches, 1));
  }
  return result;
}

// ---------------------------------------------------------------------------
// gradient verification
// ---------------------------------------------------------------------------

GradCheckReport gradient_check(Network& net, const Tensor& input,
                               const Tensor& target, LossKind loss,
                               int samples, std::uint64_t seed, double eps) {
  auto loss_of = [&](const Tensor& pred) {
    return loss == LossKind::mse ? mse(pred, target) : cce(pred, target);
  };
  const Tensor pred = net.forward(input, true);
  net.zero_grads();
  net.backward(loss == LossKind::mse ? mse_grad(pred, target)
                                     : cce_grad(pred, target));
  const std::vector<double> analytic = net.param_grads();

  Rng rng(seed);
  GradCheckReport report;
  const std::size_t count = net.params().size();
  for (int s = 0; s < samples; ++s) {
    const std::size_t i = static_cast<std::size_t>(rng.below(count));
    const double saved = net.params()[i];
    net.params()[i] = saved + eps;
    const double lp = loss_of(net.forward(input, true));
    net.params()[i] = saved - eps;
    const double lm = loss_of(net.forward(input, true));
    net.params()[i] = saved;
    const double numeric = (lp - lm) / (2.0 * eps);
    // both effectively zero (e.g. a bias feeding batchnorm): the difference
    // is finite-difference roundoff, not a gradient defect
    const double denom = std::max(std::abs(numeric), std::abs(analytic[i]));
    const double rel =
        denom < 1e-6 ? 0.0 : std::abs(numeric - analytic[i]) / denom;
    report.max_rel_error = std::max(report.max_rel_error, rel);
    ++report.checked_params;
  }
  return report;
}

GradCheckReport gradcheck_all_layers(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x6763ULL));
  auto random_tensor = [&](std::vector<int> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
  };
  auto onehot_rows = [&](int n, int classes) {
    Tensor t({n, classes});
    for (int i = 0; i < n; ++i) {
      t.data[static_cast<size_t>(i) * classes +
             rng.below(static_cast<std::uint64_t>(classes))] = 1.0;
    }
    return t;
  };

  GradCheckReport worst;
  auto merge = [&](const GradCheckReport& r) {
    worst.max_rel_error = std::max(worst.max_rel_error, r.max_rel_error);
    worst.checked_params += r.checked_params;
  };

  {  // dense + sigmoid + softmax head, cce
    Network net({6}, {LayerSpec::Dense(10, Activation::sigmoid),
                      LayerSpec::Dense(4, Activation::softmax)},
                seed);
    merge(gradient_check(net, random_tensor({5, 6}, -1, 1), onehot_rows(5, 4),
                         LossKind::cce, 24, seed + 1));
  }
  {  // conv2d same + relu, strided, flatten, dense; mse
    Network net({2, 6, 9},
                {LayerSpec::Conv2d(3, {3, 3}, {1, 2}, Activation::relu),
                 LayerSpec::Flatten(), LayerSpec::Dense(5)},
                seed);
    merge(gradient_check(net, random_tensor({4, 2, 6, 9}, -1, 1),
                         random_tensor({4, 5}, -1, 1), LossKind::mse, 24,
                         seed + 2));
  }
  {  // conv2d valid + even kernel
    Network net({1, 5, 8},
                {LayerSpec::Conv2d(2, {2, 4}, {1, 1}, Activation::sigmoid,
                                   Padding::valid),
                 LayerSpec::Flatten(), LayerSpec::Dense(3)},
                seed);
    merge(gradient_check(net, random_tensor({3, 1, 5, 8}, -1, 1),
                         random_tensor({3, 3}, -1, 1), LossKind::mse, 24,
                         seed + 3));
  }
  {  // conv2d_transpose with stride
    Network net({2, 3, 5},
                {LayerSpec::Conv2dTranspose(3, {3, 3}, {2, 1},
                                            Activation::sigmoid),
                 LayerSpec::Flatten(), LayerSpec::Dense(4)},
                seed);
    merge(gradient_check(net, random_tensor({3, 2, 3, 5}, -1, 1),
                         random_tensor({3, 4}, -1, 1), LossKind::mse, 24,
                         seed + 4));
  }
  {  // maxpool (+ partial window) and upsample
    Network net({2, 4, 6},
                {LayerSpec::Conv2d(2, {3, 3}, {1, 1}, Activation::relu),
                 LayerSpec::MaxPool({2, 2}, {2, 2}),
                 LayerSpec::Upsample({2, 2}), LayerSpec::MaxPool({5, 5}, {5, 5}),
                 LayerSpec::Flatten(), LayerSpec::Dense(3)},
                seed);
    merge(gradient_check(net, random_tensor({3, 2, 4, 6}, -1, 1),
                         random_tensor({3, 3}, -1, 1), LossKind::mse, 24,
                         seed + 5));
  }
  {  // batchnorm on conv maps, training statistics; sigmoid keeps the
     // check away from relu kinks that batch centering would graze
    Network net({2, 4, 5},
                {LayerSpec::Conv2d(3, {3, 3}), LayerSpec::BatchNorm(Activation::sigmoid),
                 LayerSpec::Flatten(), LayerSpec::Dense(4, Activation::softmax)},
                seed);
    merge(gradient_check(net, random_tensor({6, 2, 4, 5}, -1, 1),
                         onehot_rows(6, 4), LossKind::cce, 24, seed + 6));
  }
  {  // batchnorm on flat features
    Network net({7}, {LayerSpec::Dense(6), LayerSpec::BatchNorm(Activation::sigmoid),
                      LayerSpec::Dense(3)},
                seed);
    merge(gradient_check(net, random_tensor({5, 7}, -1, 1),
                         random_tensor({5, 3}, -1, 1), LossKind::mse, 24,
                         seed + 7));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'E', 'I', 'N', 'N', '0', '0', '1'};

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv2d_transpose: return "conv2d_transpose";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::upsample: return "upsample";
    case LayerKind::flatten: return "flatten";
    case LayerKind::batchnorm: return "batchnorm";
  }
  return "?";
}

LayerKind kind_from(const std::string& s) {
  if (s == "dense") return LayerKind::dense;
  if (s == "conv2d") return LayerKind::conv2d;
  if (s == "conv2d_transpose") return LayerKind::conv2d_transpose;
  if (s == "maxpool") return LayerKind::maxpool;
  if (s == "upsample") return LayerKind::upsample;
  if (s == "flatten") return LayerKind::flatten;
  if (s == "batchnorm") return LayerKind::batchnorm;
  throw validation_error("unknown layer kind: " + s);
}

const char* act_name(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

Activation act_from(const std::string& s) {
  if (s == "none") return Activation::none;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "softmax") return Activation::softmax;
  throw validation_error("unknown activation: " + s);
}

}  // namespace

void save_checkpoint(const Network& net, const std::string& path) {
  std::vector<float> blob(net.params().size());
  for (size_t i = 0; i < blob.size(); ++i) {
    blob[i] = static_cast<float>(net.params()[i]);
  }

  json j;
  j["input_shape"] = net.input_shape();
  json layers = json::array();
  for (const auto& s : net.specs()) {
    layers.push_back({{"kind", kind_name(s.kind)},
                      {"units", s.units},
                      {"filters", s.filters},
                      {"kernel", s.kernel},
                      {"stride", s.stride},
                      {"padding", s.padding == Padding::same ? "same" : "valid"},
                      {"activation", act_name(s.activation)}});
  }
  j["layers"] = layers;
  j["param_count"] = blob.size();
  j["param_hash"] = fnv1a64(blob.data(), blob.size() * sizeof(float));

  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open checkpoint for writing: " + path);
  const std::string header = j.dump();
  const std::uint32_t hlen = static_cast<std::uint32_t>(header.size());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!out.good()) throw processing_error("checkpoint write failed: " + path);
}

Network load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw processing_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in.good() && std::memcmp(magic, kCheckpointMagic, 8) == 0,
          "bad checkpoint magic");
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  const json j = json::parse(header);

  std::vector<LayerSpec> specs;
  for (const auto& l : j.at("layers")) {
    LayerSpec s{kind_from(l.at("kind").get<std::string>())};
    s.units = l.at("units").get<int>();
    s.filters = l.at("filters").get<int>();
    s.kernel = l.at("kernel").get<std::array<int, 2>>();
    s.stride = l.at("stride").get<std::array<int, 2>>();
    s.padding =
        l.at("padding").get<std::string>() == "same" ? Padding::same : Padding::valid;
    s.activation = act_from(l.at("activation").get<std::string>());
    specs.push_back(s);
  }
  Network net(j.at("input_shape").get<std::vector<int>>(), specs, 0);

  const std::size_t count = j.at("param_count").get<std::size_t>();
  require(count == net.params().size(), "checkpoint parameter count mismatch");
  std::vector<float> blob(count);
  in.read(reinterpret_cast<char*>(blob.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in.good()) throw processing_error("checkpoint blob truncated: " + path);
  const auto hash = fnv1a64(blob.data(), blob.size() * sizeof(float));
  require(hash == j.at("param_hash").get<std::uint64_t>(),
          "checkpoint hash mismatch");
  for (size_t i = 0; i < count; ++i) {
    net.params()[i] = static_cast<double>(blob[i]);
  }
  return net;
}

void write_loss_csv(const TrainResult& result, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open loss csv for writing: " + path);
  out << "epoch,loss\n";
  for (size_t i = 0; i < result.loss_curve.size(); ++i) {
    out << i << "," << result.loss_curve[i] << "\n";
  }
}

}  // namespace seilab::nn

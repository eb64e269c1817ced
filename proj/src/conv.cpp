#include "hazeprop/conv.hpp"

#include <algorithm>
#include <stdexcept>

namespace hazeprop {

static void check_kernel_fits(const ScalarField& f, int ksize) {
    if (f.empty()) throw std::invalid_argument("conv2d: empty field");
    if (ksize > f.height() || ksize > f.width())
        throw std::invalid_argument("conv2d: kernel larger than field");
}

ScalarField conv2d_same(const ScalarField& f, const Kernel2D& k) {
    check_kernel_fits(f, k.size());
    const int h = f.height(), w = f.width();
    const int n = k.size(), r = k.radius();
    ScalarField out(h, w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double sum = 0.0;
            for (int u = 0; u < n; ++u) {
                const int ii = reflect_index(i - u + r, h);
                for (int v = 0; v < n; ++v) {
                    const int jj = reflect_index(j - v + r, w);
                    sum += k(u, v) * f(ii, jj);
                }
            }
            out(i, j) = sum;
        }
    }
    return out;
}

ScalarField conv2d_same_adjoint(const ScalarField& g, const Kernel2D& k) {
    check_kernel_fits(g, k.size());
    const int h = g.height(), w = g.width();
    const int n = k.size(), r = k.radius();
    ScalarField out(h, w, 0.0);
    // Scatter: each output sample of the forward pass read from
    // reflect(i-u+r, j-v+r); fold the same contributions back.
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const double gij = g(i, j);
            for (int u = 0; u < n; ++u) {
                const int ii = reflect_index(i - u + r, h);
                for (int v = 0; v < n; ++v) {
                    const int jj = reflect_index(j - v + r, w);
                    out(ii, jj) += k(u, v) * gij;
                }
            }
        }
    }
    return out;
}

Kernel2D conv2d_kernel_grad(const ScalarField& f, const ScalarField& g, int kernel_size) {
    if (!f.same_shape(g)) throw std::invalid_argument("conv2d_kernel_grad: shape mismatch");
    check_kernel_fits(f, kernel_size);
    const int h = f.height(), w = f.width();
    const int n = kernel_size, r = (kernel_size - 1) / 2;
    Kernel2D grad(n, 0.0);
    for (int u = 0; u < n; ++u) {
        for (int v = 0; v < n; ++v) {
            double sum = 0.0;
            for (int i = 0; i < h; ++i) {
                const int ii = reflect_index(i - u + r, h);
                for (int j = 0; j < w; ++j) {
                    sum += g(i, j) * f(ii, reflect_index(j - v + r, w));
                }
            }
            grad(u, v) = sum;
        }
    }
    return grad;
}

Kernel2D rot180(const Kernel2D& k) {
    const int n = k.size();
    Kernel2D out(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out(i, j) = k(n - 1 - i, n - 1 - j);
    return out;
}

template <bool TakeMin>
static ScalarField order_filter(const ScalarField& f, int w) {
    if (w < 1 || w % 2 == 0) throw std::invalid_argument("order filter: window must be odd");
    if (f.empty()) throw std::invalid_argument("order filter: empty field");
    const int h = f.height(), ww = f.width(), r = (w - 1) / 2;
    ScalarField out(h, ww);
    for (int i = 0; i < h; ++i) {
        const int i0 = std::max(0, i - r), i1 = std::min(h - 1, i + r);
        for (int j = 0; j < ww; ++j) {
            const int j0 = std::max(0, j - r), j1 = std::min(ww - 1, j + r);
            double m = f(i0, j0);
            for (int a = i0; a <= i1; ++a)
                for (int b = j0; b <= j1; ++b)
                    m = TakeMin ? std::min(m, f(a, b)) : std::max(m, f(a, b));
            out(i, j) = m;
        }
    }
    return out;
}

ScalarField min_filter(const ScalarField& f, int w) { return order_filter<true>(f, w); }

ScalarField max_filter(const ScalarField& f, int w) { return order_filter<false>(f, w); }

}  // namespace hazeprop

#pragma once

#include "hazeprop/field.hpp"

namespace hazeprop {

/// True 2-D convolution (kernel flipped, not correlation) with symmetric
/// boundary padding ( | 2 1 0 | 0 1 2 ... ). Output has the shape of f.
/// Rejects kernels larger than the field.
ScalarField conv2d_same(const ScalarField& f, const Kernel2D& k);

/// Exact adjoint of conv2d_same in its field argument: the transpose of the
/// padded linear operator, with reflected contributions folded back onto
/// their source pixels. Required for boundary-exact gradients; equal to
/// conv2d_same(g, rot180(k)) only away from the borders.
ScalarField conv2d_same_adjoint(const ScalarField& g, const Kernel2D& k);

/// Gradient of conv2d_same(f, k) with respect to the kernel taps, given the
/// upstream gradient g at the output: grad(u,v) = sum_ij g(i,j) * f~(i-u+r, j-v+r)
/// where f~ is the symmetric-padded field.
Kernel2D conv2d_kernel_grad(const ScalarField& f, const ScalarField& g, int kernel_size);

/// 180-degree rotation: taps(i,j) -> taps(n-1-i, n-1-j). Involutive.
Kernel2D rot180(const Kernel2D& k);

/// Sliding-window minimum over a w x w window, replicate padding.
ScalarField min_filter(const ScalarField& f, int w);

/// Sliding-window maximum over a w x w window, replicate padding.
ScalarField max_filter(const ScalarField& f, int w);

/// Symmetric-padding index map shared by the convolution routines.
inline int reflect_index(int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return i;
}

}  // namespace hazeprop

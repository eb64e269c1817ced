#pragma once

#include <vector>

#include "hazeprop/field.hpp"

namespace hazeprop {

/// Orthonormal zero-mean filter basis: the separable type-II cosine basis of
/// an n x n patch with the constant (DC) atom discarded. Atoms are ordered by
/// zig-zag frequency scan so coefficient layouts are reproducible.
struct DCTBasis {
    int size = 0;                 // kernel side n
    std::vector<Kernel2D> atoms;  // n*n - 1 atoms, unit Frobenius norm, zero sum

    int atom_count() const { return static_cast<int>(atoms.size()); }
};

/// Build the average-discarded DCT basis for an odd n >= 3.
DCTBasis dct_atoms(int n);

/// Coefficients of k in the basis: c_i = <k, d_i>. The projection onto the
/// zero-mean subspace; adding back mean(k) reproduces k exactly.
std::vector<double> dct_project(const DCTBasis& basis, const Kernel2D& k);

/// Kernel from coefficients: sum_i c_i d_i (always zero-mean).
Kernel2D dct_reconstruct(const DCTBasis& basis, const std::vector<double>& coeffs);

}  // namespace hazeprop

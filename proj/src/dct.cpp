#include "hazeprop/dct.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace hazeprop {

// Zig-zag scan of an n x n frequency grid, the JPEG traversal: walk
// anti-diagonals of constant u+v, alternating direction.
static std::vector<std::pair<int, int>> zigzag_order(int n) {
    std::vector<std::pair<int, int>> order;
    order.reserve(static_cast<size_t>(n) * n);
    for (int s = 0; s <= 2 * (n - 1); ++s) {
        if (s % 2 == 0) {
            for (int u = std::min(s, n - 1); u >= std::max(0, s - n + 1); --u)
                order.emplace_back(u, s - u);
        } else {
            for (int u = std::max(0, s - n + 1); u <= std::min(s, n - 1); ++u)
                order.emplace_back(u, s - u);
        }
    }
    return order;
}

DCTBasis dct_atoms(int n) {
    if (n < 3 || n % 2 == 0)
        throw std::invalid_argument("dct_atoms: size must be odd and >= 3");

    // 1-D type-II cosine rows: row u, sample i.
    auto cos1d = [n](int u, int i) {
        const double scale = u == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
        return scale * std::cos(std::numbers::pi * (2 * i + 1) * u / (2.0 * n));
    };

    DCTBasis basis;
    basis.size = n;
    basis.atoms.reserve(static_cast<size_t>(n) * n - 1);
    for (auto [u, v] : zigzag_order(n)) {
        if (u == 0 && v == 0) continue;  // discard the average
        Kernel2D atom(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) atom(i, j) = cos1d(u, i) * cos1d(v, j);
        basis.atoms.push_back(std::move(atom));
    }
    return basis;
}

std::vector<double> dct_project(const DCTBasis& basis, const Kernel2D& k) {
    if (k.size() != basis.size) throw std::invalid_argument("dct_project: size mismatch");
    std::vector<double> coeffs(basis.atoms.size());
    for (size_t i = 0; i < basis.atoms.size(); ++i) coeffs[i] = dot(basis.atoms[i], k);
    return coeffs;
}

Kernel2D dct_reconstruct(const DCTBasis& basis, const std::vector<double>& coeffs) {
    if (coeffs.size() != basis.atoms.size())
        throw std::invalid_argument("dct_reconstruct: coefficient count mismatch");
    Kernel2D k(basis.size, 0.0);
    for (size_t i = 0; i < basis.atoms.size(); ++i) {
        const auto& atom = basis.atoms[i];
        for (size_t t = 0; t < k.taps().size(); ++t) k.taps()[t] += coeffs[i] * atom.taps()[t];
    }
    return k;
}

}  // namespace hazeprop

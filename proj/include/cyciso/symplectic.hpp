#pragma once

// Metaplectic change of theta structure.
//
// After extending an isogeny with real multiplication to the power A^r, the
// theta structure obtained on the target B^r is not a product structure, so
// the coordinates of B cannot be read off directly.  This module builds the
// matrix of F beta^{-1} on the 4-torsion, searches for a symplectic
// transformation that block-diagonalizes it into r-fold product form, lifts
// that transformation to an integer symplectic matrix, applies the theta
// transformation formula (a purely algebraic version of Igusa's analytic
// transformation law; every root of unity involved is a power of a fourth
// root i, so no transcendental evaluation is needed), and finally unfolds a
// product theta null point into the null point of a single factor.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "cyciso/ff.hpp"
#include "cyciso/theta.hpp"

namespace cyciso {

/// Dense square matrix over Z/4Z, row-major, entries in {0,1,2,3}.
struct Mod4Mat {
    size_t n = 0;
    std::vector<uint8_t> a;

    Mod4Mat() = default;
    explicit Mod4Mat(size_t n_) : n(n_), a(n_ * n_, 0) {}

    static Mod4Mat identity(size_t n);

    uint8_t& at(size_t i, size_t j) { return a[i * n + j]; }
    uint8_t at(size_t i, size_t j) const { return a[i * n + j]; }

    bool operator==(const Mod4Mat& o) const { return n == o.n && a == o.a; }
    bool operator!=(const Mod4Mat& o) const { return !(*this == o); }
};

Mod4Mat m4_mul(const Mod4Mat& x, const Mod4Mat& y);
Mod4Mat m4_add(const Mod4Mat& x, const Mod4Mat& y);
Mod4Mat m4_neg(const Mod4Mat& x);
Mod4Mat m4_transpose(const Mod4Mat& x);
Mod4Mat m4_scalar(size_t n, uint8_t c);

/// True iff x is invertible over Z/4 (equivalently, invertible mod 2).
bool m4_invertible(const Mod4Mat& x);

/// Inverse over Z/4; throws std::invalid_argument if singular.
Mod4Mat m4_inv(const Mod4Mat& x);

/// The standard symplectic Gram matrix (0 I; -I 0) of size 2*half.
Mod4Mat m4_standard_j(size_t half);

/// True iff s^t J s = J over Z/4.
bool m4_is_symplectic(const Mod4Mat& s);

/// Matrix of F beta^{-1} acting on the product symplectic basis
/// {e'_i, e''_i} of A^r[4].  Basis ordering: all primed vectors first
/// (factor-major, g coordinates per factor), then all double-primed.
struct TorsionBasisMatrix {
    size_t g = 0;
    size_t r = 0;
    Mod4Mat m;  // 2gr x 2gr, invertible mod 4
};

/// The action of an integer scalar on a symplectic 4-torsion basis.
Mod4Mat scalar_action_mod4(uint64_t scalar, size_t g);

/// Assemble M_{F beta^{-1}} from the actions of the decomposition elements
/// alpha_1..alpha_r on a fixed symplectic basis of A[4].  Each entry of
/// `alpha` is the 2g x 2g matrix of one alpha_s; beta = sum alpha_s^2 acts by
/// the sum of their squares.  r must be 2 or 4; the block pattern is the
/// standard multiplication-by-(a1,a2[,a3,a4]) quaternion pattern F with
/// F^t F = beta * Id.
TorsionBasisMatrix build_fbeta_matrix(size_t g, const std::vector<Mod4Mat>& alpha);

/// A symplectic change of basis: the class mod 4 together with an integer
/// lift S = (A B; C D) in Sp_{2gr}(Z) and the derived half-integer shift
/// characteristics e' = (1/2) diag(A^t C), e'' = (1/2) diag(D^t B) (stored
/// doubled, as integers).
struct SymplecticMap {
    size_t n = 0;       // 2 * gr
    Mod4Mat sbar;       // reduction mod 4
    std::vector<mpz_class> s;  // row-major n x n integer lift, s^t J s = J
};

/// Search for S-bar = Delta(N) * M^{-1} in Sp_{2gr}(Z/4) with N in
/// GL_{2g}(Z/4) embedded diagonally (the same N on every factor).  Solves
/// the Gram condition N^t J N = H structurally via symplectic Gram-Schmidt
/// when the Gram matrix M^t J M is of diagonally-repeated form, falling back
/// to exhaustive enumeration of N for 2g = 2.  Throws std::runtime_error if
/// no candidate exists.  If `transcript` is non-null, a short log of the
/// search (strategy used, candidates tested, the N found) is appended.
Mod4Mat find_block_transform(const TorsionBasisMatrix& m,
                             std::string* transcript = nullptr);

/// Deterministically lift a mod-4 symplectic matrix to Sp_{2gr}(Z) via a
/// factorization into elementary symplectic generators, and package it as a
/// SymplecticMap.  The result satisfies s^t J s = J exactly over Z and
/// reduces to sbar mod 4.
SymplecticMap lift_to_integer_sp(const Mod4Mat& sbar);

/// The inverse map (exact: S^{-1} = -J S^t J).
SymplecticMap sp_inverse(const SymplecticMap& s);

/// Transform level-2 theta coordinates under a symplectic change of theta
/// structure.  `point` and `null` live on a variety of dimension gr =
/// s.n / 2 (for the unfolding application this is B^r with the coordinates
/// of factor s in bit positions [s*g, (s+1)*g)).  Computes, for every index
/// b', the product theta'_{b'}(z) * theta'_0(0) by the double character sum
///     sum_a xi^2_{a,b} sum_i (-1)^{<a,i>} theta_{b+i}(z) theta_i(0)
/// with xi^2 an exact power of a fourth root of unity i and (a', b') related
/// to (a, b) through the integer lift including the e', e'' shifts; returns
/// the projective transformed point.  A fourth root of unity is required
/// only when an odd power actually survives the sum; if the field has none,
/// a FieldCapabilityError asks the caller to extend by degree 2.  Throws
/// DegenerateError if every transformed coordinate vanishes.
ProjThetaPoint theta_transform(const AffThetaPoint& point, const ThetaNull& null,
                               const SymplecticMap& s, std::mt19937_64& rng);

/// Unfold a projective theta point of a product variety B^r (2^{gr}
/// coordinates, factor-major bit layout as above) whose underlying point has
/// the shape (y, 0, ..., 0): every coordinate factors as
/// theta_{k1}(y) * theta_{(k2..kr)}(0), so fixing a tail index with nonzero
/// tail factor and slicing recovers the 2^g projective coordinates of y on
/// B.  The tail maximizing the number of nonzero extracted coordinates is
/// chosen, and consistency across all usable tails is checked.  Throws
/// DegenerateError if every tail slice vanishes, std::runtime_error on an
/// inconsistent slice.
std::vector<FieldElem> unfold_product(const std::vector<FieldElem>& coords,
                                      size_t g, size_t r);

}  // namespace cyciso

#pragma once
// Normalization of affine theta lifts: excellent lifts of kernel points,
// suitable lifts of translated points, order-normalized lifts, and the CRT
// scalars used to walk kernel cosets.

#include "cyciso/theta.hpp"

namespace cyciso {

/// The unique c in [0, N*l) with c = a (mod N) and c = u (mod l).
struct CrtScalar {
    uint64_t a = 0, u = 0, N = 1, l = 1;
    uint64_t value = 0;
};

CrtScalar crt_scalar(uint64_t a, uint64_t u, uint64_t N, uint64_t l);

/// Rescale a lift of an order-l point t (l an odd prime, m = (l-1)/2) so that
/// chainmult(m+1, result) = -chainmult(m, result) holds exactly (at level 2,
/// coordinatewise equality). The scaling satisfies lambda^l = c for a c read
/// off the inputs; unique up to mu_l. Throws FieldCapabilityError when the
/// field lacks the l-th root, std::invalid_argument when t does not have
/// order l.
AffThetaPoint make_excellent(const AffThetaPoint& t_any, const ThetaNull& null,
                             uint64_t l, std::mt19937_64& rng);

/// Whether chainmult(m+1, t) = -chainmult(m, t) exactly, l = 2m+1.
bool is_excellent(const AffThetaPoint& t, const ThetaNull& null, uint64_t l);

/// Rescale a lift of x+t so that chainmultadd(l, result, t, x) = x exactly.
/// t should be (a mu_l multiple of) an excellent lift. Unique up to mu_l.
AffThetaPoint make_suitable(const AffThetaPoint& xt_any, const AffThetaPoint& t,
                            const AffThetaPoint& x, const ThetaNull& null,
                            uint64_t l, std::mt19937_64& rng);

bool is_suitable(const AffThetaPoint& xt, const AffThetaPoint& t,
                 const AffThetaPoint& x, const ThetaNull& null, uint64_t l);

/// Rescale a lift of a point of order N so that chainmult(N, result) equals
/// the null point exactly. Needs an N^2-th root; throws FieldCapabilityError
/// with a remediation hint when the working field is too small.
AffThetaPoint normalize_order(const AffThetaPoint& x_any, uint64_t N,
                              const ThetaNull& null, std::mt19937_64& rng);

}  // namespace cyciso

#include "cyciso/symplectic.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>
#include <stdexcept>

namespace cyciso {

namespace {

uint8_t m4(int64_t v) { return static_cast<uint8_t>(((v % 4) + 4) % 4); }

}  // namespace

Mod4Mat Mod4Mat::identity(size_t n) {
    Mod4Mat m(n);
    for (size_t i = 0; i < n; ++i) m.at(i, i) = 1;
    return m;
}

Mod4Mat m4_mul(const Mod4Mat& x, const Mod4Mat& y) {
    if (x.n != y.n) throw std::invalid_argument("m4_mul: size mismatch");
    Mod4Mat out(x.n);
    for (size_t i = 0; i < x.n; ++i)
        for (size_t k = 0; k < x.n; ++k) {
            uint8_t v = x.at(i, k);
            if (!v) continue;
            for (size_t j = 0; j < x.n; ++j)
                out.at(i, j) = static_cast<uint8_t>((out.at(i, j) + v * y.at(k, j)) & 3);
        }
    return out;
}

Mod4Mat m4_add(const Mod4Mat& x, const Mod4Mat& y) {
    if (x.n != y.n) throw std::invalid_argument("m4_add: size mismatch");
    Mod4Mat out(x.n);
    for (size_t i = 0; i < x.a.size(); ++i) out.a[i] = (x.a[i] + y.a[i]) & 3;
    return out;
}

Mod4Mat m4_neg(const Mod4Mat& x) {
    Mod4Mat out(x.n);
    for (size_t i = 0; i < x.a.size(); ++i) out.a[i] = (4 - x.a[i]) & 3;
    return out;
}

Mod4Mat m4_transpose(const Mod4Mat& x) {
    Mod4Mat out(x.n);
    for (size_t i = 0; i < x.n; ++i)
        for (size_t j = 0; j < x.n; ++j) out.at(j, i) = x.at(i, j);
    return out;
}

Mod4Mat m4_scalar(size_t n, uint8_t c) {
    Mod4Mat m(n);
    for (size_t i = 0; i < n; ++i) m.at(i, i) = c & 3;
    return m;
}

// Gauss-Jordan over the local ring Z/4: a pivot works iff it is odd (a
// unit), and an invertible matrix always offers an odd entry in every
// elimination column.
static bool m4_inv_impl(const Mod4Mat& x, Mod4Mat* out) {
    static const uint8_t unit_inv[4] = {0, 1, 0, 3};
    size_t n = x.n;
    Mod4Mat a = x;
    Mod4Mat inv = Mod4Mat::identity(n);
    for (size_t col = 0; col < n; ++col) {
        size_t piv = n;
        for (size_t row = col; row < n; ++row)
            if (a.at(row, col) & 1) {
                piv = row;
                break;
            }
        if (piv == n) return false;
        if (piv != col)
            for (size_t j = 0; j < n; ++j) {
                std::swap(a.a[piv * n + j], a.a[col * n + j]);
                std::swap(inv.a[piv * n + j], inv.a[col * n + j]);
            }
        uint8_t s = unit_inv[a.at(col, col)];
        for (size_t j = 0; j < n; ++j) {
            a.at(col, j) = (a.at(col, j) * s) & 3;
            inv.at(col, j) = (inv.at(col, j) * s) & 3;
        }
        for (size_t row = 0; row < n; ++row) {
            if (row == col) continue;
            uint8_t f = a.at(row, col);
            if (!f) continue;
            for (size_t j = 0; j < n; ++j) {
                a.at(row, j) = (a.at(row, j) + (4 - f) * a.at(col, j)) & 3;
                inv.at(row, j) = (inv.at(row, j) + (4 - f) * inv.at(col, j)) & 3;
            }
        }
    }
    if (out) *out = inv;
    return true;
}

bool m4_invertible(const Mod4Mat& x) { return m4_inv_impl(x, nullptr); }

Mod4Mat m4_inv(const Mod4Mat& x) {
    Mod4Mat out;
    if (!m4_inv_impl(x, &out)) throw std::invalid_argument("m4_inv: matrix not invertible mod 4");
    return out;
}

Mod4Mat m4_standard_j(size_t half) {
    Mod4Mat j(2 * half);
    for (size_t i = 0; i < half; ++i) {
        j.at(i, half + i) = 1;
        j.at(half + i, i) = 3;
    }
    return j;
}

bool m4_is_symplectic(const Mod4Mat& s) {
    if (s.n % 2) return false;
    Mod4Mat j = m4_standard_j(s.n / 2);
    return m4_mul(m4_mul(m4_transpose(s), j), s) == j;
}

Mod4Mat scalar_action_mod4(uint64_t scalar, size_t g) {
    return m4_scalar(2 * g, static_cast<uint8_t>(scalar & 3));
}

// Assemble a 2gr x 2gr matrix from an r x r pattern of signed references to
// the 2g x 2g blocks in `blocks`: pattern entry (s,t) places sign *
// blocks[index] into factor position (s,t).  Global basis ordering is all
// primed coordinates (factor-major) then all double-primed, so each 2g x 2g
// source block is split into four g x g quadrants.
static Mod4Mat assemble_blocks(size_t g, size_t r,
                               const std::vector<std::vector<std::pair<int, int>>>& pattern,
                               const std::vector<Mod4Mat>& blocks) {
    size_t half = g * r;
    Mod4Mat out(2 * half);
    for (size_t s = 0; s < r; ++s)
        for (size_t t = 0; t < r; ++t) {
            auto [idx, sign] = pattern[s][t];
            if (sign == 0) continue;
            const Mod4Mat& blk = blocks[static_cast<size_t>(idx)];
            for (size_t qi = 0; qi < 2; ++qi)
                for (size_t qj = 0; qj < 2; ++qj)
                    for (size_t i = 0; i < g; ++i)
                        for (size_t j = 0; j < g; ++j) {
                            uint8_t v = blk.at(qi * g + i, qj * g + j);
                            if (sign < 0) v = (4 - v) & 3;
                            out.at(qi * half + s * g + i, qj * half + t * g + j) = v;
                        }
        }
    return out;
}

TorsionBasisMatrix build_fbeta_matrix(size_t g, const std::vector<Mod4Mat>& alpha) {
    size_t r = alpha.size();
    if (r != 2 && r != 4) throw std::invalid_argument("build_fbeta_matrix: r must be 2 or 4");
    for (const Mod4Mat& m : alpha)
        if (m.n != 2 * g) throw std::invalid_argument("build_fbeta_matrix: alpha block size mismatch");

    // beta = sum alpha_s^2 acts by the sum of the squared action matrices;
    // it is invertible mod 4 because gcd(l, 4) = 1.
    Mod4Mat beta(2 * g);
    for (const Mod4Mat& m : alpha) beta = m4_add(beta, m4_mul(m, m));
    Mod4Mat beta_inv = m4_inv(beta);

    std::vector<std::vector<std::pair<int, int>>> pattern;
    if (r == 2) {
        pattern = {{{0, 1}, {1, -1}},
                   {{1, 1}, {0, 1}}};
    } else {
        pattern = {{{0, 1}, {1, -1}, {2, -1}, {3, -1}},
                   {{1, 1}, {0, 1}, {3, 1}, {2, -1}},
                   {{2, 1}, {3, -1}, {0, 1}, {1, 1}},
                   {{3, 1}, {2, 1}, {1, -1}, {0, 1}}};
    }
    Mod4Mat f = assemble_blocks(g, r, pattern, alpha);

    std::vector<std::vector<std::pair<int, int>>> diag(r, std::vector<std::pair<int, int>>(r, {0, 0}));
    for (size_t s = 0; s < r; ++s) diag[s][s] = {0, 1};
    Mod4Mat big_beta_inv = assemble_blocks(g, r, diag, {beta_inv});

    TorsionBasisMatrix out{g, r, m4_mul(f, big_beta_inv)};
    if (!m4_invertible(out.m))
        throw std::logic_error("build_fbeta_matrix: assembled matrix not invertible mod 4");
    return out;
}

// Diagonal embedding GL_{2g} -> GL_{2gr}: the same N acting on every factor.
static Mod4Mat diag_embed(size_t g, size_t r, const Mod4Mat& n2g) {
    std::vector<std::vector<std::pair<int, int>>> diag(r, std::vector<std::pair<int, int>>(r, {0, 0}));
    for (size_t s = 0; s < r; ++s) diag[s][s] = {0, 1};
    return assemble_blocks(g, r, diag, {n2g});
}

// Find P with P^t H P = J for an invertible alternating Gram matrix H over
// Z/4 (symplectic Gram-Schmidt; pivoting always finds a unit pairing
// because H is invertible mod 2).  Returns false if the reduction gets
// stuck, which for valid input it cannot.
static bool symplectic_gram_schmidt(const Mod4Mat& h, Mod4Mat* p_out) {
    static const uint8_t unit_inv[4] = {0, 1, 0, 3};
    size_t n = h.n;
    if (n % 2) return false;
    size_t g = n / 2;
    // Current working vectors (columns), initially the standard basis.
    std::vector<std::vector<uint8_t>> work(n, std::vector<uint8_t>(n, 0));
    for (size_t i = 0; i < n; ++i) work[i][i] = 1;
    auto pair = [&](const std::vector<uint8_t>& u, const std::vector<uint8_t>& v) {
        unsigned acc = 0;
        for (size_t i = 0; i < n; ++i) {
            if (!u[i]) continue;
            for (size_t j = 0; j < n; ++j) acc += u[i] * h.at(i, j) * v[j];
        }
        return static_cast<uint8_t>(acc & 3);
    };
    std::vector<std::vector<uint8_t>> us, ws;
    for (size_t step = 0; step < g; ++step) {
        size_t iu = work.size(), iw = work.size();
        for (size_t i = 0; i < work.size() && iu == work.size(); ++i)
            for (size_t j = i + 1; j < work.size(); ++j)
                if (pair(work[i], work[j]) & 1) {
                    iu = i;
                    iw = j;
                    break;
                }
        if (iu == work.size()) return false;
        std::vector<uint8_t> u = work[iu];
        std::vector<uint8_t> w = work[iw];
        uint8_t s = unit_inv[pair(u, w)];
        for (auto& c : w) c = (c * s) & 3;  // B(u, w) = 1
        work.erase(work.begin() + static_cast<long>(iw));
        work.erase(work.begin() + static_cast<long>(iu));
        for (auto& v : work) {
            uint8_t bu = pair(u, v);   // coefficient to remove along w
            uint8_t bw = pair(w, v);   // coefficient to remove along u
            for (size_t i = 0; i < n; ++i)
                v[i] = (v[i] + bw * u[i] + (4 - bu) * w[i]) & 3;
        }
        us.push_back(std::move(u));
        ws.push_back(std::move(w));
    }
    Mod4Mat p(n);
    for (size_t k = 0; k < g; ++k)
        for (size_t i = 0; i < n; ++i) {
            p.at(i, k) = us[k][i];
            p.at(i, g + k) = ws[k][i];
        }
    if (p_out) *p_out = p;
    return true;
}

Mod4Mat find_block_transform(const TorsionBasisMatrix& m, std::string* transcript) {
    size_t g = m.g, r = m.r;
    size_t half = g * r;
    std::ostringstream log;
    Mod4Mat minv = m4_inv(m.m);
    Mod4Mat j_big = m4_standard_j(half);
    Mod4Mat gram = m4_mul(m4_mul(m4_transpose(m.m), j_big), m.m);

    auto try_n = [&](const Mod4Mat& n2g, Mod4Mat* out) {
        if (!m4_invertible(n2g)) return false;
        Mod4Mat cand = m4_mul(diag_embed(g, r, n2g), minv);
        if (!m4_is_symplectic(cand)) return false;
        *out = cand;
        return true;
    };

    // Structured route: Delta(N) M^{-1} symplectic <=> Delta(N^t J N) =
    // M^t J M, which requires the Gram matrix to be diagonally repeated;
    // then N^t J N = H is solved by inverting a symplectic basis of H.
    Mod4Mat core(2 * g);
    bool repeated = true;
    for (size_t qi = 0; qi < 2 && repeated; ++qi)
        for (size_t qj = 0; qj < 2 && repeated; ++qj)
            for (size_t s = 0; s < r && repeated; ++s)
                for (size_t t = 0; t < r && repeated; ++t)
                    for (size_t i = 0; i < g && repeated; ++i)
                        for (size_t jj = 0; jj < g && repeated; ++jj) {
                            uint8_t v = gram.at(qi * half + s * g + i, qj * half + t * g + jj);
                            if (s != t) {
                                if (v) repeated = false;
                            } else if (s == 0) {
                                core.at(qi * g + i, qj * g + jj) = v;
                            } else if (v != core.at(qi * g + i, qj * g + jj)) {
                                repeated = false;
                            }
                        }
    if (repeated) {
        Mod4Mat p;
        if (symplectic_gram_schmidt(core, &p)) {
            Mod4Mat n2g = m4_inv(p);
            Mod4Mat cand;
            if (try_n(n2g, &cand)) {
                log << "structured: Gram core solved by symplectic Gram-Schmidt; 1 candidate tested\n";
                if (transcript) *transcript += log.str();
                return cand;
            }
            log << "structured: Gram-Schmidt candidate rejected\n";
        } else {
            log << "structured: Gram-Schmidt stuck\n";
        }
    } else {
        log << "structured: Gram matrix not diagonally repeated\n";
    }

    // Fallback: exhaustive enumeration of N in GL_{2g}(Z/4), feasible at
    // g = 1 (256 candidates).
    if (g == 1) {
        size_t tested = 0;
        for (unsigned e0 = 0; e0 < 4; ++e0)
            for (unsigned e1 = 0; e1 < 4; ++e1)
                for (unsigned e2 = 0; e2 < 4; ++e2)
                    for (unsigned e3 = 0; e3 < 4; ++e3) {
                        Mod4Mat n2g(2);
                        n2g.at(0, 0) = static_cast<uint8_t>(e0);
                        n2g.at(0, 1) = static_cast<uint8_t>(e1);
                        n2g.at(1, 0) = static_cast<uint8_t>(e2);
                        n2g.at(1, 1) = static_cast<uint8_t>(e3);
                        ++tested;
                        Mod4Mat cand;
                        if (try_n(n2g, &cand)) {
                            log << "exhaustive: found after " << tested << " candidates\n";
                            if (transcript) *transcript += log.str();
                            return cand;
                        }
                    }
        log << "exhaustive: all " << tested << " candidates rejected\n";
    }
    if (transcript) *transcript += log.str();
    throw std::runtime_error(
        "find_block_transform: no diagonal N block-diagonalizes the torsion matrix "
        "(internal consistency: a product theta structure must exist)");
}

// ---------------------------------------------------------------------------
// Integer lift.

namespace {

struct ZMat {
    size_t n = 0;
    std::vector<mpz_class> a;
    explicit ZMat(size_t n_) : n(n_), a(n_ * n_) {}
    static ZMat identity(size_t n) {
        ZMat m(n);
        for (size_t i = 0; i < n; ++i) m.at(i, i) = 1;
        return m;
    }
    mpz_class& at(size_t i, size_t j) { return a[i * n + j]; }
    const mpz_class& at(size_t i, size_t j) const { return a[i * n + j]; }
};

ZMat z_mul(const ZMat& x, const ZMat& y) {
    ZMat out(x.n);
    for (size_t i = 0; i < x.n; ++i)
        for (size_t k = 0; k < x.n; ++k) {
            if (x.at(i, k) == 0) continue;
            for (size_t j = 0; j < x.n; ++j) out.at(i, j) += x.at(i, k) * y.at(k, j);
        }
    return out;
}

ZMat z_transpose(const ZMat& x) {
    ZMat out(x.n);
    for (size_t i = 0; i < x.n; ++i)
        for (size_t j = 0; j < x.n; ++j) out.at(j, i) = x.at(i, j);
    return out;
}

Mod4Mat z_mod4(const ZMat& x) {
    Mod4Mat out(x.n);
    for (size_t i = 0; i < x.a.size(); ++i) {
        mpz_class rm = x.a[i] % 4;
        out.a[i] = static_cast<uint8_t>((rm.get_si() + 4) % 4);
    }
    return out;
}

// Factor a determinant-1 matrix over Z/4 into transvections I + c*E_{ij}
// and lift each to Z; returns the integer product congruent to v mod 4.
ZMat lift_sl(const Mod4Mat& v) {
    static const uint8_t unit_inv[4] = {0, 1, 0, 3};
    size_t n = v.n;
    Mod4Mat a = v;
    // Row operations reducing a to the identity, recorded as (i, j, c):
    // row_i += c * row_j.
    std::vector<std::array<int64_t, 3>> ops;
    auto rowadd = [&](size_t i, size_t j, uint8_t c) {
        if (!c) return;
        for (size_t k = 0; k < n; ++k) a.at(i, k) = (a.at(i, k) + c * a.at(j, k)) & 3;
        ops.push_back({static_cast<int64_t>(i), static_cast<int64_t>(j), static_cast<int64_t>(c)});
    };
    for (size_t col = 0; col < n; ++col) {
        if (!(a.at(col, col) & 1)) {
            size_t src = n;
            for (size_t row = col + 1; row < n; ++row)
                if (a.at(row, col) & 1) {
                    src = row;
                    break;
                }
            if (src == n) throw std::logic_error("lift_sl: no unit pivot");
            rowadd(col, src, 1);
        }
        // Try to turn a -1 pivot into +1 using a row below (3 + 2*odd = 1,
        // 3 + 1*two = 1); rows above cannot be used without disturbing
        // already-cleared columns.  A leftover -1 pivot is handled after
        // the elimination by pairing (det = 1 forces an even count).
        if (a.at(col, col) == 3) {
            size_t odd = n, two = n;
            for (size_t row = col + 1; row < n; ++row) {
                if (a.at(row, col) & 1) {
                    odd = row;
                    break;
                }
                if (a.at(row, col) == 2 && two == n) two = row;
            }
            if (odd != n)
                rowadd(col, odd, 2);
            else if (two != n)
                rowadd(col, two, 1);
        }
        uint8_t piv = a.at(col, col);
        uint8_t piv_inv = unit_inv[piv];
        for (size_t row = 0; row < n; ++row) {
            if (row == col) continue;
            uint8_t f = a.at(row, col);
            rowadd(row, col, static_cast<uint8_t>((4 - ((f * piv_inv) & 3)) & 3));
        }
    }
    // Now a is diagonal with entries in {1, 3} and an even number of 3s
    // (det = 1).  Clear pairs of -1s with the transvection word for the
    // rotation matrix squared (= -Id on the two rows).
    {
        std::vector<size_t> neg;
        for (size_t i = 0; i < n; ++i)
            if (a.at(i, i) == 3) neg.push_back(i);
        if (neg.size() % 2) throw std::logic_error("lift_sl: odd count of -1 pivots");
        for (size_t k = 0; k + 1 < neg.size(); k += 2) {
            size_t i = neg[k], j = neg[k + 1];
            for (int rep = 0; rep < 2; ++rep) {
                rowadd(i, j, 1);
                rowadd(j, i, 3);
                rowadd(i, j, 1);
            }
        }
    }
    if (a != Mod4Mat::identity(n)) throw std::logic_error("lift_sl: reduction failed");
    // a started as v and E_m ... E_1 v = I, so v = E_1^{-1} ... E_m^{-1};
    // lift each inverse transvection (I + c E_{ij})^{-1} = I - c E_{ij}.
    ZMat out = ZMat::identity(n);
    for (const auto& op : ops) {
        ZMat e = ZMat::identity(n);
        e.at(static_cast<size_t>(op[0]), static_cast<size_t>(op[1])) = -op[2];
        out = z_mul(out, e);
    }
    return out;
}

// Integer lift of an invertible matrix mod 4: a +/-1-determinant integer
// matrix congruent to u mod 4, with an exact integer inverse.
void lift_gl(const Mod4Mat& u, ZMat* lift, ZMat* lift_inv) {
    size_t n = u.n;
    // det mod 4 via elimination on a copy
    Mod4Mat tmp = u;
    static const uint8_t unit_inv[4] = {0, 1, 0, 3};
    uint8_t det = 1;
    for (size_t col = 0; col < n; ++col) {
        size_t piv = n;
        for (size_t row = col; row < n; ++row)
            if (tmp.at(row, col) & 1) {
                piv = row;
                break;
            }
        if (piv == n) throw std::invalid_argument("lift_gl: not invertible");
        if (piv != col) {
            for (size_t k = 0; k < n; ++k) std::swap(tmp.a[piv * n + k], tmp.a[col * n + k]);
            det = (det * 3) & 3;
        }
        det = (det * tmp.at(col, col)) & 3;
        uint8_t s = unit_inv[tmp.at(col, col)];
        for (size_t k = 0; k < n; ++k) tmp.at(col, k) = (tmp.at(col, k) * s) & 3;
        for (size_t row = col + 1; row < n; ++row) {
            uint8_t f = tmp.at(row, col);
            for (size_t k = 0; k < n; ++k)
                tmp.at(row, k) = (tmp.at(row, k) + (4 - f) * tmp.at(col, k)) & 3;
        }
    }
    // u = d0 * v with d0 = diag(det, 1, ..., 1) and det v = 1 mod 4.
    Mod4Mat d0inv = Mod4Mat::identity(n);
    d0inv.at(0, 0) = unit_inv[det];
    Mod4Mat v = m4_mul(d0inv, u);
    ZMat vz = lift_sl(v);
    ZMat d0z = ZMat::identity(n);
    d0z.at(0, 0) = (det == 3) ? -1 : 1;
    *lift = z_mul(d0z, vz);
    // inverse: vz^{-1} then d0^{-1} = d0; rebuild vz^{-1} by refactoring.
    // vz is a product of transvections times nothing else, but rather than
    // track them twice, invert via the mod-4 inverse of u and the identity
    // lift^{-1} = lift_of(u^{-1}) is wrong (different lift); compute the
    // exact adjugate instead: lift has det +/-1 so its integer inverse is
    // det * adjugate.
    const ZMat& m = *lift;
    ZMat inv(n);
    // Gauss-Bareiss adjugate is overkill at n <= 16: use cofactor-free exact
    // inversion via fraction-free elimination on [m | I] with rational
    // bookkeeping replaced by the known unit determinant: solve m x = e_i
    // over Q using mpq.
    {
        std::vector<std::vector<mpq_class>> w(n, std::vector<mpq_class>(2 * n));
        for (size_t i = 0; i < n; ++i) {
            for (size_t j = 0; j < n; ++j) w[i][j] = m.at(i, j);
            w[i][n + i] = 1;
        }
        for (size_t col = 0; col < n; ++col) {
            size_t piv = n;
            for (size_t row = col; row < n; ++row)
                if (w[row][col] != 0) {
                    piv = row;
                    break;
                }
            if (piv == n) throw std::logic_error("lift_gl: singular lift");
            std::swap(w[piv], w[col]);
            mpq_class s = w[col][col];
            for (size_t k = 0; k < 2 * n; ++k) w[col][k] /= s;
            for (size_t row = 0; row < n; ++row) {
                if (row == col) continue;
                mpq_class f = w[row][col];
                if (f == 0) continue;
                for (size_t k = 0; k < 2 * n; ++k) w[row][k] -= f * w[col][k];
            }
        }
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j) {
                mpq_class q = w[i][n + j];
                if (q.get_den() != 1) throw std::logic_error("lift_gl: non-integer inverse");
                inv.at(i, j) = q.get_num();
            }
    }
    *lift_inv = inv;
}

ZMat z_standard_j(size_t half) {
    ZMat j(2 * half);
    for (size_t i = 0; i < half; ++i) {
        j.at(i, half + i) = 1;
        j.at(half + i, i) = -1;
    }
    return j;
}

}  // namespace

SymplecticMap lift_to_integer_sp(const Mod4Mat& sbar) {
    if (!m4_is_symplectic(sbar)) throw std::invalid_argument("lift_to_integer_sp: input not symplectic mod 4");
    size_t n = sbar.n;
    size_t half = n / 2;

    // Choose a subset T of coordinates on which to apply the partial
    // Fourier swap so that the D block of sbar * Sigma_T becomes invertible
    // mod 2 (such T always exists: the span of the lower half rows is
    // transverse to some coordinate Lagrangian).
    auto sigma_mod4 = [&](uint32_t mask, bool inverse) {
        Mod4Mat s(n);
        for (size_t i = 0; i < half; ++i) {
            if (mask >> i & 1) {
                s.at(i, half + i) = inverse ? 1 : 3;
                s.at(half + i, i) = inverse ? 3 : 1;
            } else {
                s.at(i, i) = 1;
                s.at(half + i, half + i) = 1;
            }
        }
        return s;
    };
    auto sigma_z = [&](uint32_t mask, bool inverse) {
        ZMat s(n);
        for (size_t i = 0; i < half; ++i) {
            if (mask >> i & 1) {
                s.at(i, half + i) = inverse ? 1 : -1;
                s.at(half + i, i) = inverse ? -1 : 1;
            } else {
                s.at(i, i) = 1;
                s.at(half + i, half + i) = 1;
            }
        }
        return s;
    };

    uint32_t chosen = 0;
    Mod4Mat sp(0);
    bool found = false;
    for (uint32_t mask = 0; mask < (1u << half) && !found; ++mask) {
        Mod4Mat cand = m4_mul(sbar, sigma_mod4(mask, false));
        Mod4Mat d(half);
        for (size_t i = 0; i < half; ++i)
            for (size_t j = 0; j < half; ++j) d.at(i, j) = cand.at(half + i, half + j);
        if (m4_invertible(d)) {
            chosen = mask;
            sp = cand;
            found = true;
        }
    }
    if (!found) throw std::logic_error("lift_to_integer_sp: no coordinate swap exposes an invertible D block");

    Mod4Mat bb(half), cc(half), dd(half);
    for (size_t i = 0; i < half; ++i)
        for (size_t j = 0; j < half; ++j) {
            bb.at(i, j) = sp.at(i, half + j);
            cc.at(i, j) = sp.at(half + i, j);
            dd.at(i, j) = sp.at(half + i, half + j);
        }
    Mod4Mat dinv = m4_inv(dd);
    Mod4Mat x = m4_mul(bb, dinv);          // symmetric
    Mod4Mat y = m4_mul(dinv, cc);          // symmetric
    Mod4Mat u = m4_inv(m4_transpose(dd));  // GL block
    if (x != m4_transpose(x) || y != m4_transpose(y))
        throw std::logic_error("lift_to_integer_sp: Gauss blocks not symmetric");

    ZMat uz(half), uz_inv(half);
    lift_gl(u, &uz, &uz_inv);
    ZMat uz_invt = z_transpose(uz_inv);

    ZMat tx = ZMat::identity(n);   // (I X; 0 I)
    ZMat ly = ZMat::identity(n);   // (I 0; Y I)
    ZMat du = ZMat(n);             // (U 0; 0 U^{-t})
    for (size_t i = 0; i < half; ++i)
        for (size_t j = 0; j < half; ++j) {
            tx.at(i, half + j) = x.at(i, j);
            ly.at(half + i, j) = y.at(i, j);
            du.at(i, j) = uz.at(i, j);
            du.at(half + i, half + j) = uz_invt.at(i, j);
        }
    ZMat lift = z_mul(z_mul(z_mul(tx, du), ly), sigma_z(chosen, true));

    ZMat j = z_standard_j(half);
    ZMat check = z_mul(z_mul(z_transpose(lift), j), lift);
    for (size_t i = 0; i < n * n; ++i)
        if (check.a[i] != j.a[i]) throw std::logic_error("lift_to_integer_sp: lift not symplectic over Z");
    if (z_mod4(lift) != sbar) throw std::logic_error("lift_to_integer_sp: lift does not reduce to input");

    SymplecticMap out;
    out.n = n;
    out.sbar = sbar;
    out.s = std::move(lift.a);
    return out;
}

SymplecticMap sp_inverse(const SymplecticMap& s) {
    size_t n = s.n, half = n / 2;
    ZMat m(n);
    m.a = s.s;
    ZMat j = z_standard_j(half);
    ZMat jneg(n);
    for (size_t i = 0; i < n * n; ++i) jneg.a[i] = -j.a[i];
    ZMat inv = z_mul(z_mul(jneg, z_transpose(m)), j);  // S^{-1} = -J S^t J
    SymplecticMap out;
    out.n = n;
    out.sbar = z_mod4(inv);
    out.s = std::move(inv.a);
    return out;
}

ProjThetaPoint theta_transform(const AffThetaPoint& point, const ThetaNull& null,
                               const SymplecticMap& s, std::mt19937_64& rng) {
    unsigned gg = point.g;
    if (null.g() != gg || s.n != 2 * static_cast<size_t>(gg))
        throw std::invalid_argument("theta_transform: dimension mismatch");
    size_t half = gg;
    size_t count = size_t(1) << gg;
    const FieldRef& f = point.ctx();

    // Mod-4 reductions of the lift blocks and the derived matrices; the
    // whole formula only consumes the lift through these residues.
    std::vector<int64_t> A(half * half), B(half * half), C(half * half), D(half * half);
    for (size_t i = 0; i < half; ++i)
        for (size_t j = 0; j < half; ++j) {
            auto red = [&](const mpz_class& v) {
                mpz_class rm = v % 4;
                return (rm.get_si() + 4) % 4;
            };
            A[i * half + j] = red(s.s[i * s.n + j]);
            B[i * half + j] = red(s.s[i * s.n + half + j]);
            C[i * half + j] = red(s.s[(half + i) * s.n + j]);
            D[i * half + j] = red(s.s[(half + i) * s.n + half + j]);
        }
    // X^t Y mod 4
    auto tmul = [&](const std::vector<int64_t>& xx, const std::vector<int64_t>& yy) {
        std::vector<int64_t> out(half * half, 0);
        for (size_t i = 0; i < half; ++i)
            for (size_t j = 0; j < half; ++j) {
                int64_t acc = 0;
                for (size_t k = 0; k < half; ++k)
                    acc += xx[k * half + i] * yy[k * half + j];
                out[i * half + j] = ((acc % 4) + 4) % 4;
            }
        return out;
    };
    std::vector<int64_t> BtD = tmul(B, D);
    std::vector<int64_t> AtC = tmul(A, C);
    std::vector<int64_t> BtC = tmul(B, C);
    // doubled shift characteristics: diag(C D^t), diag(A B^t)
    std::vector<int64_t> dCD(half, 0), dAB(half, 0);
    for (size_t j = 0; j < half; ++j) {
        int64_t s1 = 0, s2 = 0;
        for (size_t k = 0; k < half; ++k) {
            s1 += C[j * half + k] * D[j * half + k];
            s2 += A[j * half + k] * B[j * half + k];
        }
        dCD[j] = ((s1 % 4) + 4) % 4;
        dAB[j] = ((s2 % 4) + 4) % 4;
    }

    // Accumulators per output index, split by the power of i carried by
    // xi^2 and the representative-reduction sign.
    std::vector<std::array<FieldElem, 4>> acc(count);
    for (auto& row : acc) row = {f->zero(), f->zero(), f->zero(), f->zero()};

    std::vector<FieldElem> u(count, f->zero());
    std::vector<FieldElem> t(count, f->zero());
    std::vector<int64_t> va(half), vb(half), ap(half), bp(half);
    for (size_t b = 0; b < count; ++b) {
        // Fast +/-1 Walsh transform of i |-> theta_{b^i}(z) theta_i(0)
        // gives sum_i (-1)^{<a,i>} ... for all a at once.
        for (size_t i = 0; i < count; ++i) u[i] = point.c[b ^ i] * null.point().c[i];
        t = u;
        for (size_t bit = 1; bit < count; bit <<= 1)
            for (size_t lo = 0; lo < count; lo += bit << 1)
                for (size_t k = lo; k < lo + bit; ++k) {
                    FieldElem p = t[k] + t[k + bit];
                    FieldElem q = t[k] - t[k + bit];
                    t[k] = p;
                    t[k + bit] = q;
                }
        for (size_t a = 0; a < count; ++a) {
            // image characteristic in doubled (integer) coordinates:
            // a' = D a - C b + diag(C D^t), b' = -B a + A b + diag(A B^t)
            for (size_t j = 0; j < half; ++j) {
                va[j] = static_cast<int64_t>(a >> j & 1);
                vb[j] = static_cast<int64_t>(b >> j & 1);
            }
            for (size_t j = 0; j < half; ++j) {
                int64_t ra = dCD[j], rb = dAB[j];
                for (size_t k = 0; k < half; ++k) {
                    ra += D[j * half + k] * va[k] - C[j * half + k] * vb[k];
                    rb += A[j * half + k] * vb[k] - B[j * half + k] * va[k];
                }
                ap[j] = ra;
                bp[j] = rb;
            }
            // reduce to representatives in {0,1}: shifting a by integers is
            // exact, and shifting b by an integer vector scales the squared
            // coordinate by exp(4*pi*i*a^t n) = 1 (a is half-integral), so
            // no correction factor arises for squares
            size_t bprime = 0;
            for (size_t j = 0; j < half; ++j)
                bprime |= static_cast<size_t>(((bp[j] % 2) + 2) % 2) << j;
            // xi^2 as a power of i (mod 4), from the squared automorphy
            // factor: -a^t(B^t D)a - b^t(A^t C)b + 2 a^t(B^t C)b
            //         + 2 diag(A B^t)^t (D a - C b)
            int64_t k4 = 0;
            for (size_t j = 0; j < half; ++j)
                for (size_t k = 0; k < half; ++k) {
                    k4 -= va[j] * BtD[j * half + k] * va[k];
                    k4 -= vb[j] * AtC[j * half + k] * vb[k];
                    k4 += 2 * va[j] * BtC[j * half + k] * vb[k];
                    k4 += 2 * dAB[j] * (D[j * half + k] * va[k] - C[j * half + k] * vb[k]);
                }
            size_t bucket = static_cast<size_t>(((k4 % 4) + 4) % 4);
            acc[bprime][bucket] = acc[bprime][bucket] + t[a];
        }
    }

    std::vector<FieldElem> real(count, f->zero()), imag(count, f->zero());
    bool need_i = false;
    for (size_t bp2 = 0; bp2 < count; ++bp2) {
        real[bp2] = acc[bp2][0] - acc[bp2][2];
        imag[bp2] = acc[bp2][1] - acc[bp2][3];
        if (!imag[bp2].is_zero()) need_i = true;
    }
    std::vector<FieldElem> out(count, f->zero());
    if (need_i) {
        FieldElem iunit = f->zero();
        try {
            iunit = nth_root(-f->one(), 2, rng);
        } catch (const FieldCapabilityError&) {
            throw FieldCapabilityError(
                "theta transformation needs a fourth root of unity; extend the field by degree 2");
        }
        for (size_t bp2 = 0; bp2 < count; ++bp2) out[bp2] = real[bp2] + iunit * imag[bp2];
    } else {
        out = real;
    }
    AffThetaPoint res(gg, std::move(out));
    if (res.all_zero()) throw DegenerateError("theta_transform: transformation degenerate");
    return ProjThetaPoint{res};
}

std::vector<FieldElem> unfold_product(const std::vector<FieldElem>& coords,
                                      size_t g, size_t r) {
    size_t count = size_t(1) << (g * r);
    if (coords.size() != count) throw std::invalid_argument("unfold_product: coordinate count mismatch");
    size_t slice = size_t(1) << g;
    size_t tails = size_t(1) << (g * (r - 1));
    const FieldRef& f = coords[0].ctx();

    size_t best_tail = tails;
    size_t best_count = 0;
    for (size_t tail = 0; tail < tails; ++tail) {
        size_t nz = 0;
        for (size_t k = 0; k < slice; ++k)
            if (!coords[k | (tail << g)].is_zero()) ++nz;
        if (nz > best_count) {
            best_count = nz;
            best_tail = tail;
        }
    }
    if (best_tail == tails) throw DegenerateError("unfold_product: every tail slice vanishes");

    std::vector<FieldElem> chosen(slice, f->zero());
    for (size_t k = 0; k < slice; ++k) chosen[k] = coords[k | (best_tail << g)];

    // cross-ratio consistency against every other usable tail
    for (size_t tail = 0; tail < tails; ++tail) {
        if (tail == best_tail) continue;
        bool any = false;
        for (size_t k = 0; k < slice && !any; ++k)
            if (!coords[k | (tail << g)].is_zero()) any = true;
        if (!any) continue;
        for (size_t k1 = 0; k1 < slice; ++k1)
            for (size_t k2 = k1 + 1; k2 < slice; ++k2) {
                FieldElem lhs = chosen[k1] * coords[k2 | (tail << g)];
                FieldElem rhs = chosen[k2] * coords[k1 | (tail << g)];
                if (!(lhs == rhs))
                    throw std::runtime_error("unfold_product: inconsistent tail slices");
            }
    }

    // normalize by the first nonzero coordinate
    for (size_t k = 0; k < slice; ++k)
        if (!chosen[k].is_zero()) {
            FieldElem inv = f->inv(chosen[k]);
            std::vector<FieldElem> nrm(slice, f->zero());
            for (size_t j = 0; j < slice; ++j) nrm[j] = chosen[j] * inv;
            return nrm;
        }
    throw DegenerateError("unfold_product: chosen slice vanishes");
}

}  // namespace cyciso

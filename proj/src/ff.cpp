#include "cyciso/ff.hpp"

#include <algorithm>
#include <cassert>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include "cyciso/poly.hpp"

namespace cyciso {

namespace {

bool is_small_prime(uint64_t n) {
    if (n < 2) return false;
    for (uint64_t d = 2; d * d <= n; ++d)
        if (n % d == 0) return false;
    return true;
}

std::vector<std::pair<uint64_t, unsigned>> factor_small(uint64_t n) {
    std::vector<std::pair<uint64_t, unsigned>> out;
    for (uint64_t d = 2; d * d <= n; ++d) {
        if (n % d == 0) {
            unsigned m = 0;
            while (n % d == 0) { n /= d; ++m; }
            out.emplace_back(d, m);
        }
    }
    if (n > 1) out.emplace_back(n, 1);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// FieldElem

FieldElem::FieldElem(FieldRef ctx, std::vector<uint64_t> coeffs)
    : ctx_(std::move(ctx)), c_(std::move(coeffs)) {
    if (c_.size() != ctx_->degree())
        throw std::invalid_argument("FieldElem: coefficient count mismatch");
    for (auto& v : c_) v %= ctx_->p();
}

bool FieldElem::is_zero() const {
    return std::all_of(c_.begin(), c_.end(), [](uint64_t v) { return v == 0; });
}

bool FieldElem::is_one() const {
    if (c_.empty() || c_[0] != 1) return false;
    return std::all_of(c_.begin() + 1, c_.end(),
                       [](uint64_t v) { return v == 0; });
}

bool FieldElem::operator==(const FieldElem& o) const {
    return ctx_.get() == o.ctx_.get() && c_ == o.c_;
}

bool FieldElem::lex_less(const FieldElem& a, const FieldElem& b) {
    return a.c_ < b.c_;
}

FieldElem FieldElem::operator+(const FieldElem& o) const { return ctx_->add(*this, o); }
FieldElem FieldElem::operator-(const FieldElem& o) const { return ctx_->sub(*this, o); }
FieldElem FieldElem::operator-() const { return ctx_->neg(*this); }
FieldElem FieldElem::operator*(const FieldElem& o) const { return ctx_->mul(*this, o); }
FieldElem FieldElem::operator/(const FieldElem& o) const {
    return ctx_->mul(*this, ctx_->inv(o));
}

std::string FieldElem::to_string() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < c_.size(); ++i) os << (i ? "," : "") << c_[i];
    os << "]";
    return os.str();
}

// ---------------------------------------------------------------------------
// FieldCtx construction

FieldRef FieldCtx::prime(uint64_t p) {
    // Interned so that independently built towers over the same p share the
    // base level (context identity is pointer identity).
    static std::mutex mu;
    static std::map<uint64_t, FieldRef> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(p);
    if (it != cache.end()) return it->second;
    if (!is_small_prime(p) || p == 2)
        throw std::invalid_argument("FieldCtx::prime: need an odd prime");
    if (p >= (1ull << 20))
        throw std::invalid_argument("FieldCtx::prime: p too large for this build");
    auto ctx = std::shared_ptr<FieldCtx>(new FieldCtx());
    ctx->p_ = p;
    ctx->degree_ = 1;
    ctx->step_degree_ = 1;
    ctx->q_ = p;
    ctx->qm1_ = ctx->q_ - 1;
    cache[p] = ctx;
    return ctx;
}

FieldRef FieldCtx::extend(FieldRef base, const std::vector<FieldElem>& modulus) {
    if (!base) throw std::invalid_argument("extend: null base");
    if (modulus.size() < 3)
        throw std::invalid_argument("extend: modulus degree must be >= 2");
    for (auto& c : modulus)
        if (c.ctx().get() != base.get())
            throw std::invalid_argument("extend: modulus coefficients not over base");
    if (!modulus.back().is_one())
        throw std::invalid_argument("extend: modulus must be monic");
    Poly f(base, modulus);
    if (f.degree() + 1 != static_cast<int>(modulus.size()))
        throw std::invalid_argument("extend: modulus has zero leading coefficient");
    if (!f.is_irreducible())
        throw std::invalid_argument("extend: modulus is reducible");

    auto ctx = std::shared_ptr<FieldCtx>(new FieldCtx());
    ctx->base_ = base;
    ctx->p_ = base->p();
    ctx->step_degree_ = modulus.size() - 1;
    ctx->degree_ = base->degree() * ctx->step_degree_;
    // Guard the lazy-reduction accumulators in mul_flat.
    if (mpz_class(ctx->p_) * ctx->p_ * 2 * ctx->degree_ >= mpz_class(1) << 62)
        throw std::invalid_argument("extend: p^2 * degree too large for this build");
    ctx->modulus_elems_ = modulus;
    ctx->mod_.resize(ctx->step_degree_);
    for (size_t j = 0; j < ctx->step_degree_; ++j)
        ctx->mod_[j] = modulus[j].coeffs();
    mpz_ui_pow_ui(ctx->q_.get_mpz_t(), ctx->p_, ctx->degree_);
    ctx->qm1_ = ctx->q_ - 1;
    return ctx;
}

FieldRef FieldCtx::extend(FieldRef base, size_t degree, std::mt19937_64& rng) {
    if (degree < 2) throw std::invalid_argument("extend: degree must be >= 2");
    for (int tries = 0; tries < 20000; ++tries) {
        Poly f = Poly::random_monic(base, degree, rng);
        if (f.is_irreducible()) return extend(base, f.coeffs());
    }
    throw std::runtime_error("extend: no irreducible polynomial found");
}

// ---------------------------------------------------------------------------
// FieldCtx element helpers

void FieldCtx::check(const FieldElem& a) const {
    if (a.ctx_.get() != this)
        throw std::invalid_argument("FieldElem from a different field context");
}

FieldElem FieldCtx::zero() const {
    FieldElem e;
    e.ctx_ = shared_from_this();
    e.c_.assign(degree_, 0);
    return e;
}

FieldElem FieldCtx::one() const { return from_int(1); }

FieldElem FieldCtx::from_int(int64_t v) const {
    FieldElem e = zero();
    int64_t r = v % static_cast<int64_t>(p_);
    if (r < 0) r += p_;
    e.c_[0] = static_cast<uint64_t>(r);
    return e;
}

FieldElem FieldCtx::from_mpz(const mpz_class& v) const {
    mpz_class r = v % p_;
    if (r < 0) r += p_;
    return from_int(r.get_si());
}

FieldElem FieldCtx::gen() const {
    if (is_prime_field())
        throw std::logic_error("gen: prime field has no extension generator");
    FieldElem e = zero();
    e.c_[base_->degree()] = 1;
    return e;
}

FieldElem FieldCtx::elem(std::vector<uint64_t> coeffs) const {
    return FieldElem(shared_from_this(), std::move(coeffs));
}

FieldElem FieldCtx::from_base(const FieldElem& b) const {
    if (b.ctx().get() == this) return b;
    if (is_prime_field())
        throw std::invalid_argument("from_base: element not from a subfield");
    FieldElem lower = (b.ctx().get() == base_.get()) ? b : base_->from_base(b);
    FieldElem e = zero();
    std::copy(lower.c_.begin(), lower.c_.end(), e.c_.begin());
    return e;
}

FieldElem FieldCtx::random(std::mt19937_64& rng) const {
    FieldElem e = zero();
    for (auto& v : e.c_) v = rng() % p_;
    return e;
}

bool FieldCtx::has_subfield(const FieldRef& sub) const {
    const FieldCtx* c = this;
    while (c) {
        if (c == sub.get()) return true;
        c = c->base_.get();
    }
    return false;
}

// ---------------------------------------------------------------------------
// Arithmetic

FieldElem FieldCtx::add(const FieldElem& a, const FieldElem& b) const {
    check(a); check(b);
    FieldElem out = a;
    for (size_t i = 0; i < degree_; ++i) {
        out.c_[i] += b.c_[i];
        if (out.c_[i] >= p_) out.c_[i] -= p_;
    }
    return out;
}

FieldElem FieldCtx::sub(const FieldElem& a, const FieldElem& b) const {
    check(a); check(b);
    FieldElem out = a;
    for (size_t i = 0; i < degree_; ++i) {
        out.c_[i] += p_ - b.c_[i];
        if (out.c_[i] >= p_) out.c_[i] -= p_;
    }
    return out;
}

FieldElem FieldCtx::neg(const FieldElem& a) const {
    check(a);
    FieldElem out = a;
    for (size_t i = 0; i < degree_; ++i)
        if (out.c_[i]) out.c_[i] = p_ - out.c_[i];
    return out;
}

void FieldCtx::mul_flat(const uint64_t* a, const uint64_t* b, uint64_t* out) const {
    if (is_prime_field()) {
        out[0] = (a[0] * b[0]) % p_;
        return;
    }
    const size_t d = step_degree_;
    const size_t Db = base_->degree();
    if (base_->is_prime_field()) {
        // Flat schoolbook over F_p with lazy reduction (guarded at construction).
        std::vector<uint64_t> t(2 * d - 1, 0);
        for (size_t i = 0; i < d; ++i) {
            if (!a[i]) continue;
            for (size_t j = 0; j < d; ++j) t[i + j] += a[i] * b[j];
        }
        for (auto& v : t) v %= p_;
        for (size_t k = 2 * d - 2; k >= d; --k) {
            uint64_t c = t[k];
            if (c) {
                for (size_t j = 0; j < d; ++j) {
                    uint64_t m = mod_[j][0];
                    if (m) t[k - d + j] = (t[k - d + j] + c * (p_ - m)) % p_;
                }
            }
            if (k == d) break;
        }
        std::copy(t.begin(), t.begin() + d, out);
        return;
    }
    // Generic tower level: blocks of base elements.
    std::vector<uint64_t> acc((2 * d - 1) * Db, 0);
    std::vector<uint64_t> prod(Db);
    auto block_zero = [&](const uint64_t* blk) {
        return std::all_of(blk, blk + Db, [](uint64_t v) { return v == 0; });
    };
    for (size_t i = 0; i < d; ++i) {
        if (block_zero(a + i * Db)) continue;
        for (size_t j = 0; j < d; ++j) {
            if (block_zero(b + j * Db)) continue;
            base_->mul_flat(a + i * Db, b + j * Db, prod.data());
            uint64_t* dst = acc.data() + (i + j) * Db;
            for (size_t u = 0; u < Db; ++u) {
                dst[u] += prod[u];
                if (dst[u] >= p_) dst[u] -= p_;
            }
        }
    }
    for (size_t k = 2 * d - 2; k >= d; --k) {
        uint64_t* blk = acc.data() + k * Db;
        if (!block_zero(blk)) {
            for (size_t j = 0; j < d; ++j) {
                if (block_zero(mod_[j].data())) continue;
                base_->mul_flat(blk, mod_[j].data(), prod.data());
                uint64_t* dst = acc.data() + (k - d + j) * Db;
                for (size_t u = 0; u < Db; ++u) {
                    dst[u] += p_ - prod[u];
                    if (dst[u] >= p_) dst[u] -= p_;
                }
            }
        }
        if (k == d) break;
    }
    std::copy(acc.begin(), acc.begin() + d * Db, out);
}

FieldElem FieldCtx::mul(const FieldElem& a, const FieldElem& b) const {
    check(a); check(b);
    FieldElem out = zero();
    mul_flat(a.c_.data(), b.c_.data(), out.c_.data());
    return out;
}

FieldElem FieldCtx::pow(const FieldElem& a, const mpz_class& e) const {
    check(a);
    if (e < 0) return pow(inv(a), mpz_class(-e));
    if (e == 0) return one();
    size_t bits = mpz_sizeinbase(e.get_mpz_t(), 2);
    FieldElem r = a;
    for (size_t i = bits - 1; i-- > 0;) {
        r = mul(r, r);
        if (mpz_tstbit(e.get_mpz_t(), i)) r = mul(r, a);
    }
    return r;
}

FieldElem FieldCtx::pow(const FieldElem& a, int64_t e) const {
    return pow(a, mpz_class(static_cast<long>(e)));
}

FieldElem FieldCtx::inv(const FieldElem& a) const {
    check(a);
    if (a.is_zero()) throw std::domain_error("FieldCtx::inv: division by zero");
    return pow(a, mpz_class(q_ - 2));
}

FieldElem FieldCtx::frobenius(const FieldElem& a, unsigned k) const {
    mpz_class e;
    mpz_ui_pow_ui(e.get_mpz_t(), p_, k);
    return pow(a, e);
}

// ---------------------------------------------------------------------------
// Embedding

Embedding::Embedding(FieldRef src, FieldRef dst, std::mt19937_64& rng)
    : src_(std::move(src)), dst_(std::move(dst)) {
    if (src_->p() != dst_->p())
        throw std::invalid_argument("Embedding: different characteristics");
    if (dst_->degree() % src_->degree() != 0)
        throw FieldCapabilityError("Embedding: source degree does not divide target degree");
    // Collect tower steps bottom-up.
    std::vector<const FieldCtx*> steps;
    for (const FieldCtx* c = src_.get(); !c->is_prime_field(); c = c->base().get())
        steps.push_back(c);
    std::reverse(steps.begin(), steps.end());
    for (const FieldCtx* step : steps) {
        // Map this step's modulus through the embedding built so far, then
        // root-find in the destination.
        std::vector<FieldElem> mapped;
        for (auto& c : step->modulus()) mapped.push_back(apply_level(step->base().get(), c.coeffs().data()));
        Poly f(dst_, mapped);
        auto rts = f.roots(rng);
        if (rts.empty())
            throw FieldCapabilityError("Embedding: step modulus has no root in target");
        gen_images_.push_back(rts.front());  // roots() is lex-sorted
    }
}

FieldElem Embedding::apply_level(const FieldCtx* level, const uint64_t* flat) const {
    if (level->is_prime_field())
        return dst_->from_int(static_cast<int64_t>(flat[0]));
    // Depth of `level` = number of extension steps below and including it.
    size_t depth = 0;
    for (const FieldCtx* c = level; !c->is_prime_field(); c = c->base().get()) ++depth;
    const FieldElem& img = gen_images_[depth - 1];
    const size_t d = level->step_degree();
    const size_t Db = level->base()->degree();
    FieldElem acc = dst_->zero();
    for (size_t j = d; j-- > 0;) {
        acc = acc * img + apply_level(level->base().get(), flat + j * Db);
    }
    return acc;
}

FieldElem Embedding::apply(const FieldElem& a) const {
    if (a.ctx().get() != src_.get())
        throw std::invalid_argument("Embedding::apply: wrong source field");
    return apply_level(src_.get(), a.coeffs().data());
}

// ---------------------------------------------------------------------------
// Roots of unity and n-th roots

namespace {

// Primitive g-th root of unity; requires g | q-1.
FieldElem primitive_root_of_unity(const FieldRef& f, uint64_t g,
                                  std::mt19937_64& rng) {
    const mpz_class& e = f->mult_order();
    if (e % g != 0)
        throw FieldCapabilityError("roots of unity: order does not divide q-1");
    if (g == 1) return f->one();
    auto fac = factor_small(g);
    mpz_class cof = e / g;
    for (int tries = 0; tries < 40000; ++tries) {
        FieldElem h = f->random(rng);
        if (h.is_zero()) continue;
        FieldElem z = f->pow(h, cof);
        bool primitive = !z.is_one();
        for (auto& [r, m] : fac) {
            (void)m;
            if (!primitive) break;
            if (f->pow(z, mpz_class(g / r)).is_one()) primitive = false;
        }
        if (primitive) return z;
    }
    throw std::runtime_error("primitive_root_of_unity: search failed");
}

// One r-th root for prime r, Adleman–Manders–Miller. Not canonicalized.
FieldElem prime_root(const FieldElem& c, uint64_t r, std::mt19937_64& rng) {
    const FieldRef& f = c.ctx();
    const mpz_class& e = f->mult_order();
    if (e % r != 0) {
        // r is coprime to the group order: unique root by exponent inversion.
        mpz_class rinv;
        mpz_class rr(static_cast<unsigned long>(r));
        if (!mpz_invert(rinv.get_mpz_t(), rr.get_mpz_t(), e.get_mpz_t()))
            throw std::logic_error("prime_root: inversion failed");
        return f->pow(c, rinv);
    }
    if (!f->pow(c, mpz_class(e / r)).is_one())
        throw FieldCapabilityError("nth_root: element is not an r-th power");
    // e = r^s * u with r coprime to u.
    mpz_class u = e;
    unsigned s = 0;
    while (u % r == 0) { u /= r; ++s; }
    // Nonresidue z, generator g = z^u of the Sylow r-subgroup (order r^s).
    FieldElem z = f->one();
    for (int tries = 0;; ++tries) {
        if (tries > 40000) throw std::runtime_error("prime_root: no nonresidue found");
        FieldElem h = f->random(rng);
        if (h.is_zero()) continue;
        if (!f->pow(h, mpz_class(e / r)).is_one()) { z = h; break; }
    }
    FieldElem g = f->pow(z, u);
    // Discrete log of t = c^u in <g> by Pohlig–Hellman base r.
    FieldElem t = f->pow(c, u);
    mpz_class w = 0, rk = 1;
    FieldElem ginv = f->inv(g);
    for (unsigned k = 0; k < s; ++k) {
        // Digit d_k: (t * g^{-w})^{r^{s-1-k}} = (g^{r^k})^{digit * r^{s-1-k}}.
        FieldElem cur = f->mul(t, f->pow(ginv, w));
        mpz_class ex;
        mpz_ui_pow_ui(ex.get_mpz_t(), r, s - 1 - k);
        cur = f->pow(cur, ex);
        // cur lies in the order-r subgroup generated by gr = g^{r^{s-1}}.
        mpz_class exg;
        mpz_ui_pow_ui(exg.get_mpz_t(), r, s - 1);
        FieldElem gr = f->pow(g, exg);
        FieldElem probe = f->one();
        uint64_t digit = 0;
        while (probe != cur) {
            probe = f->mul(probe, gr);
            if (++digit >= r) throw std::logic_error("prime_root: dlog failed");
        }
        w += rk * digit;
        rk *= static_cast<unsigned long>(r);
    }
    // t = g^w with r | w (c is an r-th power). Write 1 = r*A + u*B.
    if (w % r != 0) throw std::logic_error("prime_root: dlog not divisible");
    mpz_class A, B, gcd, rr(static_cast<unsigned long>(r));
    mpz_gcdext(gcd.get_mpz_t(), A.get_mpz_t(), B.get_mpz_t(), rr.get_mpz_t(),
               u.get_mpz_t());
    if (gcd != 1) throw std::logic_error("prime_root: gcd(r,u) != 1");
    // y = c^A * g^{(w/r)*B} satisfies y^r = c^{rA} * g^{wB} = c^{rA+uB} = c.
    return f->mul(f->pow(c, A), f->pow(g, mpz_class((w / r) * B)));
}

}  // namespace

FieldRef build_tower(uint64_t p, const std::vector<size_t>& degrees,
                     std::mt19937_64& rng) {
    FieldRef ctx = FieldCtx::prime(p);
    for (size_t d : degrees) {
        if (d == 0) throw std::invalid_argument("build_tower: zero step degree");
        if (d > 1) ctx = FieldCtx::extend(ctx, d, rng);
    }
    return ctx;
}

bool has_nth_root(const FieldElem& c, uint64_t n) {
    if (c.is_zero()) return true;
    const FieldRef& f = c.ctx();
    mpz_class g, nn(static_cast<unsigned long>(n));
    mpz_gcd(g.get_mpz_t(), nn.get_mpz_t(), f->mult_order().get_mpz_t());
    return f->pow(c, mpz_class(f->mult_order() / g)).is_one();
}

FieldElem nth_root(const FieldElem& c, uint64_t n, std::mt19937_64& rng) {
    const FieldRef& f = c.ctx();
    if (n == 0) throw std::invalid_argument("nth_root: n must be positive");
    if (c.is_zero()) return f->zero();
    if (!has_nth_root(c, n)) {
        // Find the minimal extension degree that would make the root exist;
        // c has order o | q-1, and in F_{q^j} the root exists iff
        // c^{(q^j-1)/gcd(n, q^j-1)} = 1, checkable inside F_q.
        const mpz_class& e = f->mult_order();
        mpz_class nn(static_cast<unsigned long>(n));
        for (unsigned j = 2; j <= 128; ++j) {
            mpz_class qj;
            mpz_pow_ui(qj.get_mpz_t(), f->order().get_mpz_t(), j);
            mpz_class ej = qj - 1, g;
            mpz_gcd(g.get_mpz_t(), nn.get_mpz_t(), ej.get_mpz_t());
            mpz_class m = (ej / g) % e;
            if (f->pow(c, m).is_one())
                throw FieldCapabilityError(
                    "nth_root: no root in the current field; extend the field "
                    "by degree " + std::to_string(j));
        }
        throw FieldCapabilityError("nth_root: no root in any small extension");
    }
    FieldElem y = c;
    for (auto& [r, m] : factor_small(n))
        for (unsigned i = 0; i < m; ++i) y = prime_root(y, r, rng);
    // Canonicalize: lexicographically least among y * mu_g, g = gcd(n, q-1).
    mpz_class g, nn(static_cast<unsigned long>(n));
    mpz_gcd(g.get_mpz_t(), nn.get_mpz_t(), f->mult_order().get_mpz_t());
    uint64_t gu = mpz_class(g).get_ui();
    if (gu > 1) {
        FieldElem zeta = primitive_root_of_unity(f, gu, rng);
        FieldElem best = y, cur = y;
        for (uint64_t i = 1; i < gu; ++i) {
            cur = f->mul(cur, zeta);
            if (FieldElem::lex_less(cur, best)) best = cur;
        }
        y = best;
    }
    return y;
}

std::vector<FieldElem> roots_of_unity(const FieldRef& f, uint64_t e,
                                      std::mt19937_64& rng) {
    FieldElem zeta = primitive_root_of_unity(f, e, rng);
    std::vector<FieldElem> out;
    FieldElem cur = f->one();
    for (uint64_t i = 0; i < e; ++i) {
        out.push_back(cur);
        cur = f->mul(cur, zeta);
    }
    std::sort(out.begin(), out.end(), FieldElem::lex_less);
    return out;
}

}  // namespace cyciso

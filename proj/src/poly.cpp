#include "cyciso/poly.hpp"

#include <algorithm>
#include <sstream>

namespace cyciso {

Poly::Poly(FieldRef ctx, std::vector<FieldElem> coeffs)
    : ctx_(std::move(ctx)), c_(std::move(coeffs)) {
    for (auto& c : c_)
        if (c.ctx().get() != ctx_.get())
            throw std::invalid_argument("Poly: coefficient field mismatch");
    normalize();
}

void Poly::normalize() {
    while (!c_.empty() && c_.back().is_zero()) c_.pop_back();
}

Poly Poly::x(const FieldRef& ctx) {
    return Poly(ctx, {ctx->zero(), ctx->one()});
}

Poly Poly::constant(const FieldElem& c) {
    return Poly(c.ctx(), {c});
}

Poly Poly::random_monic(const FieldRef& ctx, size_t deg, std::mt19937_64& rng) {
    std::vector<FieldElem> c;
    for (size_t i = 0; i < deg; ++i) c.push_back(ctx->random(rng));
    c.push_back(ctx->one());
    return Poly(ctx, std::move(c));
}

FieldElem Poly::coeff(size_t i) const {
    if (i < c_.size()) return c_[i];
    return ctx_->zero();
}

const FieldElem& Poly::lead() const {
    if (c_.empty()) throw std::logic_error("Poly::lead: zero polynomial");
    return c_.back();
}

Poly Poly::operator+(const Poly& o) const {
    std::vector<FieldElem> c;
    size_t n = std::max(c_.size(), o.c_.size());
    for (size_t i = 0; i < n; ++i) c.push_back(coeff(i) + o.coeff(i));
    return Poly(ctx_, std::move(c));
}

Poly Poly::operator-(const Poly& o) const {
    std::vector<FieldElem> c;
    size_t n = std::max(c_.size(), o.c_.size());
    for (size_t i = 0; i < n; ++i) c.push_back(coeff(i) - o.coeff(i));
    return Poly(ctx_, std::move(c));
}

Poly Poly::operator-() const {
    std::vector<FieldElem> c;
    for (auto& v : c_) c.push_back(-v);
    return Poly(ctx_, std::move(c));
}

Poly Poly::operator*(const Poly& o) const {
    if (is_zero() || o.is_zero()) return Poly(ctx_);
    std::vector<FieldElem> c(c_.size() + o.c_.size() - 1, ctx_->zero());
    for (size_t i = 0; i < c_.size(); ++i) {
        if (c_[i].is_zero()) continue;
        for (size_t j = 0; j < o.c_.size(); ++j)
            c[i + j] += c_[i] * o.c_[j];
    }
    return Poly(ctx_, std::move(c));
}

bool Poly::operator==(const Poly& o) const {
    return ctx_.get() == o.ctx_.get() && c_ == o.c_;
}

Poly Poly::scaled(const FieldElem& s) const {
    std::vector<FieldElem> c;
    for (auto& v : c_) c.push_back(v * s);
    return Poly(ctx_, std::move(c));
}

Poly Poly::monic() const {
    if (is_zero()) return *this;
    return scaled(ctx_->inv(lead()));
}

Poly Poly::shifted(size_t k) const {
    if (is_zero()) return *this;
    std::vector<FieldElem> c(k, ctx_->zero());
    c.insert(c.end(), c_.begin(), c_.end());
    return Poly(ctx_, std::move(c));
}

void Poly::divrem(const Poly& a, const Poly& b, Poly& q, Poly& r) {
    if (b.is_zero()) throw std::domain_error("Poly::divrem: division by zero");
    const FieldRef& ctx = a.ctx_;
    FieldElem linv = ctx->inv(b.lead());
    std::vector<FieldElem> rem = a.c_;
    std::vector<FieldElem> quo;
    int db = b.degree();
    int dr = a.degree();
    if (dr >= db) quo.assign(dr - db + 1, ctx->zero());
    while (dr >= db) {
        FieldElem f = rem[dr] * linv;
        quo[dr - db] = f;
        if (!f.is_zero())
            for (int i = 0; i <= db; ++i)
                rem[dr - db + i] -= f * b.c_[i];
        --dr;
        while (dr >= 0 && rem[dr].is_zero()) --dr;
    }
    rem.resize(dr + 1);
    q = Poly(ctx, std::move(quo));
    r = Poly(ctx, std::move(rem));
}

Poly Poly::rem(const Poly& mod) const {
    Poly q, r;
    divrem(*this, mod, q, r);
    return r;
}

Poly Poly::gcd(Poly a, Poly b) {
    while (!b.is_zero()) {
        Poly r = a.rem(b);
        a = std::move(b);
        b = std::move(r);
    }
    return a.monic();
}

Poly Poly::powmod(const Poly& base, const mpz_class& e, const Poly& mod) {
    if (e < 0) throw std::invalid_argument("Poly::powmod: negative exponent");
    Poly b = base.rem(mod);
    if (e == 0) return Poly(base.ctx_, {base.ctx_->one()});
    size_t bits = mpz_sizeinbase(e.get_mpz_t(), 2);
    Poly r = b;
    for (size_t i = bits - 1; i-- > 0;) {
        r = (r * r).rem(mod);
        if (mpz_tstbit(e.get_mpz_t(), i)) r = (r * b).rem(mod);
    }
    return r;
}

FieldElem Poly::eval(const FieldElem& at) const {
    FieldElem acc = ctx_->zero();
    for (size_t i = c_.size(); i-- > 0;) acc = acc * at + c_[i];
    return acc;
}

Poly Poly::derivative() const {
    std::vector<FieldElem> c;
    for (size_t i = 1; i < c_.size(); ++i)
        c.push_back(c_[i] * ctx_->from_int(static_cast<int64_t>(i)));
    return Poly(ctx_, std::move(c));
}

bool Poly::is_irreducible() const {
    int n = degree();
    if (n <= 0) return false;
    if (n == 1) return true;
    const mpz_class& q = ctx_->order();
    Poly xp = Poly::x(ctx_);
    // x^{q^n} = x mod f, and gcd(x^{q^{n/r}} - x, f) = 1 for primes r | n.
    mpz_class qn;
    mpz_pow_ui(qn.get_mpz_t(), q.get_mpz_t(), n);
    if (powmod(xp, qn, *this) != xp.rem(*this)) return false;
    uint64_t nn = static_cast<uint64_t>(n);
    for (uint64_t r = 2; r <= nn; ++r) {
        if (nn % r != 0) continue;
        bool prime = true;
        for (uint64_t d = 2; d * d <= r; ++d)
            if (r % d == 0) { prime = false; break; }
        if (!prime) continue;
        mpz_class qk;
        mpz_pow_ui(qk.get_mpz_t(), q.get_mpz_t(), n / r);
        Poly g = gcd(powmod(xp, qk, *this) - xp, *this);
        if (g.degree() != 0) return false;
    }
    return true;
}

std::vector<FieldElem> Poly::roots(std::mt19937_64& rng) const {
    std::vector<FieldElem> out;
    if (degree() <= 0) return out;
    // Split off the product of distinct linear factors.
    Poly xp = Poly::x(ctx_);
    Poly lin = gcd(powmod(xp, ctx_->order(), *this) - xp, *this);
    // Recursive equal-degree splitting into linear factors.
    std::vector<Poly> stack{lin};
    mpz_class half = ctx_->mult_order() / 2;
    while (!stack.empty()) {
        Poly f = stack.back();
        stack.pop_back();
        if (f.degree() == 0) continue;
        if (f.degree() == 1) {
            out.push_back(-(f.monic().coeff(0)));
            continue;
        }
        for (;;) {
            Poly shift(ctx_, {ctx_->random(rng), ctx_->one()});
            Poly h = powmod(shift, half, f) - Poly::constant(ctx_->one());
            Poly g = gcd(h, f);
            if (g.degree() > 0 && g.degree() < f.degree()) {
                Poly q, r;
                divrem(f, g, q, r);
                stack.push_back(g);
                stack.push_back(q);
                break;
            }
        }
    }
    std::sort(out.begin(), out.end(), FieldElem::lex_less);
    return out;
}

std::string Poly::to_string() const {
    if (is_zero()) return "0";
    std::ostringstream os;
    for (size_t i = c_.size(); i-- > 0;) {
        if (c_[i].is_zero()) continue;
        os << c_[i].to_string() << "*x^" << i;
        if (i) os << " + ";
    }
    return os.str();
}

}  // namespace cyciso

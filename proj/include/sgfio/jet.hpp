#pragma once

// Truncated multivariate Taylor arithmetic.
//
// A Jet holds the Taylor coefficients c_beta = (d^beta f)(x0) / beta! of a
// smooth function of n real variables, for all multi-indices |beta| <= K.
// Arithmetic and elementary functions propagate exactly up to order K.

#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sgfio {

using cplx = std::complex<double>;

/// Multi-index alpha in N^n.
class MultiIndex {
public:
    MultiIndex() = default;
    explicit MultiIndex(std::size_t n) : e_(n, 0) {}
    MultiIndex(std::initializer_list<int> entries) : e_(entries) {}
    explicit MultiIndex(std::vector<int> entries) : e_(std::move(entries)) {}

    std::size_t size() const { return e_.size(); }
    int order() const;
    int operator[](std::size_t i) const { return e_[i]; }
    int& operator[](std::size_t i) { return e_[i]; }
    const std::vector<int>& entries() const { return e_; }

    /// alpha! = prod alpha_i!
    double factorial() const;

    /// Concatenation (alpha, beta) in N^{n+m}.
    MultiIndex concat(const MultiIndex& other) const;

    bool operator==(const MultiIndex& o) const = default;
    std::string str() const;

    /// All alpha in N^n with |alpha| <= max_order, graded-lexicographic.
    static std::vector<MultiIndex> enumerate(std::size_t n, int max_order);

private:
    std::vector<int> e_;
};

/// Monomial bookkeeping shared by all jets with the same (n, K).
class JetLayout {
public:
    static std::shared_ptr<const JetLayout> get(std::size_t nvars, int order);

    std::size_t nvars() const { return n_; }
    int order() const { return k_; }
    std::size_t size() const { return monos_.size(); }
    const MultiIndex& monomial(std::size_t i) const { return monos_[i]; }
    int degree(std::size_t i) const { return deg_[i]; }
    /// Index of a multi-index, or npos if its order exceeds K.
    std::size_t index(const MultiIndex& m) const;
    /// Index of monomial i raised by e_v, or npos.
    std::size_t up(std::size_t i, std::size_t v) const { return up_[i * n_ + v]; }
    /// Parent (i = parent + e_var) used for incremental powers; index 0 has none.
    std::size_t parent(std::size_t i) const { return parent_[i]; }
    std::size_t parent_var(std::size_t i) const { return parent_var_[i]; }
    /// First index of degree k (k <= K+1).
    std::size_t degree_begin(int k) const { return deg_begin_[k]; }

    struct Pair {
        std::uint32_t j;
        std::uint32_t k;
    };
    /// For monomial i: all (j, k) with mono_i + mono_j = mono_k, |k| <= K.
    std::span<const Pair> products(std::size_t i) const {
        return {pairs_.data() + pair_begin_[i], pair_begin_[i + 1] - pair_begin_[i]};
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    JetLayout(std::size_t nvars, int order);

private:
    std::size_t key(const MultiIndex& m) const;

    std::size_t n_;
    int k_;
    std::vector<MultiIndex> monos_;
    std::vector<int> deg_;
    std::vector<std::size_t> deg_begin_;
    std::vector<std::size_t> lookup_;
    std::vector<std::size_t> up_;
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> parent_var_;
    std::vector<Pair> pairs_;
    std::vector<std::size_t> pair_begin_;
};

class Jet {
public:
    Jet() = default;
    Jet(std::size_t nvars, int order, cplx constant = 0.0);
    explicit Jet(std::shared_ptr<const JetLayout> layout, cplx constant = 0.0);

    /// The jet of x_var around base, i.e. base + dx_var.
    static Jet variable(std::size_t nvars, int order, std::size_t var, double base);

    std::size_t nvars() const { return layout_->nvars(); }
    int order() const { return layout_->order(); }
    const JetLayout& layout() const { return *layout_; }
    const std::shared_ptr<const JetLayout>& layout_ptr() const { return layout_; }

    cplx value() const { return c_[0]; }
    cplx coeff(std::size_t i) const { return c_[i]; }
    cplx& coeff(std::size_t i) { return c_[i]; }
    cplx coeff(const MultiIndex& m) const;
    std::span<const cplx> coeffs() const { return c_; }
    std::span<cplx> coeffs() { return c_; }

    /// d^beta f (x0) = beta! * c_beta
    cplx partial(const MultiIndex& m) const;

    /// Same function, lower truncation order.
    Jet truncated(int order) const;
    /// Partial derivative d/dx_var; result has order K-1.
    Jet derivative(std::size_t var) const;
    /// d^beta; result has order K-|beta|.
    Jet derivative(const MultiIndex& m) const;

    Jet conj() const;
    /// Jet with the constant term removed.
    Jet increment() const;

    Jet& operator+=(const Jet& o);
    Jet& operator-=(const Jet& o);
    Jet& operator*=(const Jet& o);
    Jet& operator/=(const Jet& o);
    Jet& operator+=(cplx s) { c_[0] += s; return *this; }
    Jet& operator-=(cplx s) { c_[0] -= s; return *this; }
    Jet& operator*=(cplx s);
    Jet& operator/=(cplx s) { return *this *= (1.0 / s); }

    Jet operator-() const;

private:
    std::shared_ptr<const JetLayout> layout_;
    std::vector<cplx> c_;
};

Jet operator+(Jet a, const Jet& b);
Jet operator-(Jet a, const Jet& b);
Jet operator*(const Jet& a, const Jet& b);
Jet operator/(const Jet& a, const Jet& b);
Jet operator+(Jet a, cplx s);
Jet operator+(cplx s, Jet a);
Jet operator-(Jet a, cplx s);
Jet operator-(cplx s, const Jet& a);
Jet operator*(Jet a, cplx s);
Jet operator*(cplx s, Jet a);
Jet operator/(Jet a, cplx s);
Jet operator/(cplx s, const Jet& a);
inline Jet operator+(Jet a, double s) { return std::move(a) + cplx(s); }
inline Jet operator+(double s, Jet a) { return std::move(a) + cplx(s); }
inline Jet operator-(Jet a, double s) { return std::move(a) - cplx(s); }
inline Jet operator-(double s, const Jet& a) { return cplx(s) - a; }
inline Jet operator*(Jet a, double s) { return std::move(a) * cplx(s); }
inline Jet operator*(double s, Jet a) { return std::move(a) * cplx(s); }
inline Jet operator/(Jet a, double s) { return std::move(a) / cplx(s); }
inline Jet operator/(double s, const Jet& a) { return cplx(s) / a; }

/// f(a) for a univariate f given its Taylor coefficients at a.value():
/// taylor[k] = f^{(k)}(a0) / k!.
Jet apply_univariate(const Jet& a, std::span<const cplx> taylor);

Jet exp(const Jet& a);
Jet log(const Jet& a);
Jet sqrt(const Jet& a);
Jet pow(const Jet& a, double p);
Jet sin(const Jet& a);
Jet cos(const Jet& a);
Jet conj(const Jet& a);

/// Real part of the constant term; used for branch selection in piecewise
/// definitions.
inline double base_value(const Jet& a) { return a.value().real(); }
inline double base_value(cplx a) { return a.real(); }
inline double base_value(double a) { return a; }

/// Sum over beta of t_beta * prod_i deltas[i]^beta_i, truncated to the order
/// of the deltas. `t` is a jet in deltas.size() variables; every delta must
/// have zero constant term and share one layout.
Jet substitute(const Jet& t, std::span<const Jet> deltas);

/// Identity jets x_i + dx_i around `x`.
std::vector<Jet> seed(std::span<const double> x, int order);

}  // namespace sgfio

#pragma once

// Smooth (vector-valued) functions on R^n that can be evaluated on plain
// points and composed with jets. Every weight, symbol, amplitude and phase in
// the engine is a Field; derivatives always come from jets, never from
// finite differences.

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sgfio/jet.hpp"

namespace sgfio {

class Field {
public:
    virtual ~Field() = default;

    virtual std::size_t arity() const = 0;
    virtual std::size_t outputs() const { return 1; }

    /// Values at a real point; out.size() == outputs().
    virtual void values(std::span<const double> x, std::span<cplx> out) const;
    /// f(args): args are jets sharing one layout; result truncated to it.
    virtual std::vector<Jet> compose(std::span<const Jet> args) const = 0;

    cplx value(std::span<const double> x) const;
    Jet compose1(std::span<const Jet> args) const;
};

using FieldPtr = std::shared_ptr<const Field>;

/// Taylor jet of output `component` at x, in arity() variables.
Jet taylor(const Field& f, std::span<const double> x, int order, std::size_t component = 0);
std::vector<Jet> taylor_all(const Field& f, std::span<const double> x, int order);

/// Constant terms (real parts) and zero-constant increments of argument jets:
/// composites re-expand at the base point and substitute the increments.
std::vector<double> base_point(std::span<const Jet> args);
std::vector<Jet> increments(std::span<const Jet> args);

// ----------------------------------------------------------- expression fields

/// Field defined by a scalar expression functor usable with T = cplx and T = Jet:
///   template <class T> T operator()(std::span<const T> args) const;
template <class F>
class ExprField final : public Field {
public:
    ExprField(std::size_t arity, F f) : n_(arity), f_(std::move(f)) {}
    std::size_t arity() const override { return n_; }
    void values(std::span<const double> x, std::span<cplx> out) const override {
        std::array<cplx, 12> buf{};
        for (std::size_t i = 0; i < n_; ++i) buf[i] = x[i];
        out[0] = f_(std::span<const cplx>(buf.data(), n_));
    }
    std::vector<Jet> compose(std::span<const Jet> args) const override { return {f_(args)}; }

private:
    std::size_t n_;
    F f_;
};

template <class F>
FieldPtr make_expr(std::size_t arity, F f) {
    return std::make_shared<ExprField<F>>(arity, std::move(f));
}

/// Field assembled from callbacks; used for composites.
class LambdaField final : public Field {
public:
    using ValueFn = std::function<void(std::span<const double>, std::span<cplx>)>;
    using JetFn = std::function<std::vector<Jet>(std::span<const Jet>)>;

    LambdaField(std::size_t arity, std::size_t outputs, ValueFn v, JetFn j)
        : n_(arity), m_(outputs), v_(std::move(v)), j_(std::move(j)) {}
    std::size_t arity() const override { return n_; }
    std::size_t outputs() const override { return m_; }
    void values(std::span<const double> x, std::span<cplx> out) const override {
        if (v_)
            v_(x, out);
        else
            Field::values(x, out);
    }
    std::vector<Jet> compose(std::span<const Jet> args) const override { return j_(args); }

private:
    std::size_t n_, m_;
    ValueFn v_;
    JetFn j_;
};

// ------------------------------------------------------------ generic algebra

FieldPtr constant_field(std::size_t arity, cplx c);
/// x_i as a field of arity n.
FieldPtr coordinate(std::size_t arity, std::size_t i);

/// outer(inner_0(x), ..., inner_k(x)); inner outputs are concatenated and
/// must be real-valued.
FieldPtr compose(FieldPtr outer, std::vector<FieldPtr> inners);
/// outer(x[perm[0]], ..., x[perm[k]]) as a field of arity n.
FieldPtr permute_args(FieldPtr outer, std::size_t arity, std::vector<std::size_t> perm);

FieldPtr add(FieldPtr a, FieldPtr b);
FieldPtr sub(FieldPtr a, FieldPtr b);
FieldPtr mul(FieldPtr a, FieldPtr b);
FieldPtr divide(FieldPtr a, FieldPtr b);
FieldPtr scale(FieldPtr a, cplx s);
FieldPtr conjugate(FieldPtr a);
/// sum_i coeffs[i] * terms[i]
FieldPtr linear_combination(std::vector<FieldPtr> terms, std::vector<cplx> coeffs);
/// Stack scalar fields into one vector field.
FieldPtr stack(std::vector<FieldPtr> parts);
/// One component of a vector field.
FieldPtr component(FieldPtr f, std::size_t i);

/// d^beta f (scalar f), exact via jets.
FieldPtr derivative(FieldPtr f, MultiIndex beta);
/// (d f / d x_v)_{v in vars} as one vector field.
FieldPtr gradient(FieldPtr f, std::vector<std::size_t> vars);

// --------------------------------------------------------------- 2d helpers

/// (x, xi) -> (xi, x) on R^{2d}.
FieldPtr transpose(FieldPtr f, std::size_t d);

}  // namespace sgfio

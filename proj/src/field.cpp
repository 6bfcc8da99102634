#include "sgfio/field.hpp"

#include <stdexcept>

namespace sgfio {

void Field::values(std::span<const double> x, std::span<cplx> out) const {
    std::vector<Jet> args;
    args.reserve(x.size());
    for (double v : x) args.emplace_back(x.size(), 0, v);
    const auto r = compose(args);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = r[i].value();
}

cplx Field::value(std::span<const double> x) const {
    if (outputs() == 1) {
        cplx v;
        values(x, std::span<cplx>(&v, 1));
        return v;
    }
    std::vector<cplx> v(outputs());
    values(x, v);
    return v[0];
}

Jet Field::compose1(std::span<const Jet> args) const { return compose(args).at(0); }

Jet taylor(const Field& f, std::span<const double> x, int order, std::size_t component) {
    const auto args = seed(x, order);
    return f.compose(args).at(component);
}

std::vector<Jet> taylor_all(const Field& f, std::span<const double> x, int order) {
    const auto args = seed(x, order);
    return f.compose(args);
}

std::vector<double> base_point(std::span<const Jet> args) {
    std::vector<double> b(args.size());
    for (std::size_t i = 0; i < args.size(); ++i) b[i] = args[i].value().real();
    return b;
}

std::vector<Jet> increments(std::span<const Jet> args) {
    std::vector<Jet> d;
    d.reserve(args.size());
    for (const auto& a : args) d.push_back(a.increment());
    return d;
}

namespace {

void require_arity(const Field& f, std::size_t n, const char* who) {
    if (f.arity() != n) throw std::invalid_argument(std::string(who) + ": arity mismatch");
}

}  // namespace

FieldPtr constant_field(std::size_t arity, cplx c) {
    return std::make_shared<LambdaField>(
        arity, 1, [c](std::span<const double>, std::span<cplx> out) { out[0] = c; },
        [c](std::span<const Jet> a) { return std::vector<Jet>{Jet(a[0].layout_ptr(), c)}; });
}

FieldPtr coordinate(std::size_t arity, std::size_t i) {
    if (i >= arity) throw std::out_of_range("coordinate: index out of range");
    return std::make_shared<LambdaField>(
        arity, 1, [i](std::span<const double> x, std::span<cplx> out) { out[0] = x[i]; },
        [i](std::span<const Jet> a) { return std::vector<Jet>{a[i]}; });
}

FieldPtr compose(FieldPtr outer, std::vector<FieldPtr> inners) {
    if (inners.empty()) throw std::invalid_argument("compose: no inner fields");
    const std::size_t n = inners[0]->arity();
    std::size_t total = 0;
    for (const auto& f : inners) {
        require_arity(*f, n, "compose");
        total += f->outputs();
    }
    require_arity(*outer, total, "compose");
    auto val = [outer, inners, total](std::span<const double> x, std::span<cplx> out) {
        std::array<cplx, 12> ibuf{};
        std::array<double, 12> rbuf{};
        std::size_t pos = 0;
        for (const auto& f : inners) {
            f->values(x, std::span<cplx>(ibuf.data() + pos, f->outputs()));
            pos += f->outputs();
        }
        for (std::size_t i = 0; i < total; ++i) rbuf[i] = ibuf[i].real();
        outer->values(std::span<const double>(rbuf.data(), total), out);
    };
    auto jet = [outer, inners](std::span<const Jet> a) {
        std::vector<Jet> mid;
        for (const auto& f : inners) {
            auto r = f->compose(a);
            for (auto& j : r) mid.push_back(std::move(j));
        }
        return outer->compose(mid);
    };
    return std::make_shared<LambdaField>(n, outer->outputs(), val, jet);
}

FieldPtr permute_args(FieldPtr outer, std::size_t arity, std::vector<std::size_t> perm) {
    require_arity(*outer, perm.size(), "permute_args");
    for (auto p : perm)
        if (p >= arity) throw std::out_of_range("permute_args: index out of range");
    auto val = [outer, perm](std::span<const double> x, std::span<cplx> out) {
        std::array<double, 12> buf{};
        for (std::size_t i = 0; i < perm.size(); ++i) buf[i] = x[perm[i]];
        outer->values(std::span<const double>(buf.data(), perm.size()), out);
    };
    auto jet = [outer, perm](std::span<const Jet> a) {
        std::vector<Jet> mid;
        mid.reserve(perm.size());
        for (auto p : perm) mid.push_back(a[p]);
        return outer->compose(mid);
    };
    return std::make_shared<LambdaField>(arity, outer->outputs(), val, jet);
}

namespace {

template <class Op>
FieldPtr binary(FieldPtr a, FieldPtr b, Op op, const char* who) {
    require_arity(*b, a->arity(), who);
    if (a->outputs() != 1 || b->outputs() != 1) throw std::invalid_argument(std::string(who) + ": scalar fields only");
    auto val = [a, b, op](std::span<const double> x, std::span<cplx> out) {
        out[0] = op(a->value(x), b->value(x));
    };
    auto jet = [a, b, op](std::span<const Jet> args) {
        return std::vector<Jet>{op(a->compose1(args), b->compose1(args))};
    };
    return std::make_shared<LambdaField>(a->arity(), 1, val, jet);
}

}  // namespace

FieldPtr add(FieldPtr a, FieldPtr b) {
    return binary(std::move(a), std::move(b), [](const auto& u, const auto& v) { return u + v; }, "add");
}
FieldPtr sub(FieldPtr a, FieldPtr b) {
    return binary(std::move(a), std::move(b), [](const auto& u, const auto& v) { return u - v; }, "sub");
}
FieldPtr mul(FieldPtr a, FieldPtr b) {
    return binary(std::move(a), std::move(b), [](const auto& u, const auto& v) { return u * v; }, "mul");
}
FieldPtr divide(FieldPtr a, FieldPtr b) {
    return binary(std::move(a), std::move(b), [](const auto& u, const auto& v) { return u / v; }, "divide");
}

FieldPtr scale(FieldPtr a, cplx s) {
    auto val = [a, s](std::span<const double> x, std::span<cplx> out) {
        a->values(x, out);
        for (auto& v : out) v *= s;
    };
    auto jet = [a, s](std::span<const Jet> args) {
        auto r = a->compose(args);
        for (auto& j : r) j *= s;
        return r;
    };
    return std::make_shared<LambdaField>(a->arity(), a->outputs(), val, jet);
}

FieldPtr conjugate(FieldPtr a) {
    auto val = [a](std::span<const double> x, std::span<cplx> out) {
        a->values(x, out);
        for (auto& v : out) v = std::conj(v);
    };
    auto jet = [a](std::span<const Jet> args) {
        auto r = a->compose(args);
        for (auto& j : r) j = j.conj();
        return r;
    };
    return std::make_shared<LambdaField>(a->arity(), a->outputs(), val, jet);
}

FieldPtr linear_combination(std::vector<FieldPtr> terms, std::vector<cplx> coeffs) {
    if (terms.empty() || terms.size() != coeffs.size())
        throw std::invalid_argument("linear_combination: size mismatch");
    const std::size_t n = terms[0]->arity();
    for (const auto& t : terms) require_arity(*t, n, "linear_combination");
    auto val = [terms, coeffs](std::span<const double> x, std::span<cplx> out) {
        cplx s = 0.0;
        for (std::size_t i = 0; i < terms.size(); ++i) s += coeffs[i] * terms[i]->value(x);
        out[0] = s;
    };
    auto jet = [terms, coeffs](std::span<const Jet> args) {
        Jet s(args[0].layout_ptr(), 0.0);
        for (std::size_t i = 0; i < terms.size(); ++i) s += terms[i]->compose1(args) * coeffs[i];
        return std::vector<Jet>{s};
    };
    return std::make_shared<LambdaField>(n, 1, val, jet);
}

FieldPtr stack(std::vector<FieldPtr> parts) {
    if (parts.empty()) throw std::invalid_argument("stack: empty");
    const std::size_t n = parts[0]->arity();
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_arity(*p, n, "stack");
        total += p->outputs();
    }
    auto val = [parts](std::span<const double> x, std::span<cplx> out) {
        std::size_t pos = 0;
        for (const auto& p : parts) {
            p->values(x, out.subspan(pos, p->outputs()));
            pos += p->outputs();
        }
    };
    auto jet = [parts](std::span<const Jet> args) {
        std::vector<Jet> out;
        for (const auto& p : parts) {
            auto r = p->compose(args);
            for (auto& j : r) out.push_back(std::move(j));
        }
        return out;
    };
    return std::make_shared<LambdaField>(n, total, val, jet);
}

FieldPtr component(FieldPtr f, std::size_t i) {
    if (i >= f->outputs()) throw std::out_of_range("component: index out of range");
    auto val = [f, i](std::span<const double> x, std::span<cplx> out) {
        std::array<cplx, 12> buf{};
        f->values(x, std::span<cplx>(buf.data(), f->outputs()));
        out[0] = buf[i];
    };
    auto jet = [f, i](std::span<const Jet> args) { return std::vector<Jet>{f->compose(args).at(i)}; };
    return std::make_shared<LambdaField>(f->arity(), 1, val, jet);
}

FieldPtr derivative(FieldPtr f, MultiIndex beta) {
    require_arity(*f, beta.size(), "derivative");
    if (f->outputs() != 1) throw std::invalid_argument("derivative: scalar field only");
    const int b = beta.order();
    if (b == 0) return f;
    auto val = [f, beta, b](std::span<const double> x, std::span<cplx> out) {
        out[0] = taylor(*f, x, b).partial(beta);
    };
    auto jet = [f, beta, b](std::span<const Jet> args) {
        const int K = args[0].order();
        const auto base = base_point(args);
        const Jet t = taylor(*f, base, K + b).derivative(beta);
        const auto d = increments(args);
        return std::vector<Jet>{substitute(t, d)};
    };
    return std::make_shared<LambdaField>(f->arity(), 1, val, jet);
}

FieldPtr gradient(FieldPtr f, std::vector<std::size_t> vars) {
    if (f->outputs() != 1) throw std::invalid_argument("gradient: scalar field only");
    for (auto v : vars)
        if (v >= f->arity()) throw std::out_of_range("gradient: variable out of range");
    auto val = [f, vars](std::span<const double> x, std::span<cplx> out) {
        const Jet t = taylor(*f, x, 1);
        for (std::size_t i = 0; i < vars.size(); ++i) out[i] = t.coeff(1 + vars[i]);
    };
    auto jet = [f, vars](std::span<const Jet> args) {
        const int K = args[0].order();
        const auto base = base_point(args);
        const Jet t = taylor(*f, base, K + 1);
        const auto d = increments(args);
        std::vector<Jet> out;
        out.reserve(vars.size());
        for (auto v : vars) out.push_back(substitute(t.derivative(v), d));
        return out;
    };
    return std::make_shared<LambdaField>(f->arity(), vars.size(), val, jet);
}

FieldPtr transpose(FieldPtr f, std::size_t d) {
    require_arity(*f, 2 * d, "transpose");
    std::vector<std::size_t> perm(2 * d);
    for (std::size_t i = 0; i < d; ++i) {
        perm[i] = d + i;
        perm[d + i] = i;
    }
    return permute_args(std::move(f), 2 * d, std::move(perm));
}

}  // namespace sgfio

#include "sgfio/jet.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace sgfio {

// ---------------------------------------------------------------- MultiIndex

int MultiIndex::order() const { return std::accumulate(e_.begin(), e_.end(), 0); }

double MultiIndex::factorial() const {
    double f = 1.0;
    for (int v : e_)
        for (int k = 2; k <= v; ++k) f *= k;
    return f;
}

MultiIndex MultiIndex::concat(const MultiIndex& other) const {
    std::vector<int> out = e_;
    out.insert(out.end(), other.e_.begin(), other.e_.end());
    return MultiIndex(std::move(out));
}

std::string MultiIndex::str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < e_.size(); ++i) os << (i ? "," : "") << e_[i];
    os << ')';
    return os.str();
}

namespace {

void fill_degree(std::size_t n, int remaining, std::size_t pos, std::vector<int>& cur,
                 std::vector<MultiIndex>& out) {
    if (pos + 1 == n) {
        cur[pos] = remaining;
        out.emplace_back(cur);
        return;
    }
    for (int v = remaining; v >= 0; --v) {
        cur[pos] = v;
        fill_degree(n, remaining - v, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

}  // namespace

std::vector<MultiIndex> MultiIndex::enumerate(std::size_t n, int max_order) {
    std::vector<MultiIndex> out;
    if (n == 0) {
        out.emplace_back(0);
        return out;
    }
    std::vector<int> cur(n, 0);
    for (int k = 0; k <= max_order; ++k) fill_degree(n, k, 0, cur, out);
    return out;
}

// ----------------------------------------------------------------- JetLayout

JetLayout::JetLayout(std::size_t nvars, int order) : n_(nvars), k_(order) {
    if (nvars == 0) throw std::invalid_argument("JetLayout: need at least one variable");
    if (order < 0) throw std::invalid_argument("JetLayout: negative order");
    monos_ = MultiIndex::enumerate(n_, k_);
    const std::size_t m = monos_.size();
    deg_.resize(m);
    deg_begin_.assign(static_cast<std::size_t>(k_) + 2, m);
    for (std::size_t i = 0; i < m; ++i) {
        deg_[i] = monos_[i].order();
        if (deg_begin_[deg_[i]] == m) deg_begin_[deg_[i]] = i;
    }
    deg_begin_[k_ + 1] = m;

    std::unordered_map<std::size_t, std::size_t> table;
    table.reserve(m * 2);
    for (std::size_t i = 0; i < m; ++i) table.emplace(key(monos_[i]), i);
    auto find = [&](const MultiIndex& mi) -> std::size_t {
        if (mi.order() > k_) return npos;
        auto it = table.find(key(mi));
        return it == table.end() ? npos : it->second;
    };

    up_.assign(m * n_, npos);
    parent_.assign(m, npos);
    parent_var_.assign(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t v = 0; v < n_; ++v) {
            MultiIndex u = monos_[i];
            ++u[v];
            up_[i * n_ + v] = find(u);
        }
        if (deg_[i] > 0) {
            std::size_t v = 0;
            while (monos_[i][v] == 0) ++v;
            MultiIndex p = monos_[i];
            --p[v];
            parent_[i] = find(p);
            parent_var_[i] = v;
        }
    }

    pair_begin_.assign(m + 1, 0);
    for (std::size_t i = 0; i < m; ++i) {
        pair_begin_[i] = pairs_.size();
        const int room = k_ - deg_[i];
        for (std::size_t j = 0; j < deg_begin_[room + 1]; ++j) {
            MultiIndex s = monos_[i];
            for (std::size_t v = 0; v < n_; ++v) s[v] += monos_[j][v];
            pairs_.push_back({static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(find(s))});
        }
    }
    pair_begin_[m] = pairs_.size();

    lookup_.clear();
    lookup_.reserve(m);
    for (std::size_t i = 0; i < m; ++i) lookup_.push_back(key(monos_[i]));
}

std::size_t JetLayout::key(const MultiIndex& m) const {
    std::size_t k = 0;
    for (std::size_t v = 0; v < m.size(); ++v) k = k * static_cast<std::size_t>(k_ + 1) + m[v];
    return k;
}

std::size_t JetLayout::index(const MultiIndex& m) const {
    if (m.size() != n_) throw std::invalid_argument("JetLayout::index: dimension mismatch");
    if (m.order() > k_) return npos;
    // Offset of the degree block, then linear search inside the block.
    const int d = m.order();
    const std::size_t key_m = key(m);
    for (std::size_t i = deg_begin_[d]; i < deg_begin_[d + 1]; ++i)
        if (lookup_[i] == key_m) return i;
    return npos;
}

std::shared_ptr<const JetLayout> JetLayout::get(std::size_t nvars, int order) {
    thread_local std::map<std::pair<std::size_t, int>, std::shared_ptr<const JetLayout>> local;
    const auto key = std::make_pair(nvars, order);
    if (auto it = local.find(key); it != local.end()) return it->second;

    static std::mutex mu;
    static std::map<std::pair<std::size_t, int>, std::shared_ptr<const JetLayout>> shared;
    std::shared_ptr<const JetLayout> out;
    {
        std::lock_guard lock(mu);
        auto it = shared.find(key);
        if (it == shared.end()) it = shared.emplace(key, std::make_shared<JetLayout>(nvars, order)).first;
        out = it->second;
    }
    local.emplace(key, out);
    return out;
}

// ----------------------------------------------------------------------- Jet

Jet::Jet(std::size_t nvars, int order, cplx constant) : Jet(JetLayout::get(nvars, order), constant) {}

Jet::Jet(std::shared_ptr<const JetLayout> layout, cplx constant)
    : layout_(std::move(layout)), c_(layout_->size(), cplx(0.0)) {
    c_[0] = constant;
}

Jet Jet::variable(std::size_t nvars, int order, std::size_t var, double base) {
    Jet j(nvars, order, base);
    if (order >= 1) j.c_[1 + var] = 1.0;
    return j;
}

cplx Jet::coeff(const MultiIndex& m) const {
    const std::size_t i = layout_->index(m);
    return i == JetLayout::npos ? cplx(0.0) : c_[i];
}

cplx Jet::partial(const MultiIndex& m) const {
    if (m.order() > order()) throw std::out_of_range("Jet::partial: order exceeds truncation");
    return coeff(m) * m.factorial();
}

Jet Jet::truncated(int k) const {
    if (k >= order()) return *this;
    Jet out(nvars(), k);
    std::copy_n(c_.begin(), out.c_.size(), out.c_.begin());
    return out;
}

Jet Jet::derivative(std::size_t var) const {
    if (order() == 0) throw std::out_of_range("Jet::derivative: order-0 jet");
    Jet out(nvars(), order() - 1);
    const auto& L = *layout_;
    for (std::size_t i = 0; i < out.c_.size(); ++i) {
        const std::size_t u = L.up(i, var);
        out.c_[i] = c_[u] * static_cast<double>(L.monomial(i)[var] + 1);
    }
    return out;
}

Jet Jet::derivative(const MultiIndex& m) const {
    Jet out = *this;
    for (std::size_t v = 0; v < m.size(); ++v)
        for (int r = 0; r < m[v]; ++r) out = out.derivative(v);
    return out;
}

Jet Jet::conj() const {
    Jet out = *this;
    for (auto& c : out.c_) c = std::conj(c);
    return out;
}

Jet Jet::increment() const {
    Jet out = *this;
    out.c_[0] = 0.0;
    return out;
}

namespace {

void align(Jet& a, const Jet& b) {
    if (a.nvars() != b.nvars()) throw std::invalid_argument("Jet: variable count mismatch");
    if (b.order() < a.order()) a = a.truncated(b.order());
}

}  // namespace

Jet& Jet::operator+=(const Jet& o) {
    align(*this, o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
}

Jet& Jet::operator-=(const Jet& o) {
    align(*this, o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
}

Jet& Jet::operator*=(const Jet& o) {
    *this = *this * o;
    return *this;
}

Jet& Jet::operator/=(const Jet& o) {
    *this = *this / o;
    return *this;
}

Jet& Jet::operator*=(cplx s) {
    for (auto& c : c_) c *= s;
    return *this;
}

Jet Jet::operator-() const {
    Jet out = *this;
    for (auto& c : out.c_) c = -c;
    return out;
}

Jet operator+(Jet a, const Jet& b) { return a += b; }
Jet operator-(Jet a, const Jet& b) { return a -= b; }

Jet operator*(const Jet& a, const Jet& b) {
    if (a.nvars() != b.nvars()) throw std::invalid_argument("Jet: variable count mismatch");
    const Jet& lo = a.order() <= b.order() ? a : b;
    const Jet& hi = a.order() <= b.order() ? b : a;
    Jet out(lo.layout_ptr());
    const auto& L = lo.layout();
    auto oc = out.coeffs();
    auto lc = lo.coeffs();
    auto hc = hi.coeffs();
    // The first |lo| coefficients of hi share lo's layout (graded ordering).
    for (std::size_t i = 0; i < L.size(); ++i) {
        const cplx ai = lc[i];
        if (ai == cplx(0.0)) continue;
        for (const auto& p : L.products(i)) oc[p.k] += ai * hc[p.j];
    }
    return out;
}

Jet operator/(const Jet& a, const Jet& b) { return a * (1.0 / b); }
Jet operator+(Jet a, cplx s) { return a += s; }
Jet operator+(cplx s, Jet a) { return a += s; }
Jet operator-(Jet a, cplx s) { return a -= s; }
Jet operator-(cplx s, const Jet& a) { return (-a) += s; }
Jet operator*(Jet a, cplx s) { return a *= s; }
Jet operator*(cplx s, Jet a) { return a *= s; }
Jet operator/(Jet a, cplx s) { return a /= s; }

Jet operator/(cplx s, const Jet& a) {
    const int K = a.order();
    const cplx a0 = a.value();
    if (a0 == cplx(0.0)) throw std::domain_error("Jet: division by a jet with zero value");
    std::vector<cplx> t(K + 1);
    cplx inv = 1.0 / a0;
    cplx p = inv;
    for (int k = 0; k <= K; ++k) {
        t[k] = (k % 2 ? -1.0 : 1.0) * p * s;
        p *= inv;
    }
    return apply_univariate(a, t);
}

Jet apply_univariate(const Jet& a, std::span<const cplx> taylor) {
    const int K = a.order();
    const Jet delta = a.increment();
    // Horner in the nilpotent increment.
    Jet out(a.layout_ptr(), taylor[K]);
    for (int k = K - 1; k >= 0; --k) {
        out = out * delta;
        out += taylor[k];
    }
    return out;
}

Jet exp(const Jet& a) {
    const int K = a.order();
    std::vector<cplx> t(K + 1);
    const cplx e = std::exp(a.value());
    double f = 1.0;
    for (int k = 0; k <= K; ++k) {
        if (k > 0) f *= k;
        t[k] = e / f;
    }
    return apply_univariate(a, t);
}

Jet log(const Jet& a) {
    const int K = a.order();
    std::vector<cplx> t(K + 1);
    const cplx a0 = a.value();
    t[0] = std::log(a0);
    cplx p = 1.0;
    for (int k = 1; k <= K; ++k) {
        p /= a0;
        t[k] = (k % 2 ? 1.0 : -1.0) * p / static_cast<double>(k);
    }
    return apply_univariate(a, t);
}

Jet pow(const Jet& a, double e) {
    const int K = a.order();
    std::vector<cplx> t(K + 1);
    const cplx a0 = a.value();
    if (a0 == cplx(0.0) && K > 0) throw std::domain_error("Jet: pow at zero base");
    double binom = 1.0;
    for (int k = 0; k <= K; ++k) {
        t[k] = binom * std::pow(a0, e - k);
        binom *= (e - k) / (k + 1);
    }
    return apply_univariate(a, t);
}

Jet sqrt(const Jet& a) { return pow(a, 0.5); }

Jet sin(const Jet& a) {
    const int K = a.order();
    std::vector<cplx> t(K + 1);
    const cplx s = std::sin(a.value()), c = std::cos(a.value());
    double f = 1.0;
    for (int k = 0; k <= K; ++k) {
        if (k > 0) f *= k;
        const cplx d = (k % 4 == 0) ? s : (k % 4 == 1) ? c : (k % 4 == 2) ? -s : -c;
        t[k] = d / f;
    }
    return apply_univariate(a, t);
}

Jet cos(const Jet& a) {
    const int K = a.order();
    std::vector<cplx> t(K + 1);
    const cplx s = std::sin(a.value()), c = std::cos(a.value());
    double f = 1.0;
    for (int k = 0; k <= K; ++k) {
        if (k > 0) f *= k;
        const cplx d = (k % 4 == 0) ? c : (k % 4 == 1) ? -s : (k % 4 == 2) ? -c : s;
        t[k] = d / f;
    }
    return apply_univariate(a, t);
}

Jet conj(const Jet& a) { return a.conj(); }

Jet substitute(const Jet& t, std::span<const Jet> deltas) {
    if (deltas.size() != t.nvars()) throw std::invalid_argument("substitute: arity mismatch");
    if (deltas.empty()) throw std::invalid_argument("substitute: no arguments");
    const auto layout = deltas[0].layout_ptr();
    const int K = deltas[0].order();
    for (const auto& d : deltas)
        if (d.layout_ptr() != layout) throw std::invalid_argument("substitute: deltas must share a layout");
    if (t.order() < K) throw std::invalid_argument("substitute: outer jet order too low");

    const auto& TL = t.layout();
    const std::size_t m = TL.degree_begin(K + 1);
    Jet out(layout, t.coeff(0));
    std::vector<Jet> powers(m);
    powers[0] = Jet(layout, 1.0);
    auto oc = out.coeffs();
    for (std::size_t i = 1; i < m; ++i) {
        powers[i] = powers[TL.parent(i)] * deltas[TL.parent_var(i)];
        const cplx ti = t.coeff(i);
        if (ti == cplx(0.0)) continue;
        auto pc = powers[i].coeffs();
        for (std::size_t q = layout->degree_begin(TL.degree(i)); q < pc.size(); ++q) oc[q] += ti * pc[q];
    }
    return out;
}

std::vector<Jet> seed(std::span<const double> x, int order) {
    std::vector<Jet> out;
    out.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out.push_back(Jet::variable(x.size(), order, i, x[i]));
    return out;
}

}  // namespace sgfio

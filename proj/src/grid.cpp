#include "sgfio/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>

namespace sgfio {

namespace {
constexpr double pi = std::numbers::pi;
std::mutex fftw_planner_mutex;
}  // namespace

// ---------------------------------------------------------------------- Grid

Grid make_grid(std::size_t dim, std::size_t n, double l) {
    if (dim < 1 || dim > 3) throw GridError("make_grid: dim must be 1, 2 or 3");
    if (n < 8) throw GridError("make_grid: points_per_axis must be >= 8");
    if (n % 2) throw GridError("make_grid: points_per_axis must be even");
    if (!(l > 0) || !std::isfinite(l)) throw GridError("make_grid: half_width must be positive");
    Grid g;
    g.d_ = dim;
    g.n_ = n;
    g.l_ = l;
    g.h_ = 2.0 * l / static_cast<double>(n);
    g.dxi_ = pi / l;
    g.total_ = 1;
    for (std::size_t i = 0; i < dim; ++i) g.total_ *= n;
    return g;
}

double Grid::nyquist() const { return pi * static_cast<double>(n_) / (2.0 * l_); }

double Grid::xi_at(std::size_t m) const {
    return dxi_ * (static_cast<double>(m) - static_cast<double>(n_ / 2));
}

std::size_t Grid::x_index(double x) const {
    const double j = std::round((x + l_) / h_);
    if (j < 0 || j >= static_cast<double>(n_) || std::abs(x_at(static_cast<std::size_t>(j)) - x) > 1e-9 * h_)
        throw GridError("x_index: not a grid node");
    return static_cast<std::size_t>(j);
}

std::size_t Grid::xi_index(double xi) const {
    const double m = std::round(xi / dxi_) + static_cast<double>(n_ / 2);
    if (m < 0 || m >= static_cast<double>(n_) || std::abs(xi_at(static_cast<std::size_t>(m)) - xi) > 1e-9 * dxi_)
        throw GridError("xi_index: not a frequency node");
    return static_cast<std::size_t>(m);
}

void Grid::unflatten(std::size_t flat, std::span<std::size_t> idx) const {
    for (std::size_t a = d_; a-- > 0;) {
        idx[a] = flat % n_;
        flat /= n_;
    }
}

std::size_t Grid::flatten(std::span<const std::size_t> idx) const {
    std::size_t f = 0;
    for (std::size_t a = 0; a < d_; ++a) f = f * n_ + idx[a];
    return f;
}

void Grid::point(std::size_t flat, std::span<double> x) const {
    for (std::size_t a = d_; a-- > 0;) {
        x[a] = x_at(flat % n_);
        flat /= n_;
    }
}

void Grid::frequency(std::size_t flat, std::span<double> xi) const {
    for (std::size_t a = d_; a-- > 0;) {
        xi[a] = xi_at(flat % n_);
        flat /= n_;
    }
}

bool Grid::on_boundary(std::size_t flat) const {
    for (std::size_t a = 0; a < d_; ++a) {
        const std::size_t j = flat % n_;
        if (j == 0 || j == n_ - 1) return true;
        flat /= n_;
    }
    return false;
}

// -------------------------------------------------------------- GridFunction

GridFunction::GridFunction(Grid g, std::vector<cplx> values, Domain dom)
    : grid_(g), v_(std::move(values)), dom_(dom) {
    if (v_.size() != grid_.size()) throw GridError("GridFunction: length must equal N^d");
    for (const auto& z : v_)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw GridError("GridFunction: non-finite value");
}

double GridFunction::cell() const {
    const double s = dom_ == Domain::space ? grid_.spacing() : grid_.dual_spacing();
    return std::pow(s, static_cast<double>(grid_.dim()));
}

double GridFunction::norm() const {
    double s = 0;
    for (const auto& z : v_) s += std::norm(z);
    return std::sqrt(s * cell());
}

namespace {
void require_same(const GridFunction& a, const GridFunction& b, const char* who) {
    if (!(a.grid() == b.grid())) throw GridError(std::string(who) + ": grid mismatch");
    if (a.domain() != b.domain()) throw GridError(std::string(who) + ": domain mismatch");
}
}  // namespace

GridFunction GridFunction::operator+(const GridFunction& o) const {
    require_same(*this, o, "operator+");
    std::vector<cplx> r(v_.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = v_[i] + o.v_[i];
    return GridFunction(grid_, std::move(r), dom_);
}

GridFunction GridFunction::operator-(const GridFunction& o) const {
    require_same(*this, o, "operator-");
    std::vector<cplx> r(v_.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = v_[i] - o.v_[i];
    return GridFunction(grid_, std::move(r), dom_);
}

GridFunction GridFunction::operator*(cplx s) const {
    std::vector<cplx> r(v_.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = v_[i] * s;
    return GridFunction(grid_, std::move(r), dom_);
}

// ------------------------------------------------------------------- Fourier

namespace {

// (-1)^{sum j_a}  and  (-1)^{sum (m_a - N/2)}
double parity(const Grid& g, std::size_t flat, bool shifted) {
    const std::size_t n = g.points_per_axis();
    long s = 0;
    for (std::size_t a = 0; a < g.dim(); ++a) {
        s += static_cast<long>(flat % n) - (shifted ? static_cast<long>(n / 2) : 0);
        flat /= n;
    }
    return (s % 2 == 0) ? 1.0 : -1.0;
}

std::vector<cplx> run_fft(const Grid& g, std::vector<cplx> data, int sign) {
    const int n = static_cast<int>(g.points_per_axis());
    int dims[3] = {n, n, n};
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * data.size()));
    fftw_plan plan;
    {
        std::lock_guard lock(fftw_planner_mutex);
        plan = fftw_plan_dft(static_cast<int>(g.dim()), dims, buf, buf, sign, FFTW_ESTIMATE);
    }
    std::memcpy(buf, data.data(), sizeof(fftw_complex) * data.size());
    fftw_execute(plan);
    std::memcpy(static_cast<void*>(data.data()), buf, sizeof(fftw_complex) * data.size());
    {
        std::lock_guard lock(fftw_planner_mutex);
        fftw_destroy_plan(plan);
    }
    fftw_free(buf);
    return data;
}

}  // namespace

GridFunction fourier(const GridFunction& f, Direction dir) {
    const Grid& g = f.grid();
    const double d = static_cast<double>(g.dim());
    std::vector<cplx> v(f.values().begin(), f.values().end());
    if (dir == Direction::forward) {
        if (f.domain() != Domain::space) throw GridError("fourier: forward needs a space-domain function");
        for (std::size_t i = 0; i < v.size(); ++i) v[i] *= parity(g, i, false);
        v = run_fft(g, std::move(v), FFTW_FORWARD);
        const double c = std::pow(g.spacing() / std::sqrt(2 * pi), d);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] *= c * parity(g, i, true);
        return GridFunction(g, std::move(v), Domain::frequency);
    }
    if (f.domain() != Domain::frequency) throw GridError("fourier: inverse needs a frequency-domain function");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= parity(g, i, true);
    v = run_fft(g, std::move(v), FFTW_BACKWARD);
    const double c = std::pow(g.dual_spacing() / std::sqrt(2 * pi), d);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= c * parity(g, i, false);
    return GridFunction(g, std::move(v), Domain::space);
}

cplx inner_product(const GridFunction& f, const GridFunction& g) {
    require_same(f, g, "inner_product");
    cplx s = 0;
    const auto a = f.values(), b = g.values();
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * std::conj(b[i]);
    return s * f.cell();
}

double relative_error(const GridFunction& f, const GridFunction& g) {
    const double n = g.norm();
    const double e = (f - g).norm();
    return n > 0 ? e / n : e;
}

// ------------------------------------------------------------ test functions

namespace {

double hermite(int n, double t) {
    double h0 = 1.0, h1 = 2.0 * t;
    if (n == 0) return h0;
    for (int k = 1; k < n; ++k) {
        const double h2 = 2.0 * t * h1 - 2.0 * k * h0;
        h0 = h1;
        h1 = h2;
    }
    return h1;
}

}  // namespace

GridFunction test_function(const Grid& g, TestKind kind, const TestParams& p) {
    const std::size_t d = g.dim();
    if (!(p.width > 0)) throw GridError("test_function: width must be positive");
    if (p.hermite_index < 0) throw GridError("test_function: hermite index must be >= 0");
    std::vector<double> c = p.center, w = p.frequency;
    c.resize(d, 0.0);
    w.resize(d, 0.0);
    if (kind != TestKind::modulated_gaussian) std::fill(w.begin(), w.end(), 0.0);
    double wn = 0;
    for (double v : w) wn += v * v;
    if (std::sqrt(wn) >= 0.8 * g.nyquist())
        throw GridError("test_function: aliasing margin violated (modulation frequency >= 0.8 * Nyquist)");

    const double s = p.width;
    const int hn = kind == TestKind::hermite ? p.hermite_index : 0;
    auto f = GridFunction::sample(g, [&](std::span<const double> x) {
        cplx v = 1.0;
        double ph = 0;
        for (std::size_t a = 0; a < d; ++a) {
            const double t = (x[a] - c[a]) / s;
            v *= hermite(hn, t) * std::exp(-0.5 * t * t);
            ph += w[a] * x[a];
        }
        return v * std::polar(1.0, ph);
    });
    const double nrm = f.norm();
    if (!(nrm > 0)) throw GridError("test_function: sample vanishes on the grid");
    f = f * (1.0 / nrm);

    double edge = 0;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (g.on_boundary(i)) edge = std::max(edge, std::abs(f[i]));
    if (edge >= 1e-14)
        throw GridError("test_function: truncation margin violated (boundary value >= 1e-14)");
    const auto fh = fourier(f, Direction::forward);
    double tail = 0;
    for (std::size_t i = 0; i < fh.size(); ++i)
        if (g.on_boundary(i)) tail = std::max(tail, std::abs(fh[i]));
    if (tail >= 1e-14)
        throw GridError("test_function: aliasing margin violated (spectrum at Nyquist >= 1e-14)");
    return f;
}

TestKind parse_test_kind(const std::string& s) {
    if (s == "gaussian") return TestKind::gaussian;
    if (s == "hermite") return TestKind::hermite;
    if (s == "modulated_gaussian") return TestKind::modulated_gaussian;
    throw GridError("unknown test function kind '" + s + "'");
}

std::string to_string(TestKind k) {
    switch (k) {
        case TestKind::gaussian: return "gaussian";
        case TestKind::hermite: return "hermite";
        case TestKind::modulated_gaussian: return "modulated_gaussian";
    }
    return "?";
}

// ------------------------------------------------------------ serialization

namespace {

template <class T>
void put_le(std::ostream& os, T v) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw GridError("read_binary: truncated stream");
    return v;
}

}  // namespace

void write_binary(const GridFunction& f, std::ostream& os) {
    const auto& g = f.grid();
    const std::uint32_t tag = static_cast<std::uint32_t>(g.dim()) |
                              (f.domain() == Domain::frequency ? 0x100u : 0u);
    put_le<std::uint32_t>(os, tag);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.points_per_axis()));
    put_le<double>(os, g.half_width());
    for (const auto& z : f.values()) {
        put_le<double>(os, z.real());
        put_le<double>(os, z.imag());
    }
}

GridFunction read_binary(std::istream& is) {
    const auto tag = get_le<std::uint32_t>(is);
    const auto n = get_le<std::uint32_t>(is);
    const auto l = get_le<double>(is);
    const Grid g = make_grid(tag & 0xffu, n, l);
    std::vector<cplx> v(g.size());
    for (auto& z : v) {
        const double re = get_le<double>(is);
        const double im = get_le<double>(is);
        z = {re, im};
    }
    return GridFunction(g, std::move(v), (tag & 0x100u) ? Domain::frequency : Domain::space);
}

void save_binary(const GridFunction& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_binary(f, os);
}

GridFunction load_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    return read_binary(is);
}

void write_csv(const GridFunction& f, std::ostream& os) {
    const auto& g = f.grid();
    const std::size_t d = g.dim();
    const char* coord = f.domain() == Domain::space ? "x" : "xi";
    for (std::size_t a = 0; a < d; ++a) os << 'i' << a << ',';
    for (std::size_t a = 0; a < d; ++a) os << coord << a << ',';
    os << "re,im\n";
    std::size_t idx[3];
    double p[3];
    char buf[64];
    for (std::size_t i = 0; i < f.size(); ++i) {
        g.unflatten(i, std::span<std::size_t>(idx, d));
        if (f.domain() == Domain::space)
            g.point(i, std::span<double>(p, d));
        else
            g.frequency(i, std::span<double>(p, d));
        for (std::size_t a = 0; a < d; ++a) os << idx[a] << ',';
        for (std::size_t a = 0; a < d; ++a) {
            std::snprintf(buf, sizeof buf, "%.17g,", p[a]);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", f[i].real(), f[i].imag());
        os << buf;
    }
}

}  // namespace sgfio

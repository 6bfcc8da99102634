#pragma once

// Uniform grids on [-L, L)^d, the dual frequency grid xi_k = pi k / L, and
// the discrete unitary Fourier transform that approximates
//   (F u)(xi) = (2 pi)^{-d/2} \int u(x) e^{-i <x, xi>} dx.

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgfio {

using cplx = std::complex<double>;

class Grid {
public:
    Grid() = default;

    std::size_t dim() const { return d_; }
    std::size_t points_per_axis() const { return n_; }
    double half_width() const { return l_; }
    double spacing() const { return h_; }
    /// Frequency spacing pi / L.
    double dual_spacing() const { return dxi_; }
    double nyquist() const;
    std::size_t size() const { return total_; }

    /// Coordinate of axis index j in [0, N).
    double x_at(std::size_t j) const { return -l_ + static_cast<double>(j) * h_; }
    /// Frequency of axis index m in [0, N), i.e. k = m - N/2.
    double xi_at(std::size_t m) const;
    /// Inverse maps; throw if the value is not a grid node.
    std::size_t x_index(double x) const;
    std::size_t xi_index(double xi) const;

    /// Row-major flat index <-> per-axis indices.
    void unflatten(std::size_t flat, std::span<std::size_t> idx) const;
    std::size_t flatten(std::span<const std::size_t> idx) const;
    /// Points of the spatial / frequency grid at a flat index.
    void point(std::size_t flat, std::span<double> x) const;
    void frequency(std::size_t flat, std::span<double> xi) const;
    /// True if the flat index touches the first or last node on some axis.
    bool on_boundary(std::size_t flat) const;

    bool operator==(const Grid& o) const { return d_ == o.d_ && n_ == o.n_ && l_ == o.l_; }

private:
    friend Grid make_grid(std::size_t, std::size_t, double);
    std::size_t d_ = 0, n_ = 0, total_ = 0;
    double l_ = 0, h_ = 0, dxi_ = 0;
};

class GridError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

Grid make_grid(std::size_t dim, std::size_t points_per_axis, double half_width);

enum class Domain { space, frequency };

class GridFunction {
public:
    GridFunction() = default;
    GridFunction(Grid g, std::vector<cplx> values, Domain dom = Domain::space);
    /// Samples f at every node of the spatial (or frequency) grid.
    template <class F>
    static GridFunction sample(const Grid& g, F&& f, Domain dom = Domain::space) {
        std::vector<cplx> v(g.size());
        std::array<double, 3> p{};
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (dom == Domain::space)
                g.point(i, std::span<double>(p.data(), g.dim()));
            else
                g.frequency(i, std::span<double>(p.data(), g.dim()));
            v[i] = f(std::span<const double>(p.data(), g.dim()));
        }
        return GridFunction(g, std::move(v), dom);
    }

    const Grid& grid() const { return grid_; }
    Domain domain() const { return dom_; }
    std::span<const cplx> values() const { return v_; }
    cplx operator[](std::size_t i) const { return v_[i]; }
    std::size_t size() const { return v_.size(); }

    /// Discrete L^2 norm with the cell volume of the domain's grid.
    double norm() const;
    /// Cell volume h^d (space) or (pi/L)^d (frequency).
    double cell() const;

    GridFunction operator+(const GridFunction& o) const;
    GridFunction operator-(const GridFunction& o) const;
    GridFunction operator*(cplx s) const;

private:
    Grid grid_;
    std::vector<cplx> v_;
    Domain dom_ = Domain::space;
};

enum class Direction { forward, inverse };

/// Unitary transform; forward maps space -> frequency, inverse the reverse.
GridFunction fourier(const GridFunction& f, Direction dir);

/// sum f conj(g) * cell; requires matching grids and domains.
cplx inner_product(const GridFunction& f, const GridFunction& g);

/// Relative L^2 distance ||f - g|| / ||g||.
double relative_error(const GridFunction& f, const GridFunction& g);

// ------------------------------------------------------------ test functions

enum class TestKind { gaussian, hermite, modulated_gaussian };

struct TestParams {
    double width = 1.0;      // sigma in exp(-|x - c|^2 / (2 sigma^2))
    std::vector<double> center;      // defaults to 0
    std::vector<double> frequency;   // modulation, defaults to 0
    int hermite_index = 0;
};

/// L^2-normalized Schwartz sample; throws GridError naming a violated margin
/// (aliasing: modulation >= 0.8 Nyquist or spectral tail at Nyquist >= 1e-14;
/// truncation: boundary value >= 1e-14).
GridFunction test_function(const Grid& g, TestKind kind, const TestParams& p = {});

TestKind parse_test_kind(const std::string& s);
std::string to_string(TestKind k);

// ------------------------------------------------------------ serialization

/// 16-byte header (uint32 d | domain << 8, uint32 N, float64 L), then N^d
/// little-endian (re, im) float64 pairs.
void write_binary(const GridFunction& f, std::ostream& os);
GridFunction read_binary(std::istream& is);
void save_binary(const GridFunction& f, const std::string& path);
GridFunction load_binary(const std::string& path);
/// Header "i0[,i1,...],x0[,x1,...],re,im" then one row per node.
void write_csv(const GridFunction& f, std::ostream& os);

}  // namespace sgfio

#pragma once

// Coefficient fields and right-hand sides for the benchmark scenarios.

#include "expmsfem/mesh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace expmsfem {

/// Periodic coefficient with five separated scales plus a smooth term.
inline double periodic_multiscale_A(Point p)
{
    constexpr double eps[5] = {1.0 / 5, 1.0 / 13, 1.0 / 17, 1.0 / 31, 1.0 / 65};
    constexpr double tau = 2.0 * std::numbers::pi;
    const double x = p.x, y = p.y;
    const double s =
        (1.1 + std::sin(tau * x / eps[0])) / (1.1 + std::sin(tau * y / eps[0])) +
        (1.1 + std::sin(tau * y / eps[1])) / (1.1 + std::cos(tau * x / eps[1])) +
        (1.1 + std::cos(tau * x / eps[2])) / (1.1 + std::sin(tau * y / eps[2])) +
        (1.1 + std::sin(tau * y / eps[3])) / (1.1 + std::cos(tau * x / eps[3])) +
        (1.1 + std::cos(tau * x / eps[4])) / (1.1 + std::sin(tau * y / eps[4])) +
        std::sin(4.0 * x * x * y * y) + 1.0;
    return s / 6.0;
}

/// M within distance 0.015 of the 7x7 lattice {0.2, ..., 0.8}^2, 1 elsewhere.
inline double high_contrast_A(Point p, double contrast)
{
    if (!(contrast >= 1.0))
        throw std::invalid_argument("contrast M must be >= 1");
    auto nearest = [](double t) {
        const double k = std::clamp(std::round(t * 10.0), 2.0, 8.0);
        return k / 10.0;
    };
    const double dx = p.x - nearest(p.x), dy = p.y - nearest(p.y);
    return std::hypot(dx, dy) >= 0.015 ? 1.0 : contrast;
}

/// Continuous piecewise-bilinear Gaussian field on the 2^-7 lattice.
///
/// Lattice values xi(i, j), 0 <= i, j <= 128, are drawn from std::mt19937_64
/// in row-major order (j outer, i inner). Each pair of consecutive draws
/// (a, b) becomes two standard normals by Box-Muller:
///   u1 = ((a >> 11) + 1) * 2^-53 in (0, 1],  u2 = (b >> 11) * 2^-53 in [0, 1),
///   z0 = sqrt(-2 ln u1) cos(2 pi u2),  z1 = sqrt(-2 ln u1) sin(2 pi u2).
/// The final odd lattice value uses z0 of a fresh pair.
class RandomField {
public:
    static constexpr int cells = 128;

    explicit RandomField(std::uint64_t seed) : seed_(seed), values_(std::size_t(cells + 1) * (cells + 1))
    {
        std::mt19937_64 gen(seed);
        constexpr double scale = 0x1.0p-53;
        for (std::size_t k = 0; k < values_.size(); k += 2) {
            const double u1 = double((gen() >> 11) + 1) * scale;
            const double u2 = double(gen() >> 11) * scale;
            const double r = std::sqrt(-2.0 * std::log(u1));
            const double angle = 2.0 * std::numbers::pi * u2;
            values_[k] = r * std::cos(angle);
            if (k + 1 < values_.size())
                values_[k + 1] = r * std::sin(angle);
        }
    }

    std::uint64_t seed() const { return seed_; }
    double node_value(int i, int j) const { return values_[std::size_t(j) * (cells + 1) + i]; }

    double operator()(Point p) const
    {
        const double sx = p.x * cells, sy = p.y * cells;
        const int i = std::clamp(int(std::floor(sx)), 0, cells - 1);
        const int j = std::clamp(int(std::floor(sy)), 0, cells - 1);
        const double a11 = (i + 1 - sx) * (j + 1 - sy);
        const double a21 = (sx - i) * (j + 1 - sy);
        const double a12 = (i + 1 - sx) * (sy - j);
        const double a22 = (sx - i) * (sy - j);
        return a11 * node_value(i, j) + a21 * node_value(i + 1, j) + a12 * node_value(i, j + 1) +
               a22 * node_value(i + 1, j + 1);
    }

private:
    std::uint64_t seed_;
    std::vector<double> values_;
};

enum class ScalarKind { real, complex };

using ScalarField = std::function<double(Point)>;
using ComplexField = std::function<std::complex<double>(Point)>;

/// Coefficients of -div(A grad u) + V u = f with A grad u . n = beta u on Gamma2.
struct ProblemSpec {
    std::string scenario;
    ScalarField A;
    ScalarField V;
    ComplexField beta;
    ScalarField f;
    BoundaryLayout layout = BoundaryLayout::all_dirichlet;
    ScalarKind scalar_kind = ScalarKind::real;
    std::optional<double> wavenumber;
};

struct ScenarioParams {
    double contrast = 16.0;                        // high_contrast
    std::optional<double> wavenumber;              // helmholtz_rough
    std::array<std::uint64_t, 3> seeds{1, 2, 3};   // A, V/k^2, beta/(ik)
    double A = 1.0;                                // custom
    double V = 0.0;
    double f = 1.0;
    BoundaryLayout layout = BoundaryLayout::all_dirichlet;
};

inline double polynomial_source(Point p) { return std::pow(p.x, 4) - std::pow(p.y, 3) + 1.0; }

inline ProblemSpec make_scenario(const std::string& name, const ScenarioParams& params = {})
{
    ProblemSpec spec;
    spec.scenario = name;
    spec.V = [](Point) { return 0.0; };
    spec.beta = [](Point) { return std::complex<double>(0.0); };
    if (name == "periodic") {
        spec.A = periodic_multiscale_A;
        spec.f = [](Point) { return -1.0; };
    } else if (name == "high_contrast") {
        const double M = params.contrast;
        if (!(M >= 1.0))
            throw std::invalid_argument("high_contrast: contrast M must be >= 1");
        spec.A = [M](Point p) { return high_contrast_A(p, M); };
        spec.f = polynomial_source;
    } else if (name == "helmholtz_rough") {
        if (!params.wavenumber)
            throw std::invalid_argument("helmholtz_rough: wavenumber k is required");
        const double k = *params.wavenumber;
        if (!(k > 0.0))
            throw std::invalid_argument("helmholtz_rough: wavenumber k must be positive");
        RandomField a(params.seeds[0]), v(params.seeds[1]), b(params.seeds[2]);
        spec.A = [a](Point p) { return std::abs(a(p)) + 0.5; };
        spec.V = [v, k](Point p) { return -k * k * (std::abs(v(p)) + 0.5); };
        spec.beta = [b, k](Point p) { return std::complex<double>(0.0, k * (std::abs(b(p)) + 0.5)); };
        spec.f = polynomial_source;
        spec.layout = BoundaryLayout::mixed;
        spec.scalar_kind = ScalarKind::complex;
        spec.wavenumber = k;
    } else if (name == "custom") {
        if (!(params.A > 0.0))
            throw std::invalid_argument("custom: A must be positive");
        if (params.V < 0.0)
            throw std::invalid_argument("custom: real scenarios need V >= 0");
        const double A = params.A, V = params.V, f = params.f;
        spec.A = [A](Point) { return A; };
        spec.V = [V](Point) { return V; };
        spec.f = [f](Point) { return f; };
        spec.layout = params.layout;
    } else {
        throw std::invalid_argument("unknown scenario '" + name +
                                    "' (expected periodic, high_contrast, helmholtz_rough or custom)");
    }
    return spec;
}

} // namespace expmsfem

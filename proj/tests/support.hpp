#pragma once

#include "expmsfem/expmsfem.hpp"

#include <complex>

namespace testing_support {

using namespace expmsfem;
using Complex = std::complex<double>;

inline ScenarioParams helmholtz_params(double k)
{
    ScenarioParams p;
    p.wavenumber = k;
    return p;
}

/// Constant-coefficient real problem with the given layout.
inline ProblemSpec custom_spec(double A = 1.0, double V = 0.0, double f = 1.0,
                               BoundaryLayout layout = BoundaryLayout::all_dirichlet)
{
    ScenarioParams p;
    p.A = A;
    p.V = V;
    p.f = f;
    p.layout = layout;
    return make_scenario("custom", p);
}

template <class S>
double max_abs(const Vector<S>& v)
{
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

} // namespace testing_support

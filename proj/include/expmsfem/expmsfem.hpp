#pragma once

#include "expmsfem/coeffs.hpp"
#include "expmsfem/experiment.hpp"
#include "expmsfem/fem.hpp"
#include "expmsfem/galerkin.hpp"
#include "expmsfem/localops.hpp"
#include "expmsfem/mesh.hpp"
#include "expmsfem/numerics.hpp"
#include "expmsfem/spectral.hpp"

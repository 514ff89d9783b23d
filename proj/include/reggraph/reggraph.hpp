#pragma once

#include "reggraph/amp.hpp"
#include "reggraph/denoiser.hpp"
#include "reggraph/error.hpp"
#include "reggraph/harness.hpp"
#include "reggraph/inference.hpp"
#include "reggraph/laplacian.hpp"
#include "reggraph/parallel.hpp"
#include "reggraph/prior.hpp"
#include "reggraph/quadrature.hpp"
#include "reggraph/rng.hpp"
#include "reggraph/rs_potential.hpp"
#include "reggraph/scalar_channel.hpp"
#include "reggraph/state_evolution.hpp"
#include "reggraph/synth.hpp"
#include "reggraph/table.hpp"

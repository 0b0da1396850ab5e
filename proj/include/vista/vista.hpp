#pragma once

#include "vista/analysis.hpp"
#include "vista/bridge.hpp"
#include "vista/denoiser.hpp"
#include "vista/equivariant.hpp"
#include "vista/error.hpp"
#include "vista/experiment.hpp"
#include "vista/forward_model.hpp"
#include "vista/image.hpp"
#include "vista/image_io.hpp"
#include "vista/nlm.hpp"
#include "vista/pnp.hpp"
#include "vista/viscosity.hpp"

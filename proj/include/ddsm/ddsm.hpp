#pragma once

#include "ddsm/data.hpp"
#include "ddsm/dsm.hpp"
#include "ddsm/errors.hpp"
#include "ddsm/geometry.hpp"
#include "ddsm/linalg.hpp"
#include "ddsm/model.hpp"
#include "ddsm/nn.hpp"
#include "ddsm/pde.hpp"
#include "ddsm/rng.hpp"
#include "ddsm/store.hpp"

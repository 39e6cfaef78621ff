#pragma once

#include "offgrid/core.hpp"
#include "offgrid/frame.hpp"
#include "offgrid/grad.hpp"
#include "offgrid/io.hpp"
#include "offgrid/metrics.hpp"
#include "offgrid/nuft.hpp"
#include "offgrid/opnorm.hpp"
#include "offgrid/optim.hpp"
#include "offgrid/patterns.hpp"
#include "offgrid/phantoms.hpp"
#include "offgrid/recon.hpp"
#include "offgrid/tape.hpp"

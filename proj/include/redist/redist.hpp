#pragma once

#include "redist/errors.hpp"
#include "redist/random.hpp"
#include "redist/arch.hpp"
#include "redist/flops.hpp"
#include "redist/presets.hpp"
#include "redist/image_header.hpp"
#include "redist/widerface.hpp"
#include "redist/search_space.hpp"
#include "redist/bootstrap.hpp"
#include "redist/anchors.hpp"
#include "redist/config.hpp"
#include "redist/pipeline.hpp"
#include "redist/report.hpp"

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "qdd/channel.hpp"
#include "qdd/core.hpp"
#include "qdd/fusion.hpp"
#include "qdd/harness.hpp"
#include "qdd/quadrature.hpp"
#include "qdd/quantizer.hpp"
#include "qdd/signal_model.hpp"
#include "qdd/threshold_cache.hpp"

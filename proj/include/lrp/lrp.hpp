#pragma once

#include "lrp/completion.hpp"
#include "lrp/config.hpp"
#include "lrp/detection.hpp"
#include "lrp/io.hpp"
#include "lrp/model.hpp"
#include "lrp/projection.hpp"
#include "lrp/pursuit.hpp"
#include "lrp/synth.hpp"

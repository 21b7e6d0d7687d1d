#pragma once

#include "eetrack/activity.hpp"
#include "eetrack/classifier.hpp"
#include "eetrack/dailypomdp.hpp"
#include "eetrack/energy.hpp"
#include "eetrack/error.hpp"
#include "eetrack/pipeline.hpp"
#include "eetrack/signal.hpp"
#include "eetrack/simgen.hpp"
#include "eetrack/version.hpp"

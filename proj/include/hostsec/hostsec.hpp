#pragma once

// Umbrella header.

#include "hostsec/common.hpp"
#include "hostsec/corpus.hpp"
#include "hostsec/digest.hpp"
#include "hostsec/factor.hpp"
#include "hostsec/features.hpp"
#include "hostsec/pipeline.hpp"
#include "hostsec/regress.hpp"
#include "hostsec/scanner.hpp"
#include "hostsec/stats.hpp"

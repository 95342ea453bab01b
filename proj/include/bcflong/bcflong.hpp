#pragma once

#include "bcflong/common.hpp"
#include "bcflong/rng.hpp"
#include "bcflong/csv.hpp"
#include "bcflong/panel.hpp"
#include "bcflong/forest.hpp"
#include "bcflong/random_effects.hpp"
#include "bcflong/sampler.hpp"
#include "bcflong/simgen.hpp"
#include "bcflong/estimands.hpp"
#include "bcflong/eval.hpp"
#include "bcflong/diagnostics.hpp"
#include "bcflong/serialize.hpp"
#include "bcflong/svg.hpp"

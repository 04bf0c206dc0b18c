#pragma once

#include "spanprobe/activation_store.hpp"
#include "spanprobe/corpus.hpp"
#include "spanprobe/errors.hpp"
#include "spanprobe/gradcheck.hpp"
#include "spanprobe/manifest.hpp"
#include "spanprobe/mdl.hpp"
#include "spanprobe/param_io.hpp"
#include "spanprobe/probe.hpp"
#include "spanprobe/report.hpp"
#include "spanprobe/rng.hpp"
#include "spanprobe/synth.hpp"
#include "spanprobe/transfer.hpp"

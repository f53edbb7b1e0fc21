#pragma once

// Umbrella header for the numerical library. io.hpp and bench.hpp are
// separate because they need nlohmann/json.

#include <mlr/analysis_lab.hpp>
#include <mlr/baselines.hpp>
#include <mlr/core.hpp>
#include <mlr/errors.hpp>
#include <mlr/lifted_operator.hpp>
#include <mlr/phase_retrieval.hpp>
#include <mlr/prox.hpp>
#include <mlr/rng.hpp>
#include <mlr/solver_constrained.hpp>
#include <mlr/solver_regularized.hpp>
#include <mlr/solver_report.hpp>
#include <mlr/spectral.hpp>
#include <mlr/synth.hpp>

#pragma once

#include "latent_gauge/aggregate.hpp"
#include "latent_gauge/dimensionality.hpp"
#include "latent_gauge/econometrics.hpp"
#include "latent_gauge/error.hpp"
#include "latent_gauge/harness.hpp"
#include "latent_gauge/panel.hpp"
#include "latent_gauge/pipeline.hpp"
#include "latent_gauge/random.hpp"
#include "latent_gauge/reliability.hpp"
#include "latent_gauge/report.hpp"
#include "latent_gauge/sensitivity.hpp"
#include "latent_gauge/simulate.hpp"
#include "latent_gauge/stats.hpp"

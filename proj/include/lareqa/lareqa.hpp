#pragma once

#include "lareqa/bias.hpp"
#include "lareqa/corpus.hpp"
#include "lareqa/embed.hpp"
#include "lareqa/gradient_check.hpp"
#include "lareqa/metrics.hpp"
#include "lareqa/probe.hpp"
#include "lareqa/retrieval.hpp"
#include "lareqa/training.hpp"

#define LAREQA_VERSION "0.1.0"

#pragma once

#include "trajlens/cohort.hpp"
#include "trajlens/csv.hpp"
#include "trajlens/date.hpp"
#include "trajlens/embedder.hpp"
#include "trajlens/error.hpp"
#include "trajlens/interpret.hpp"
#include "trajlens/pipeline.hpp"
#include "trajlens/random.hpp"
#include "trajlens/reduce.hpp"
#include "trajlens/report.hpp"
#include "trajlens/synth.hpp"
#include "trajlens/tokenizer.hpp"
#include "trajlens/trajectory.hpp"

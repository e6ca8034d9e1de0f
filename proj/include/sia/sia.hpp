#pragma once

#include "sia/attention.hpp"
#include "sia/autodiff.hpp"
#include "sia/conllu.hpp"
#include "sia/dialogue.hpp"
#include "sia/error.hpp"
#include "sia/evaluate.hpp"
#include "sia/mask.hpp"
#include "sia/matrix.hpp"
#include "sia/metrics.hpp"
#include "sia/model.hpp"
#include "sia/syntax.hpp"
#include "sia/synthetic.hpp"

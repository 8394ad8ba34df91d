#ifndef SURVMED_SURVMED_HPP
#define SURVMED_SURVMED_HPP

#include "survmed/config.hpp"
#include "survmed/core_data.hpp"
#include "survmed/cox.hpp"
#include "survmed/cuminc.hpp"
#include "survmed/dataset_io.hpp"
#include "survmed/error.hpp"
#include "survmed/glm.hpp"
#include "survmed/pipeline.hpp"
#include "survmed/report.hpp"
#include "survmed/reshape.hpp"
#include "survmed/simulate.hpp"
#include "survmed/terms.hpp"
#include "survmed/weights.hpp"

#endif  // SURVMED_SURVMED_HPP

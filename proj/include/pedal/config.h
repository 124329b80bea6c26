#pragma once

#include <json.hpp>

#include "pedal/corpus.h"
#include "pedal/learner.h"
#include "pedal/scheduler.h"

namespace pedal {

// JSON forms of the option blocks shared by run and service configuration.
// Readers start from `defaults` and override the keys that are present; they
// throw ParseError on wrong types.

nlohmann::ordered_json to_json(const IngestOptions& o);
IngestOptions ingest_options_from_json(const nlohmann::json& j, IngestOptions defaults = {});

nlohmann::ordered_json to_json(const SchedulerParams& p);
SchedulerParams scheduler_params_from_json(const nlohmann::json& j, SchedulerParams defaults = {});

nlohmann::ordered_json to_json(const LearnerParams& p);
LearnerParams learner_params_from_json(const nlohmann::json& j, LearnerParams defaults = {});

}  // namespace pedal

#include "pedal/config.h"

#include "pedal/error.h"

namespace pedal {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad ") + what + " options: " + e.what());
  }
}

}  // namespace

ordered_json to_json(const IngestOptions& o) {
  const auto& s = o.schema;
  return {{"schema",
           {{"source", s.source},
            {"hypothesis", s.hypothesis},
            {"post_edit", s.post_edit},
            {"reference", s.reference},
            {"group", s.group},
            {"target_lang", s.target_lang},
            {"origin", s.origin}}},
          {"langs", o.langs.str()},
          {"skip_malformed", o.skip_malformed}};
}

IngestOptions ingest_options_from_json(const json& j, IngestOptions o) {
  return guarded("ingest", [&] {
    if (j.contains("schema")) {
      const auto& s = j.at("schema");
      auto& t = o.schema;
      t.source = s.value("source", t.source);
      t.hypothesis = s.value("hypothesis", t.hypothesis);
      t.post_edit = s.value("post_edit", t.post_edit);
      t.reference = s.value("reference", t.reference);
      t.group = s.value("group", t.group);
      t.target_lang = s.value("target_lang", t.target_lang);
      t.origin = s.value("origin", t.origin);
    }
    if (j.contains("langs")) o.langs = LangPair::parse(j.at("langs").get<std::string>());
    o.skip_malformed = j.value("skip_malformed", o.skip_malformed);
    return o;
  });
}

ordered_json to_json(const SchedulerParams& p) {
  return {{"tau_close", p.tau_close ? json(*p.tau_close) : json(nullptr)},
          {"tau_sanity", p.tau_sanity},
          {"warmup", p.warmup},
          {"rescore_interval", p.rescore_interval}};
}

SchedulerParams scheduler_params_from_json(const json& j, SchedulerParams p) {
  return guarded("scheduler", [&] {
    if (j.contains("tau_close")) {
      if (j.at("tau_close").is_null()) p.tau_close.reset();
      else p.tau_close = j.at("tau_close").get<double>();
    }
    p.tau_sanity = j.value("tau_sanity", p.tau_sanity);
    p.warmup = j.value("warmup", p.warmup);
    p.rescore_interval = j.value("rescore_interval", p.rescore_interval);
    if (p.rescore_interval == 0) throw ParseError("rescore_interval must be at least 1");
    return p;
  });
}

ordered_json to_json(const LearnerParams& p) {
  return {{"learning_rate", p.learning_rate},
          {"epsilon", p.epsilon},
          {"clamp_min", p.clamp_min},
          {"clamp_max", p.clamp_max},
          {"variance_floor", p.variance_floor}};
}

LearnerParams learner_params_from_json(const json& j, LearnerParams p) {
  return guarded("learner", [&] {
    p.learning_rate = j.value("learning_rate", p.learning_rate);
    p.epsilon = j.value("epsilon", p.epsilon);
    p.clamp_min = j.value("clamp_min", p.clamp_min);
    p.clamp_max = j.value("clamp_max", p.clamp_max);
    p.variance_floor = j.value("variance_floor", p.variance_floor);
    return p;
  });
}

}  // namespace pedal

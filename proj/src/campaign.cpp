#include "glitchsim/campaign.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <string>
#include <thread>

#include <json.hpp>

#include "glitchsim/errors.hpp"
#include "glitchsim/rng.hpp"

namespace glitchsim {

namespace {

using Json = nlohmann::ordered_json;

Json glitch_json(const GlitchConfig& g) {
  Json j;
  j["width"] = g.width;
  j["offset"] = g.offset;
  j["external_offset"] = g.external_offset;
  j["repeat"] = g.repeat;
  return j;
}

GlitchConfig glitch_from_json(const Json& j) {
  GlitchConfig g;
  g.width = j.at("width").get<int>();
  g.offset = j.at("offset").get<int>();
  g.external_offset = j.at("external_offset").get<std::int64_t>();
  g.repeat = j.at("repeat").get<int>();
  return g;
}

TrialStatus parse_status(const std::string& s) {
  for (TrialStatus t : {TrialStatus::Correct, TrialStatus::Misprediction, TrialStatus::ResetOrHang}) {
    if (to_string(t) == s) return t;
  }
  throw InputError("unknown trial status: " + s);
}

}  // namespace

std::string_view to_string(TrialStatus status) {
  switch (status) {
    case TrialStatus::Correct: return "Correct";
    case TrialStatus::Misprediction: return "Misprediction";
    case TrialStatus::ResetOrHang: return "ResetOrHang";
  }
  return "?";
}

std::uint64_t trial_seed(std::uint64_t campaign_seed, std::uint64_t trial_index) {
  return hash_words({campaign_seed, trial_index});
}

void classify_outcome(TrialRecord& record, const std::optional<int>& predicted) {
  if (!predicted) {
    record.status = TrialStatus::ResetOrHang;
    record.predicted = -1;
    record.hamming.reset();
    record.bit_flips.reset();
    return;
  }
  record.predicted = *predicted;
  const std::string truth = predict_bits(record.true_class);
  const std::string got = predict_bits(*predicted);
  BitFlips flips{};
  int h = 0;
  for (std::size_t b = 0; b < kNumQubits; ++b) {
    flips[b] = truth[b] != got[b];
    h += flips[b] ? 1 : 0;
  }
  record.hamming = h;
  record.bit_flips = flips;
  record.status = *predicted == record.true_class ? TrialStatus::Correct : TrialStatus::Misprediction;
}

TrialRecord run_trial(const ModelParams& params, const CampaignInput& input, const MicroOpTrace& trace,
                      const GlitchConfig& glitch, const SusceptibilityProfile& profile,
                      std::uint64_t seed, bool armed) {
  glitch.validate();
  TrialRecord rec;
  rec.input_id = input.input_id;
  rec.true_class = input.true_class;
  rec.glitch = glitch;
  rec.seed = seed;
  if (!armed) {
    classify_outcome(rec, forward(params, input.features).predicted_class);
    return rec;
  }
  const FaultedRun run = faulted_forward(params, input.features, trace, glitch, profile, seed);
  if (run.status == ExecStatus::Reset) {
    classify_outcome(rec, std::nullopt);
  } else {
    classify_outcome(rec, run.result->predicted_class);
  }
  return rec;
}

ConfigResult run_config(const CampaignContext& ctx, const GlitchConfig& glitch) {
  const CampaignOptions& opt = ctx.options;
  if (opt.reps < 1) throw InputError("reps must be at least 1");
  if (ctx.inputs.empty()) throw ProtocolError("campaign has no inputs");

  std::vector<const CampaignInput*> order;
  order.reserve(ctx.inputs.size());
  for (const CampaignInput& in : ctx.inputs) order.push_back(&in);
  if (opt.per_class_protocol) {
    std::array<int, kNumClasses> per_class{};
    for (const CampaignInput* in : order) {
      if (in->true_class < 0 || in->true_class >= static_cast<int>(kNumClasses)) {
        throw ProtocolError("input class out of range");
      }
      ++per_class[static_cast<std::size_t>(in->true_class)];
    }
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      if (per_class[k] != 1) {
        throw ProtocolError("per-class protocol needs exactly one input for class " + std::to_string(k));
      }
    }
    std::sort(order.begin(), order.end(),
              [](const CampaignInput* a, const CampaignInput* b) { return a->true_class < b->true_class; });
  }

  const std::size_t reps = static_cast<std::size_t>(opt.reps);
  const std::size_t n = order.size() * reps;
  ConfigResult result;
  result.glitch = glitch;
  result.trials.resize(n);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      const CampaignInput& in = *order[t / reps];
      TrialRecord rec = run_trial(ctx.params, in, ctx.trace, glitch, ctx.profile,
                                  trial_seed(ctx.campaign_seed, t), opt.armed);
      rec.trial_index = t;
      result.trials[t] = std::move(rec);
    }
  };

  const std::size_t jobs = std::clamp<std::size_t>(opt.jobs, 1, std::max<std::size_t>(1, n));
  if (jobs == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (n + jobs - 1) / jobs;
    for (std::size_t w = 0; w < jobs; ++w) {
      const std::size_t b = w * chunk;
      const std::size_t e = std::min(n, b + chunk);
      if (b < e) workers.emplace_back(work, b, e);
    }
  }

  for (const TrialRecord& r : result.trials) {
    if (r.status == TrialStatus::Misprediction) ++result.fault_count;
    if (r.status == TrialStatus::ResetOrHang) ++result.reset_count;
  }
  return result;
}

std::vector<CampaignInput> select_protocol_inputs(std::span<const Sample> samples, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int k = samples[i].true_class;
    if (k < 0 || k >= static_cast<int>(kNumClasses)) throw ProtocolError("sample class out of range");
    by_class[static_cast<std::size_t>(k)].push_back(i);
  }
  Rng rng(hash_words({seed, 0x5e1ecULL}));
  std::vector<CampaignInput> out;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (by_class[k].empty()) throw ProtocolError("no sample available for class " + std::to_string(k));
    const auto pick = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(by_class[k].size()) - 1));
    const std::size_t i = by_class[k][pick];
    out.push_back(CampaignInput{static_cast<std::int64_t>(i), samples[i].true_class, samples[i].features});
  }
  return out;
}

std::vector<CampaignInput> as_inputs(std::span<const Sample> samples) {
  std::vector<CampaignInput> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back(CampaignInput{static_cast<std::int64_t>(i), samples[i].true_class, samples[i].features});
  }
  return out;
}

void write_campaign_log(std::ostream& out, const ConfigResult& result) {
  for (const TrialRecord& r : result.trials) {
    Json j;
    j["trial_index"] = r.trial_index;
    j["input_id"] = r.input_id;
    j["true_class"] = r.true_class;
    j["glitch"] = glitch_json(r.glitch);
    Json verdict;
    verdict["status"] = std::string(to_string(r.status));
    if (r.status != TrialStatus::ResetOrHang) verdict["predicted"] = r.predicted;
    j["verdict"] = verdict;
    j["hamming"] = r.hamming ? Json(*r.hamming) : Json(nullptr);
    if (r.bit_flips) {
      Json flips = Json::array();
      for (bool b : *r.bit_flips) flips.push_back(b);
      j["bit_flips"] = flips;
    } else {
      j["bit_flips"] = nullptr;
    }
    j["seed"] = r.seed;
    out << j.dump() << '\n';
  }
  Json summary;
  summary["glitch"] = glitch_json(result.glitch);
  summary["trials"] = result.trials.size();
  summary["fault_count"] = result.fault_count;
  summary["reset_count"] = result.reset_count;
  out << summary.dump() << '\n';
}

std::vector<TrialRecord> read_campaign_log(std::istream& in) {
  std::vector<TrialRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      if (j.contains("fault_count")) continue;  // summary line
      TrialRecord r;
      r.trial_index = j.at("trial_index").get<std::uint64_t>();
      r.input_id = j.at("input_id").get<std::int64_t>();
      r.true_class = j.at("true_class").get<int>();
      r.glitch = glitch_from_json(j.at("glitch"));
      r.seed = j.at("seed").get<std::uint64_t>();
      const Json& v = j.at("verdict");
      const TrialStatus status = parse_status(v.at("status").get<std::string>());
      if (status == TrialStatus::ResetOrHang) {
        classify_outcome(r, std::nullopt);
      } else {
        classify_outcome(r, v.at("predicted").get<int>());
      }
      if (r.status != status) throw InputError("verdict status disagrees with predicted class");
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("campaign log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace glitchsim

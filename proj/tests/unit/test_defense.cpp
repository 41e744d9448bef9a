#include <doctest.h>

#include <cmath>
#include <sstream>

#include "glitchsim/campaign.hpp"
#include "glitchsim/defense.hpp"
#include "glitchsim/errors.hpp"

using namespace glitchsim;

namespace {

struct Trained {
  GenConfig gen;
  Dataset data;
  ModelParams params;
  MicroOpTrace trace;
  std::vector<CampaignInput> inputs;

  Trained() {
    gen.noise_sigma = 0.1;
    gen.samples_per_class = 40;
    data = generate(gen, 3);
    TrainSettings s;
    s.h1 = 9;
    s.h2 = 16;
    s.epochs = 30;
    params = train(data.samples(Split::Train), s, 3);
    const TracePreset preset = calibrated_preset();
    trace = compile_trace(preset.dims, preset.cost);
    inputs = select_protocol_inputs(data.samples(Split::Test), 3);
  }
};

const Trained& trained() {
  static const Trained t;
  return t;
}

// d=h1=h2=1, all weights zero, class 0 favoured by its bias. Skipping the
// normalisation of class 0 zeroes its probability and the prediction falls
// to class 1 (lowest index among the tied rest).
struct VoteToy {
  ModelParams params = ModelParams::zeros(Dims{1, 1, 1});
  MicroOpTrace trace = compile_trace(Dims{1, 1, 1}, CostModel::unit());
  SusceptibilityProfile profile;
  std::vector<CampaignInput> inputs{CampaignInput{0, 0, Vector{0.0}}};
  GlitchConfig glitch{2600, 2600, 102, 1};

  explicit VoteToy(double p) {
    params.bo[0] = 1.0;
    profile.corrupt_prob = {0, 0, 0, 0, p};
    for (auto& row : profile.corruption_mix) row = {0, 0, 0, 0};
    profile.corruption_mix[index_of(OpKind::NormElem)][index_of(CorruptionKind::SkipOp)] = 1.0;
    profile.reset_coeff = 0.0;
  }
};

}  // namespace

TEST_CASE("policy validation and names") {
  CHECK_THROWS_AS(DefensePolicy::majority_vote(4).validate(), InputError);
  CHECK_THROWS_AS(DefensePolicy::majority_vote(1).validate(), InputError);
  CHECK_NOTHROW(DefensePolicy::majority_vote(5).validate());
  CHECK_THROWS_AS(DefensePolicy::entropy_check(-0.1).validate(), InputError);
  CHECK_THROWS_AS(DefensePolicy::timing_jitter(-1).validate(), InputError);
  CHECK_THROWS_AS(DefensePolicy::activation_range({}).validate(), InputError);
  CHECK_THROWS_AS(DefensePolicy::glitch_monitor(1.5).validate(), InputError);
  CHECK(DefensePolicy::majority_vote(3).name() == "majority_vote(3)");
  CHECK(DefensePolicy::timing_jitter(1600).name() == "timing_jitter(1600)");
  DefensePolicy retry = DefensePolicy::entropy_check(1.0);
  retry.action = FlagAction::Retry;
  CHECK(retry.name() == "entropy_check(1)+retry");
}

TEST_CASE("output entropy") {
  const std::vector<double> one_hot{0, 0, 1, 0};
  CHECK(output_entropy(one_hot) == 0.0);
  const std::vector<double> uniform(32, 1.0 / 32);
  CHECK(*output_entropy(uniform) == doctest::Approx(std::log(32.0)));
  CHECK(*output_entropy(uniform) <= std::log(32.0));
  const std::vector<double> unnormalised{2, 2};
  CHECK(*output_entropy(unnormalised) == doctest::Approx(std::log(2.0)));
  CHECK_FALSE(output_entropy(std::vector<double>{0, 0}).has_value());
  CHECK_FALSE(output_entropy(std::vector<double>{-1, 2}).has_value());
  CHECK_FALSE(output_entropy(std::vector<double>{NAN, 1}).has_value());
}

TEST_CASE("majority vote without faults returns the clean prediction") {
  const Trained& t = trained();
  Attack none{GlitchConfig{}, SusceptibilityProfile{}, true};
  for (const Sample& s : t.data.samples(Split::Test)) {
    const DefendedOutcome o =
        defended_predict(DefensePolicy::majority_vote(3), t.params, s.features, t.trace, none, 9);
    CHECK(o.status == DefendedOutcome::Status::Accepted);
    CHECK(o.predicted == forward(t.params, s.features).predicted_class);
    CHECK(o.inferences == 3);
  }
}

TEST_CASE("entropy check at log(32) never rejects; one-hot outputs are never rejected") {
  const Trained& t = trained();
  const Attack attack{GlitchConfig{2600, 2600, 10026, 5}, SusceptibilityProfile{}, true};
  const DefensePolicy lenient = DefensePolicy::entropy_check(std::log(32.0));
  std::size_t seed = 0;
  for (const CampaignInput& in : t.inputs) {
    for (int r = 0; r < 10; ++r) {
      const DefendedOutcome o = defended_predict(lenient, t.params, in.features, t.trace, attack, ++seed);
      CHECK(o.status != DefendedOutcome::Status::Rejected);
    }
  }
  // saturated logits give an exactly one-hot output
  ModelParams p = ModelParams::zeros(Dims{1, 1, 1});
  p.bo[7] = 1000.0;
  const auto tr = compile_trace(Dims{1, 1, 1}, CostModel::unit());
  REQUIRE(*output_entropy(forward(p, std::vector<double>{0.0}).probs) == 0.0);
  for (double threshold : {1e-9, 0.5, 3.0}) {
    const DefendedOutcome o = defended_predict(DefensePolicy::entropy_check(threshold), p, std::vector<double>{0.0},
                                               tr, Attack{}, 1);
    CHECK(o.status == DefendedOutcome::Status::Accepted);
    CHECK(o.predicted == 7);
  }
}

TEST_CASE("timing jitter without an attack never changes the prediction") {
  const Trained& t = trained();
  Attack disarmed{GlitchConfig{2600, 2600, 14208, 5}, SusceptibilityProfile{}, false};
  Attack identity{GlitchConfig{0, 2600, 14208, 5}, SusceptibilityProfile{}, true};
  for (const Sample& s : t.data.samples(Split::Test)) {
    const int clean = forward(t.params, s.features).predicted_class;
    for (const Attack& a : {disarmed, identity}) {
      const DefendedOutcome o = defended_predict(DefensePolicy::timing_jitter(5000), t.params, s.features, t.trace, a, 4);
      CHECK(o.status == DefendedOutcome::Status::Accepted);
      CHECK(o.predicted == clean);
    }
  }
}

TEST_CASE("majority vote over three shots with per-shot fault probability 0.2") {
  const VoteToy toy(0.2);
  // the fault is a single NORM skip of class 0, which always yields class 1
  const FaultedRun skipped = execute_plan(
      toy.params, toy.inputs[0].features, toy.trace,
      FaultPlan{FaultPlan::Verdict::Corruptions, {{CorruptionKind::SkipOp, 102, 0}}});
  REQUIRE(toy.trace.ops()[102].kind == OpKind::NormElem);
  REQUIRE(toy.trace.ops()[102].neuron == 0);
  REQUIRE(skipped.result->predicted_class == 1);
  REQUIRE(forward(toy.params, toy.inputs[0].features).predicted_class == 0);

  CampaignOptions opt;
  opt.per_class_protocol = false;
  opt.reps = 10000;
  const CampaignContext ctx{toy.params, toy.trace, toy.profile, toy.inputs, 0, opt};
  const DefenseReport rep =
      evaluate_defense(DefensePolicy::majority_vote(3), Attack{toy.glitch, toy.profile, true}, ctx, 2024);
  const double p = 0.2;
  const double expected = 3 * p * p * (1 - p) + p * p * p;
  CHECK(expected == doctest::Approx(0.104));
  CHECK(rep.trials == 10000);
  CHECK(std::abs(rep.baseline_fault_rate - p) <= 0.02);
  CHECK(std::abs(rep.defended_fault_rate - expected) <= 0.02);
  CHECK(rep.flagged_rate == 0.0);
  CHECK(rep.overhead_factor == 3.0);
}

TEST_CASE("identity glitch: both arms fault-free") {
  const Trained& t = trained();
  const CampaignContext ctx{t.params, t.trace, SusceptibilityProfile{}, t.inputs, 0, {}};
  const Attack identity{GlitchConfig{0, 2600, 14208, 5}, SusceptibilityProfile{}, true};
  for (const DefensePolicy& p : {DefensePolicy::majority_vote(3), DefensePolicy::entropy_check(1.0),
                                 DefensePolicy::timing_jitter(1600), DefensePolicy::glitch_monitor(0.9)}) {
    const DefenseReport rep = evaluate_defense(p, identity, ctx, 5);
    CHECK(rep.baseline_fault_rate == 0.0);
    CHECK(rep.defended_fault_rate == 0.0);
    CHECK(rep.overhead_factor >= 1.0);
  }
}

TEST_CASE("jitter spreads a single-cycle ReLU1 glitch out of its window") {
  const Trained& t = trained();
  SusceptibilityProfile relu1_only;
  relu1_only.layer_scale = {0, 1, 0, 0, 0};
  relu1_only.corrupt_prob = {1, 1, 1, 1, 1};
  relu1_only.reset_coeff = 0.0;
  // second ReLU1 element; repeat 1 touches one cycle
  const Attack attack{GlitchConfig{2600, 2600, 14048 + 172, 1}, relu1_only, true};
  CampaignOptions opt;
  opt.reps = 32;
  const CampaignContext ctx{t.params, t.trace, relu1_only, t.inputs, 0, opt};
  const std::int64_t relu1_len = t.trace.windows().at(Layer::Relu1).length();
  const DefenseReport rep = evaluate_defense(DefensePolicy::timing_jitter(relu1_len + 1), attack, ctx, 77);
  CHECK(rep.trials == 1024);
  REQUIRE(rep.baseline_fault_rate > 0.0);
  CHECK(rep.defended_fault_rate < rep.baseline_fault_rate);
  CHECK(rep.overhead_factor > 1.0);
}

TEST_CASE("majority vote does not worsen a strong Dense1 attack") {
  const Trained& t = trained();
  const SusceptibilityProfile profile;
  const CampaignContext ctx{t.params, t.trace, profile, t.inputs, 0, {}};
  const Attack attack{GlitchConfig{2400, 2400, 10026, 2}, profile, true};
  const DefenseReport rep = evaluate_defense(DefensePolicy::majority_vote(3), attack, ctx, 13);
  CHECK(rep.baseline_fault_rate > 0.0);
  CHECK(rep.defended_fault_rate <= rep.baseline_fault_rate);
  CHECK(rep.overhead_factor == 3.0);
}

TEST_CASE("activation bounds calibration") {
  const Trained& t = trained();
  const auto train = t.data.samples(Split::Train);
  const ActivationBounds tight = calibrate_activation_bounds(t.params, train, 0.0);
  const ActivationBounds wide = calibrate_activation_bounds(t.params, train, 0.5);
  REQUIRE(tight.size() == 5);
  for (Layer l : kAllLayers) {
    CHECK(tight.at(l).first <= tight.at(l).second);
    CHECK(wide.at(l).first <= tight.at(l).first);
    CHECK(wide.at(l).second >= tight.at(l).second);
  }
  // relu outputs are non-negative
  CHECK(tight.at(Layer::Relu1).first >= 0.0);
  // every calibration sample passes its own zero-margin bounds
  const DefensePolicy range = DefensePolicy::activation_range(tight);
  for (std::size_t i = 0; i < train.size(); i += 13) {
    const DefendedOutcome o = defended_predict(range, t.params, train[i].features, t.trace, Attack{}, 1);
    CHECK(o.status == DefendedOutcome::Status::Accepted);
  }
  CHECK_THROWS_AS(calibrate_activation_bounds(t.params, {}, 0.1), InputError);
}

TEST_CASE("glitch monitor flags resets and retry re-runs flagged attempts") {
  const Trained& t = trained();
  SusceptibilityProfile always_reset;
  always_reset.reset_coeff = 1e9;
  const Attack attack{GlitchConfig{2600, 2600, 10026, 5}, always_reset, true};
  const auto& x = t.inputs[0].features;
  DefendedOutcome o = defended_predict(DefensePolicy::glitch_monitor(1.0), t.params, x, t.trace, attack, 3);
  CHECK(o.status == DefendedOutcome::Status::Rejected);
  o = defended_predict(DefensePolicy::glitch_monitor(0.0), t.params, x, t.trace, attack, 3);
  CHECK(o.status == DefendedOutcome::Status::ResetOrHang);
  DefensePolicy retry = DefensePolicy::glitch_monitor(1.0);
  retry.action = FlagAction::Retry;
  retry.max_retries = 2;
  o = defended_predict(retry, t.params, x, t.trace, attack, 3);
  CHECK(o.inferences == 3);
  CHECK(o.status == DefendedOutcome::Status::Rejected);
}

TEST_CASE("cross check against the nearest-centroid reference") {
  const Trained& t = trained();
  const DefensePolicy cc = DefensePolicy::cross_check(t.gen);
  for (const CampaignInput& in : t.inputs) {
    const DefendedOutcome o = defended_predict(cc, t.params, in.features, t.trace, Attack{}, 1);
    const bool agree = nearest_centroid(in.features, t.gen) == forward(t.params, in.features).predicted_class;
    CHECK((o.status == DefendedOutcome::Status::Accepted) == agree);
  }
}

TEST_CASE("defense CSV") {
  DefenseReport r;
  r.policy = "majority_vote(3)";
  r.baseline_fault_rate = 0.25;
  r.defended_fault_rate = 0.125;
  r.flagged_rate = 0.0;
  r.overhead_factor = 3.0;
  std::ostringstream os;
  write_defense_csv(os, std::vector<DefenseReport>{r});
  CHECK(os.str() ==
        "policy,baseline_rate,defended_rate,flagged_rate,overhead\n"
        "majority_vote(3),0.250000,0.125000,0.000000,3.000000\n");
}

#include "glitchsim/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "glitchsim/analysis.hpp"
#include "glitchsim/campaign.hpp"
#include "glitchsim/config.hpp"
#include "glitchsim/dataset.hpp"
#include "glitchsim/defense.hpp"
#include "glitchsim/errors.hpp"
#include "glitchsim/model.hpp"
#include "glitchsim/search.hpp"
#include "glitchsim/text.hpp"
#include "glitchsim/trace.hpp"

namespace glitchsim {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct Invocation {
  std::string command;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> jobs;
};

class Job {
 public:
  Job(const Invocation& inv, std::ostream& log) : log_(log) {
    if (!fs::is_regular_file(inv.config)) throw InputError("config file not found: " + inv.config);
    cfg_ = Config::load(inv.config);
    if (inv.seed) {
      seed_ = *inv.seed;
    } else if (cfg_.has("seed")) {
      seed_ = cfg_.get_u64("seed", 0);
    } else {
      throw InputError("a seed is required: pass --seed or set `seed` in the config");
    }
    out_dir_ = inv.out ? fs::path(*inv.out) : cfg_.resolve(cfg_.get_or("paths.output", "out"));
    jobs_ = inv.jobs ? *inv.jobs : static_cast<unsigned>(cfg_.get_int("jobs", 1));
    if (jobs_ < 1) throw InputError("jobs must be at least 1");
  }

  const Config& cfg() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  unsigned jobs() const { return jobs_; }
  std::ostream& log() { return log_; }

  // Input file from paths.<key>, defaulting to <output dir>/<fallback>.
  fs::path input(const std::string& key, const std::string& fallback) const {
    const auto v = cfg_.get("paths." + key);
    const fs::path p = v ? cfg_.resolve(*v) : out_dir_ / fallback;
    if (!fs::is_regular_file(p)) throw InputError("paths." + key + ": file not found: " + p.string());
    return p;
  }

  // Like input(), but a missing default file is not an error.
  std::optional<fs::path> input_if_present(const std::string& key, const std::string& fallback) const {
    if (cfg_.has("paths." + key)) return input(key, fallback);
    const fs::path p = out_dir_ / fallback;
    if (!fs::is_regular_file(p)) return std::nullopt;
    return p;
  }

  std::optional<fs::path> optional_input(const std::string& key) const {
    const auto v = cfg_.get("paths." + key);
    if (!v) return std::nullopt;
    const fs::path p = cfg_.resolve(*v);
    if (!fs::is_regular_file(p)) throw InputError("paths." + key + ": file not found: " + p.string());
    return p;
  }

  // Outputs are write-once: every name is checked before anything is written.
  void claim(const std::vector<std::string>& names) {
    for (const std::string& n : names) {
      if (fs::exists(out_dir_ / n)) {
        throw InputError("refusing to overwrite existing output: " + (out_dir_ / n).string());
      }
    }
    fs::create_directories(out_dir_);
    claimed_.insert(names.begin(), names.end());
  }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    if (!claimed_.count(name)) throw std::logic_error("output not claimed: " + name);
    const fs::path p = out_dir_ / name;
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    body(f);
    f.flush();
    if (!f) throw std::runtime_error("write failed: " + p.string());
    log_ << "wrote " << p.string() << '\n';
  }

 private:
  Config cfg_;
  std::uint64_t seed_ = 0;
  fs::path out_dir_;
  unsigned jobs_ = 1;
  std::set<std::string> claimed_;
  std::ostream& log_;
};

std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open " + p.string());
  return in;
}

GenConfig gen_config(const Config& c) {
  GenConfig g;
  g.d = static_cast<std::size_t>(c.get_int("data.d", static_cast<std::int64_t>(g.d)));
  g.centroid_scale = c.get_double("data.centroid_scale", g.centroid_scale);
  g.noise_sigma = c.get_double("data.noise_sigma", g.noise_sigma);
  g.bit1_flip_prob = c.get_double("data.bit1_flip_prob", g.bit1_flip_prob);
  g.samples_per_class =
      static_cast<std::size_t>(c.get_int("data.samples_per_class", static_cast<std::int64_t>(g.samples_per_class)));
  g.test_fraction = c.get_double("data.test_fraction", g.test_fraction);
  g.validate();
  return g;
}

TrainSettings train_settings(const Config& c) {
  TrainSettings s;
  const auto positive = [&c](const std::string& key, std::int64_t fallback) {
    const std::int64_t v = c.get_int(key, fallback);
    if (v < 1) throw InputError(key + " must be at least 1");
    return v;
  };
  s.h1 = static_cast<std::size_t>(positive("model.h1", static_cast<std::int64_t>(s.h1)));
  s.h2 = static_cast<std::size_t>(positive("model.h2", static_cast<std::int64_t>(s.h2)));
  s.learning_rate = c.get_double("model.learning_rate", s.learning_rate);
  s.epochs = static_cast<int>(positive("model.epochs", s.epochs));
  s.batch_size = static_cast<std::size_t>(positive("model.batch_size", static_cast<std::int64_t>(s.batch_size)));
  if (!(s.learning_rate > 0.0)) throw InputError("model.learning_rate must be positive");
  return s;
}

CostModel cost_model(const Config& c) {
  const std::string preset = c.get_or("trace.preset", "calibrated");
  CostModel m;
  if (preset == "calibrated") {
    m = calibrated_preset().cost;
  } else if (preset != "unit") {
    throw InputError("trace.preset must be calibrated or unit, got '" + preset + "'");
  }
  for (const auto& [k, v] : c.section("trace.cost")) m.cycles_per[index_of(parse_op_kind(k))] = parse_int(v, k);
  for (const auto& [k, v] : c.section("trace.overhead")) m.layer_overhead[index_of(parse_layer(k))] = parse_int(v, k);
  m.prologue_cycles = c.get_int("trace.prologue", m.prologue_cycles);
  m.validate();
  return m;
}

GlitchConfig glitch_config(const Config& c) {
  GlitchConfig g;
  g.width = static_cast<int>(c.get_int("glitch.width", 0));
  g.offset = static_cast<int>(c.get_int("glitch.offset", 0));
  g.external_offset = c.get_int("glitch.external_offset", 0);
  g.repeat = static_cast<int>(c.get_int("glitch.repeat", 1));
  g.validate();
  return g;
}

std::vector<Sample> load_samples(const fs::path& p) {
  std::ifstream in = open_input(p);
  return read_samples_csv(in);
}

ModelParams load_model(const Job& job) {
  std::ifstream in = open_input(job.input("weights", "weights.mlp"));
  return load_weights(in);
}

SusceptibilityProfile load_profile_for(const Job& job) {
  SusceptibilityProfile base = SusceptibilityProfile::defaults();
  if (const auto p = job.optional_input("profile")) base = load_profile(*p);
  return parse_profile(job.cfg().section("profile"), base);
}

struct CampaignSetup {
  std::vector<Sample> test;
  std::vector<CampaignInput> inputs;
  CampaignOptions options;
};

CampaignSetup campaign_setup(const Job& job, const ModelParams& params) {
  const Config& c = job.cfg();
  CampaignSetup s;
  s.test = load_samples(job.input("test_data", "test.csv"));
  const std::string mode = c.get_or("protocol.inputs", "per_class");
  if (mode == "per_class") {
    // by default only inputs the clean model gets right are eligible
    std::vector<Sample> pool;
    std::vector<std::int64_t> row;  // pool index -> test.csv row
    const bool clean_only = c.get_bool("protocol.clean_only", true);
    for (std::size_t i = 0; i < s.test.size(); ++i) {
      const Sample& x = s.test[i];
      if (clean_only && forward(params, x.features).predicted_class != x.true_class) continue;
      pool.push_back(x);
      row.push_back(static_cast<std::int64_t>(i));
    }
    s.inputs = select_protocol_inputs(pool, job.seed());
    for (CampaignInput& in : s.inputs) in.input_id = row[static_cast<std::size_t>(in.input_id)];
    s.options.per_class_protocol = true;
  } else if (mode == "all") {
    s.inputs = as_inputs(s.test);
    s.options.per_class_protocol = false;
  } else if (mode.rfind("class:", 0) == 0) {
    const auto k = parse_int(mode.substr(6), "protocol.inputs");
    for (const CampaignInput& in : as_inputs(s.test)) {
      if (in.true_class == k) s.inputs.push_back(in);
    }
    if (s.inputs.empty()) throw InputError("protocol.inputs: no test samples of class " + mode.substr(6));
    s.options.per_class_protocol = false;
  } else {
    throw InputError("protocol.inputs must be per_class, all or class:<k>, got '" + mode + "'");
  }
  s.options.reps = static_cast<int>(c.get_int("protocol.reps", 3));
  s.options.armed = c.get_bool("protocol.armed", true);
  s.options.jobs = job.jobs();
  return s;
}

void cmd_gen_data(Job& job) {
  const GenConfig g = gen_config(job.cfg());
  const Dataset ds = generate(g, job.seed());
  job.claim({"train.csv", "test.csv"});
  job.write("train.csv", [&](std::ostream& o) { write_samples_csv(o, ds.samples(Split::Train)); });
  job.write("test.csv", [&](std::ostream& o) { write_samples_csv(o, ds.samples(Split::Test)); });
}

void cmd_train(Job& job) {
  const TrainSettings s = train_settings(job.cfg());
  const std::vector<Sample> train_set = load_samples(job.input("train_data", "train.csv"));
  std::optional<std::vector<Sample>> test_set;
  if (const auto p = job.input_if_present("test_data", "test.csv")) test_set = load_samples(*p);
  job.claim({"weights.mlp", "train_report.json"});
  const ModelParams params = train(train_set, s, job.seed());
  Json report;
  report["train_accuracy"] = accuracy(params, train_set);
  report["test_accuracy"] = test_set ? Json(accuracy(params, *test_set)) : Json(nullptr);
  job.write("weights.mlp", [&](std::ostream& o) { save_weights(o, params); });
  job.write("train_report.json", [&](std::ostream& o) { o << report.dump(2) << '\n'; });
}

void cmd_run(Job& job) {
  const ModelParams params = load_model(job);
  const SusceptibilityProfile profile = load_profile_for(job);
  const MicroOpTrace trace = compile_trace(params.dims, cost_model(job.cfg()));
  const GlitchConfig glitch = glitch_config(job.cfg());
  const CampaignSetup setup = campaign_setup(job, params);
  const bool dump_trace = job.cfg().get_bool("trace.dump", false);
  std::vector<std::string> outputs{"campaign.jsonl", "run_summary.json"};
  if (dump_trace) outputs.push_back("trace.csv");
  job.claim(outputs);

  const CampaignContext ctx{params, trace, profile, setup.inputs, job.seed(), setup.options};
  const ConfigResult result = run_config(ctx, glitch);
  Json summary;
  summary["trials"] = result.trials.size();
  summary["correct"] = result.correct_count();
  summary["fault_count"] = result.fault_count;
  summary["reset_count"] = result.reset_count;
  summary["accuracy"] = static_cast<double>(result.correct_count()) / static_cast<double>(result.trials.size());
  job.write("campaign.jsonl", [&](std::ostream& o) { write_campaign_log(o, result); });
  job.write("run_summary.json", [&](std::ostream& o) { o << summary.dump(2) << '\n'; });
  if (dump_trace) job.write("trace.csv", [&](std::ostream& o) { write_trace_csv(o, trace); });
}

void cmd_search(Job& job) {
  const Config& c = job.cfg();
  const ModelParams params = load_model(job);
  const SusceptibilityProfile profile = load_profile_for(job);
  const MicroOpTrace trace = compile_trace(params.dims, cost_model(c));
  const CampaignSetup setup = campaign_setup(job, params);

  const std::string layer_name = c.get_or("search.layer", "all");
  SearchSpace space;
  if (layer_name == "all") {
    space = SearchSpace::for_trace(trace);
  } else if (layer_name != "full") {
    space = SearchSpace::for_window(trace.windows().at(parse_layer(layer_name)));
  }
  const std::string objective_name = c.get_or("search.objective", "untargeted");
  const double lambda = c.get_double("search.reset_penalty", 5.0);
  ObjectiveSpec objective;
  if (objective_name == "untargeted") {
    objective = ObjectiveSpec::untargeted(lambda);
  } else if (objective_name == "targeted") {
    objective = ObjectiveSpec::targeted(static_cast<int>(c.get_int("search.target_class", 0)), lambda);
  } else {
    throw InputError("search.objective must be untargeted or targeted");
  }
  const Strategy strategy = parse_strategy(c.get_or("search.strategy", "adaptive"));
  const std::int64_t budget = c.get_int("search.budget", 100);
  const std::int64_t k = c.get_int("search.top_k", 5);
  if (budget < 1) throw InputError("search.budget must be at least 1");
  if (k < 1) throw InputError("search.top_k must be at least 1");

  const std::string topk_name = "topk_" + layer_name + ".csv";
  job.claim({"search.csv", topk_name, "search_evaluations.csv", "search_summary.json"});
  const CampaignContext ctx{params, trace, profile, setup.inputs, job.seed(), setup.options};
  const SearchReport report =
      search(space, objective, static_cast<std::size_t>(budget), strategy, ctx, job.seed());

  const auto all_rows = top_k_table(report, report.top_k.size());
  const auto top_rows = top_k_table(report, static_cast<std::size_t>(k));
  Json summary;
  summary["strategy"] = std::string(to_string(strategy));
  summary["layer"] = layer_name;
  summary["evaluated"] = report.evaluated.size();
  const auto first = report.evaluations_to_first_fault();
  summary["evaluations_to_first_fault"] = first ? Json(*first) : Json(nullptr);

  job.write("search.csv", [&](std::ostream& o) { write_ranking_csv(o, all_rows); });
  job.write(topk_name, [&](std::ostream& o) { write_table_csv(o, top_rows); });
  job.write("search_evaluations.csv", [&](std::ostream& o) {
    o << "order,width,offset,external_offset,repeats,faults,resets,score\n";
    for (const Evaluation& e : report.evaluated) {
      o << e.order << ',' << e.glitch.width << ',' << e.glitch.offset << ',' << e.glitch.external_offset << ','
        << e.glitch.repeat << ',' << e.fault_count << ',' << e.reset_count << ',' << format_fixed(e.score, 6)
        << '\n';
    }
  });
  job.write("search_summary.json", [&](std::ostream& o) { o << summary.dump(2) << '\n'; });
}

void cmd_analyze(Job& job) {
  std::ifstream in = open_input(job.input("log", "campaign.jsonl"));
  const std::vector<TrialRecord> log = read_campaign_log(in);
  if (log.empty()) throw InputError("campaign log has no trial records");

  const std::string which = job.cfg().get_or("analyze.class", "all");
  std::set<int> classes;
  std::vector<TrialRecord> selected;
  if (which == "all") {
    selected = log;
    for (const TrialRecord& r : log) classes.insert(r.true_class);
  } else {
    const int k = static_cast<int>(parse_int(which, "analyze.class"));
    for (const TrialRecord& r : log) {
      if (r.true_class == k) selected.push_back(r);
    }
    if (selected.empty()) throw InputError("campaign log has no trials of class " + which);
    classes.insert(k);
  }

  std::vector<std::string> outputs{"bitflips.csv", "analysis.json"};
  for (int k : classes) outputs.push_back("histogram_" + std::to_string(k) + ".csv");
  job.claim(outputs);

  const BitFlipStats stats = bit_flip_stats(selected);
  const auto chi = flip_uniformity_test(stats);
  Json j;
  j["n_trials"] = stats.n_trials;
  j["n_reset"] = stats.n_reset;
  j["mean_hamming"] = stats.mean_hamming ? Json(*stats.mean_hamming) : Json(nullptr);
  j["per_bit_flip_rate"] = stats.per_bit_flip_rate ? Json(*stats.per_bit_flip_rate) : Json(nullptr);
  j["hamming_histogram"] = stats.hamming_histogram;
  if (chi) {
    j["flip_uniformity"] = Json{{"statistic", chi->statistic}, {"dof", chi->dof}, {"p_value", chi->p_value}};
  } else {
    j["flip_uniformity"] = nullptr;
  }

  job.write("bitflips.csv", [&](std::ostream& o) { write_bitflips_csv(o, stats); });
  job.write("analysis.json", [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  for (int k : classes) {
    const ClassHistogram h = class_histogram(log, k);
    job.write("histogram_" + std::to_string(k) + ".csv", [&](std::ostream& o) { write_histogram_csv(o, h); });
  }
}

DefensePolicy policy_from(const std::string& name, const Job& job, const ModelParams& params) {
  const Config& c = job.cfg();
  DefensePolicy p;
  if (name == "majority_vote") {
    p = DefensePolicy::majority_vote(static_cast<int>(c.get_int("defense.shots", 3)));
  } else if (name == "entropy_check") {
    p = DefensePolicy::entropy_check(c.get_double("defense.entropy_threshold", 1.0));
  } else if (name == "activation_range") {
    const std::vector<Sample> train_set = load_samples(job.input("train_data", "train.csv"));
    p = DefensePolicy::activation_range(
        calibrate_activation_bounds(params, train_set, c.get_double("defense.margin", 0.1)));
  } else if (name == "timing_jitter") {
    p = DefensePolicy::timing_jitter(c.get_int("defense.max_jitter", 1000));
  } else if (name == "cross_check") {
    p = DefensePolicy::cross_check(gen_config(c));
  } else if (name == "glitch_monitor") {
    p = DefensePolicy::glitch_monitor(c.get_double("defense.detection_prob", 1.0));
  } else {
    throw InputError("unknown defense policy: " + name);
  }
  const std::string action = c.get_or("defense.action", "reject");
  if (action == "retry") {
    p.action = FlagAction::Retry;
  } else if (action != "reject") {
    throw InputError("defense.action must be reject or retry");
  }
  p.max_retries = static_cast<int>(c.get_int("defense.max_retries", 1));
  p.validate();
  return p;
}

void cmd_defend(Job& job) {
  const ModelParams params = load_model(job);
  const SusceptibilityProfile profile = load_profile_for(job);
  const MicroOpTrace trace = compile_trace(params.dims, cost_model(job.cfg()));
  const GlitchConfig glitch = glitch_config(job.cfg());
  const CampaignSetup setup = campaign_setup(job, params);

  std::vector<DefensePolicy> policies;
  std::stringstream names(job.cfg().get_or("defense.policy", "majority_vote"));
  for (std::string n; std::getline(names, n, ',');) {
    const auto b = n.find_first_not_of(' ');
    const auto e = n.find_last_not_of(' ');
    if (b == std::string::npos) continue;
    policies.push_back(policy_from(n.substr(b, e - b + 1), job, params));
  }
  if (policies.empty()) throw InputError("defense.policy lists no policies");
  job.claim({"defense.csv"});

  const Attack attack{glitch, profile, setup.options.armed};
  const CampaignContext ctx{params, trace, profile, setup.inputs, job.seed(), setup.options};
  std::vector<DefenseReport> reports;
  for (const DefensePolicy& p : policies) reports.push_back(evaluate_defense(p, attack, ctx, job.seed()));
  job.write("defense.csv", [&](std::ostream& o) { write_defense_csv(o, reports); });
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Voltage-glitch fault-injection simulator for a small readout classifier", "glitchsim"};
  app.require_subcommand(1);
  Invocation inv;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "generate synthetic train/test readout data"},
      {"train", "train the classifier"},
      {"run", "run one glitch campaign and write its JSONL log"},
      {"search", "search the glitch parameter space"},
      {"analyze", "bit-flip statistics and class histograms of a campaign log"},
      {"defend", "evaluate countermeasures against a glitch"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", inv.config, "configuration file")->required();
    sub->add_option("--seed", inv.seed, "seed (overrides the config)");
    sub->add_option("--out", inv.out, "output directory (overrides paths.output)");
    sub->add_option("--jobs", inv.jobs, "maximum worker threads")->check(CLI::PositiveNumber);
    sub->callback([&inv, n = name] { inv.command = n; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInvalid;
  }

  try {
    Job job(inv, out);
    if (inv.command == "gen-data") {
      cmd_gen_data(job);
    } else if (inv.command == "train") {
      cmd_train(job);
    } else if (inv.command == "run") {
      cmd_run(job);
    } else if (inv.command == "search") {
      cmd_search(job);
    } else if (inv.command == "analyze") {
      cmd_analyze(job);
    } else {
      cmd_defend(job);
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitExecution;
  }
  return kExitOk;
}

}  // namespace glitchsim

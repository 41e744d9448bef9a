#include <doctest.h>

#include <sstream>

#include "glitchsim/errors.hpp"
#include "glitchsim/rng.hpp"
#include "glitchsim/trace.hpp"

using namespace glitchsim;

TEST_CASE("unit-cost 1-1-1 trace has the expected op sequence") {
  const MicroOpTrace t = compile_trace(Dims{1, 1, 1}, CostModel::unit());
  const auto& ops = t.ops();
  REQUIRE(ops.size() == 6 + 4 * 32);
  const OpKind head[] = {OpKind::Mac, OpKind::BiasAdd, OpKind::ReluElem,
                         OpKind::Mac, OpKind::BiasAdd, OpKind::ReluElem};
  for (std::size_t i = 0; i < 6; ++i) CHECK(ops[i].kind == head[i]);
  // per class: MAC then BIAS_ADD, then 32 EXP, then 32 NORM
  for (std::size_t k = 0; k < 32; ++k) {
    CHECK(ops[6 + 2 * k].kind == OpKind::Mac);
    CHECK(ops[6 + 2 * k].neuron == k);
    CHECK(ops[7 + 2 * k].kind == OpKind::BiasAdd);
    CHECK(ops[70 + k].kind == OpKind::ExpElem);
    CHECK(ops[102 + k].kind == OpKind::NormElem);
    CHECK(ops[102 + k].neuron == k);
  }
  for (std::size_t i = 0; i < ops.size(); ++i) {
    CHECK(ops[i].cycle_start == static_cast<std::int64_t>(i));
    CHECK(ops[i].cycle_end == static_cast<std::int64_t>(i));
  }
  CHECK(t.trigger_cycle() == 0);
  CHECK(t.total_cycles() == 133);
}

TEST_CASE("MAC ordering is neuron-major, input-minor") {
  const MicroOpTrace t = compile_trace(Dims{3, 2, 1}, CostModel::unit());
  const auto& ops = t.ops();
  CHECK(ops[0].neuron == 0);
  CHECK(ops[0].operand == 0);
  CHECK(ops[2].operand == 2);
  CHECK(ops[3].kind == OpKind::BiasAdd);
  CHECK(ops[4].neuron == 1);
  CHECK(ops[4].operand == 0);
}

TEST_CASE("calibrated preset reproduces the measured windows") {
  const TracePreset preset = calibrated_preset();
  const MicroOpTrace t = compile_trace(preset.dims, preset.cost);
  const LayerWindows w = layer_windows(t);
  CHECK(w.at(Layer::Dense1) == CycleWindow{687, 14047});
  CHECK(w.at(Layer::Relu1) == CycleWindow{14048, 15602});
  CHECK(w.at(Layer::Dense2) == CycleWindow{15603, 37269});
  CHECK(w.at(Layer::Relu2) == CycleWindow{37270, 40259});
  CHECK(w.at(Layer::Output) == CycleWindow{40260, 118602});
  CHECK(t.windows() == w);
  CHECK(t.trigger_cycle() == 687);
  CHECK(t.total_cycles() == 118602);
}

TEST_CASE("locate") {
  const TracePreset preset = calibrated_preset();
  const MicroOpTrace t = compile_trace(preset.dims, preset.cost);
  const MicroOp& first = t.locate(687);
  CHECK(first.kind == OpKind::Mac);
  CHECK(first.layer == Layer::Dense1);
  CHECK(first.neuron == 0);
  CHECK(first.operand == 0);
  const MicroOp& last = t.locate(118602);
  CHECK(last.kind == OpKind::NormElem);
  CHECK(last.neuron == 31);
  CHECK(t.locate(14208).layer == Layer::Relu1);
  CHECK(t.locate(10026).layer == Layer::Dense1);
  CHECK_THROWS_AS(t.locate(686), OutOfTraceError);
  CHECK_THROWS_AS(t.locate(118603), OutOfTraceError);
  CHECK_THROWS_AS(t.locate(-1), OutOfTraceError);
}

TEST_CASE("locate covers every cycle exactly once (linear-scan oracle)") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Dims dims{static_cast<std::size_t>(rng.uniform_int(1, 4)), static_cast<std::size_t>(rng.uniform_int(1, 4)),
                    static_cast<std::size_t>(rng.uniform_int(1, 4))};
    CostModel cost;
    for (auto& c : cost.cycles_per) c = rng.uniform_int(1, 6);
    for (auto& c : cost.layer_overhead) c = rng.uniform_int(0, 3);
    cost.prologue_cycles = rng.uniform_int(0, 10);
    const MicroOpTrace t = compile_trace(dims, cost);
    CHECK(t.trigger_cycle() == cost.prologue_cycles);
    for (std::int64_t c = t.trigger_cycle(); c <= t.total_cycles(); ++c) {
      std::size_t hits = 0, hit = 0;
      for (std::size_t i = 0; i < t.ops().size(); ++i) {
        if (t.ops()[i].cycle_start <= c && c <= t.ops()[i].cycle_end) {
          ++hits;
          hit = i;
        }
      }
      REQUIRE(hits == 1);
      CHECK(t.locate_index(c) == hit);
    }
  }
}

TEST_CASE("window arithmetic matches the closed form") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const Dims dims{static_cast<std::size_t>(rng.uniform_int(1, 12)),
                    static_cast<std::size_t>(rng.uniform_int(1, 20)),
                    static_cast<std::size_t>(rng.uniform_int(1, 20))};
    CostModel cost;
    for (auto& c : cost.cycles_per) c = rng.uniform_int(1, 300);
    for (auto& c : cost.layer_overhead) c = rng.uniform_int(0, 50);
    cost.prologue_cycles = rng.uniform_int(0, 1000);
    const auto& cp = cost.cycles_per;
    const auto& oh = cost.layer_overhead;
    const auto d = static_cast<std::int64_t>(dims.d), h1 = static_cast<std::int64_t>(dims.h1),
               h2 = static_cast<std::int64_t>(dims.h2);
    // MAC, BIAS_ADD, RELU_ELEM, EXP_ELEM, NORM_ELEM
    const std::int64_t len[5] = {
        h1 * d * cp[0] + h1 * cp[1] + oh[0],
        h1 * cp[2] + oh[1],
        h2 * h1 * cp[0] + h2 * cp[1] + oh[2],
        h2 * cp[2] + oh[3],
        32 * h2 * cp[0] + 32 * cp[1] + 32 * cp[3] + 32 * cp[4] + oh[4],
    };
    const MicroOpTrace t = compile_trace(dims, cost);
    const LayerWindows w = layer_windows(t);
    std::int64_t start = cost.prologue_cycles;
    for (Layer l : kAllLayers) {
      CHECK(w.at(l).start == start);
      CHECK(w.at(l).length() == len[index_of(l)]);
      start = w.at(l).end + 1;
    }
    CHECK(t.total_cycles() == start - 1);
    CHECK(dense_window_length(dims.h1, dims.d, cost, Layer::Dense1) == len[0]);
    CHECK(dense_window_length(dims.h2, dims.h1, cost, Layer::Dense2) == len[2]);
    CHECK(dense_window_length(32, dims.h2, cost, Layer::Output) == len[4]);
  }
}

TEST_CASE("MAC cycles in dense layers dominate ReLU cycles for default costs") {
  for (const Dims& dims : {Dims{}, Dims{10, 9, 16}, Dims{2, 2, 2}}) {
    const MicroOpTrace t = compile_trace(dims, CostModel::unit());
    std::int64_t dense_mac = 0, relu = 0;
    for (const MicroOp& op : t.ops()) {
      const std::int64_t n = op.cycle_end - op.cycle_start + 1;
      if (op.kind == OpKind::Mac) dense_mac += n;
      if (op.layer == Layer::Relu1 || op.layer == Layer::Relu2) relu += n;
    }
    CHECK(dense_mac > relu);
  }
}

TEST_CASE("invalid inputs") {
  CHECK_THROWS_AS(compile_trace(Dims{0, 1, 1}, CostModel::unit()), InputError);
  CostModel bad;
  bad.cycles_per[2] = 0;
  CHECK_THROWS_AS(compile_trace(Dims{}, bad), InputError);
  CHECK_THROWS_AS(parse_layer("relu1"), InputError);
  CHECK(parse_layer("ReLU1") == Layer::Relu1);
  CHECK(parse_op_kind("NORM_ELEM") == OpKind::NormElem);

  std::vector<MicroOp> ops{{OpKind::Mac, Layer::Dense1, 0, 0, 0, 1}, {OpKind::Mac, Layer::Dense1, 0, 1, 3, 3}};
  CHECK_THROWS_AS(MicroOpTrace::from_ops(ops), InputError);
  ops[1].cycle_start = 2;
  CHECK_NOTHROW(MicroOpTrace::from_ops(ops));
  ops[1].layer = Layer::Dense2;
  ops[0].layer = Layer::Relu2;
  CHECK_THROWS_AS(MicroOpTrace::from_ops(ops), InputError);
}

TEST_CASE("single-layer trace has one window spanning it") {
  std::vector<MicroOp> ops{{OpKind::ReluElem, Layer::Relu1, 0, 0, 5, 9}, {OpKind::ReluElem, Layer::Relu1, 1, 0, 10, 12}};
  const MicroOpTrace t = MicroOpTrace::from_ops(ops);
  const LayerWindows w = layer_windows(t);
  REQUIRE(w.size() == 1);
  CHECK(w.at(Layer::Relu1) == CycleWindow{5, 12});
}

TEST_CASE("trace CSV dump") {
  const MicroOpTrace t = compile_trace(Dims{1, 1, 1}, CostModel::unit());
  std::ostringstream os;
  write_trace_csv(os, t);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "kind,layer,neuron,operand,cycle_start,cycle_end");
  std::getline(is, line);
  CHECK(line == "MAC,Dense1,0,0,0,0");
  std::size_t rows = 1;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == t.ops().size());
}

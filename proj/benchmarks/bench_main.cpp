#include <benchmark/benchmark.h>

#include "equitrace/config.hpp"

namespace {

using namespace equitrace;

Model gallery_model(const char* name) { return build_model(RunConfig::parse(model_gallery().at(name))); }

void BM_FlowWithJacobian(benchmark::State& state) {
  const Model m = gallery_model("suspension_up");
  Propagator prop(m.system);
  const Point p = make_vec({0.3, 0.2});
  for (auto _ : state) benchmark::DoNotOptimize(prop.flow_with_jacobian(p, 3.0));
}
BENCHMARK(BM_FlowWithJacobian);

void BM_FiberTransport(benchmark::State& state) {
  const Model m = gallery_model("perm_bundle");
  Propagator prop(m.system);
  const Point p = make_vec({0.1, 0.2, 0.3, 0.0});
  for (auto _ : state) benchmark::DoNotOptimize(prop.fiber_transport(p, 2.0));
}
BENCHMARK(BM_FiberTransport);

void BM_FindOrbitsCatmap(benchmark::State& state) {
  const Model m = gallery_model("catmap");
  for (auto _ : state) {
    benchmark::DoNotOptimize(find_orbits(m.system, m.g, m.assemble.window, m.assemble.seeds));
  }
}
BENCHMARK(BM_FindOrbitsCatmap)->Unit(benchmark::kMillisecond);

void BM_AssemblePerm(benchmark::State& state) {
  const Model m = gallery_model("perm");
  for (auto _ : state) benchmark::DoNotOptimize(assemble(m.system, m.chi, m.g, m.assemble));
}
BENCHMARK(BM_AssemblePerm)->Unit(benchmark::kMillisecond);

void BM_MollifiedTranslation(benchmark::State& state) {
  const Model m = gallery_model("translation");
  for (auto _ : state) {
    benchmark::DoNotOptimize(mollified_value(m.system, m.chi, m.g, m.oracle_psi, 0.02, m.mollifier));
  }
}
BENCHMARK(BM_MollifiedTranslation)->Unit(benchmark::kMillisecond);

void BM_CatmapFixedPoints(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(catmap_fixed_points(static_cast<int>(state.range(0))));
}
BENCHMARK(BM_CatmapFixedPoints)->Arg(4)->Arg(8)->Arg(12);

}  // namespace
BENCHMARK_MAIN();

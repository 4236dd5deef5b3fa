#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "phi42/harness.hpp"

using namespace phi42;

namespace {

SimConfig small_sim(int n, double dt, double horizon) {
  SimConfig s;
  s.grid = dealiased_grid(n);
  s.dt = dt;
  s.horizon = horizon;
  s.record_stride = 10;
  return s;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("phi42_harness_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Observables, ParseForms) {
  EXPECT_EQ(parse_observable("wick2").kind, ObservableKind::Wick2Integral);
  const auto m = parse_observable("mode:2,-1");
  EXPECT_EQ(m.kind, ObservableKind::ModeMagnitude);
  EXPECT_EQ(m.k1, 2);
  EXPECT_EQ(m.k2, -1);
  EXPECT_EQ(m.name, "mode_2_-1");
  EXPECT_EQ(parse_observable("modesq:1,0").kind, ObservableKind::ModeSquared);
  EXPECT_DOUBLE_EQ(parse_observable("lp:4").param, 4.0);
  EXPECT_DOUBLE_EQ(parse_observable("besov:-0.05").param, -0.05);
  EXPECT_EQ(parse_observable("cyl:1,1").kind, ObservableKind::Cylinder);
  EXPECT_EQ(parse_observables("wick2;lp:2;;mode:1,0").size(), 3u);
  for (const char* bad : {"wick3", "mode:1", "lp:x", "wick2:1", ""}) {
    try {
      parse_observable(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidArgument) << bad;
    }
  }
}

TEST(Observables, ClosedFormValues) {
  const GridSpec g = dealiased_grid(4);
  const WickContext ctx = make_wick_context(g);
  // Constant field 1.3: int (1.3^2 - c) over the (2 pi)^2 torus.
  const FourierField c = FourierField::constant(g, 1.3);
  EXPECT_NEAR(evaluate(parse_observable("wick2"), c, ctx), (1.69 - ctx.c_n) * kTwoPi * kTwoPi, 1e-11);
  EXPECT_NEAR(evaluate(parse_observable("lp:2"), c, ctx), 1.3 * kTwoPi, 1e-12);

  const FourierField m = FourierField::mode(g, 1, 0, Complex(0.3, 0.4));
  EXPECT_NEAR(evaluate(parse_observable("mode:1,0"), m, ctx), 0.5, 1e-15);
  EXPECT_NEAR(evaluate(parse_observable("mode:-1,0"), m, ctx), 0.5, 1e-15);
  EXPECT_NEAR(evaluate(parse_observable("modesq:1,0"), m, ctx), 0.25, 1e-15);
  EXPECT_EQ(evaluate(parse_observable("mode:2,2"), m, ctx), 0.0);
  EXPECT_THROW(evaluate(parse_observable("mode:5,0"), m, ctx), Error);

  // <l, f> for the unit real direction along e_(1,0): sqrt(2) Re f_(1,0).
  const double proj = std::sqrt(2.0) * 0.3;
  EXPECT_NEAR(evaluate(parse_observable("cyl:1,0"), m, ctx), std::sin(proj), 1e-12);
}

TEST(Records, Fnv1aKnownValues) {
  EXPECT_EQ(hex64(fnv1a("")), "cbf29ce484222325");
  EXPECT_EQ(hex64(fnv1a("a")), "af63dc4c8601ec8c");
  EXPECT_EQ(hex64(fnv1a("foobar")), "85944171f73967e8");
}

TEST(Records, CsvLayoutAndRoundTrip) {
  RecordTable t;
  t.experiment_id = "demo";
  t.columns = {"x", "y"};
  t.add(0, 0.1, {1.0 / 3.0, -2.5e-300});
  t.add(1, 0.2, {std::nan(""), 7.0});
  const auto dir = temp_dir("csv");
  write_csv(dir / "t.csv", t, {"abc", 42});
  std::ifstream in(dir / "t.csv");
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  EXPECT_EQ(header, "experiment_id,trajectory_id,time,x,y,config_hash,seed");
  EXPECT_EQ(row1.substr(0, 9), "demo,0,0.");
  std::stringstream ss(row1);
  std::string field;
  std::vector<std::string> fields;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  ASSERT_EQ(fields.size(), 7u);
  EXPECT_EQ(std::stod(fields[3]), 1.0 / 3.0);
  EXPECT_EQ(std::stod(fields[4]), -2.5e-300);
  EXPECT_EQ(fields[5], "abc");
  EXPECT_EQ(fields[6], "42");
  EXPECT_NE(row2.find("nan"), std::string::npos);
  EXPECT_THROW(write_csv(dir / "missing" / "t.csv", t, {"abc", 42}), Error);
}

TEST(Records, JsonRealsAreRepresentable) {
  EXPECT_EQ(json_real(1.5), Json(1.5));
  EXPECT_EQ(json_real(std::numeric_limits<double>::infinity()), Json("inf"));
  EXPECT_EQ(json_real(-std::numeric_limits<double>::infinity()), Json("-inf"));
  EXPECT_EQ(json_real(std::nan("")), Json("nan"));
}

TEST(ParallelFor, VisitsEveryIndexOnceAndRethrows) {
  std::vector<std::atomic<int>> hits(257);
  parallel_for(257, 4, [&](long long i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(50, 3,
                            [](long long i) {
                              if (i == 17) throw Error(ErrorCode::NonfiniteField, "boom");
                            }),
               Error);
}

TEST(Simulation, RecordsAreIndependentOfThreadCount) {
  SimulateParams p;
  p.sim = small_sim(4, 0.01, 0.5);
  p.ensemble = 5;
  p.observables = parse_observables("wick2;lp:2;mode:1,0");
  p.threads = 1;
  const RngStream rng(5, 0);
  const auto a = run_simulation(p, rng);
  p.threads = 3;
  const auto b = run_simulation(p, rng);
  ASSERT_EQ(a.table.rows.size(), b.table.rows.size());
  ASSERT_EQ(a.table.rows.size(), 5u * 6u);
  for (std::size_t i = 0; i < a.table.rows.size(); ++i) {
    EXPECT_EQ(a.table.rows[i].trajectory_id, b.table.rows[i].trajectory_id);
    EXPECT_EQ(a.table.rows[i].time, b.table.rows[i].time);
    EXPECT_EQ(a.table.rows[i].observables, b.table.rows[i].observables);
  }
}

TEST(CouplingExperiment, IdenticalStartsStayAtZero) {
  CouplingParams p;
  p.sim = small_sim(4, 1e-2, 2.0);
  p.sim.a1 = 1.0;
  p.lambdas = {5.0};
  p.ensemble = 10;
  p.identical_starts = true;
  const auto rep = run_coupling_experiment(p, RngStream(3, 0));
  for (const auto& t : rep.trajectories) {
    EXPECT_EQ(t.u_final, 0.0);
    EXPECT_EQ(t.drift_cost, 0.0);
    EXPECT_FALSE(t.tau_hit);
  }
  EXPECT_EQ(rep.summaries[0].tau_never_hit_fraction, 1.0);
}

TEST(CouplingExperiment, LinearRateMatchesSlowestMode) {
  CouplingParams p;
  p.sim = small_sim(4, 1e-3, 6.0);
  p.sim.a1 = 0.0;
  p.sim.a2 = 0.0;
  p.lambdas = {5.0, 20.0};
  p.ensemble = 10;
  p.sim.record_stride = 50;
  const auto rep = run_coupling_experiment(p, RngStream(4, 0));
  for (const auto& s : rep.summaries) {
    const double expected = -2.0 * (1.0 + s.lambda);
    EXPECT_NEAR(s.median_slope / expected, 1.0, 0.05) << "lambda " << s.lambda;
  }
}

TEST(CouplingExperiment, ConditioningAndSweepMonotonicity) {
  CouplingParams p;
  p.sim = small_sim(4, 2e-3, 4.0);
  p.sim.a1 = 1.0;
  p.sim.record_stride = 25;
  p.lambdas = {5.0, 10.0, 20.0, 40.0};
  p.ensemble = 10;
  const auto rep = run_coupling_experiment(p, RngStream(6, 0));
  ASSERT_EQ(rep.summaries.size(), 4u);
  double prev = -1.0;
  for (const auto& s : rep.summaries) {
    EXPECT_GE(s.conditioned_fraction, 0.5);
    EXPECT_GE(s.negative_slope_fraction, prev) << "lambda " << s.lambda;
    prev = s.negative_slope_fraction;
  }
  // The noise is shared across lambda, so the conditioned subset is too.
  for (const auto& t : rep.trajectories) {
    const auto& s = *std::find_if(rep.summaries.begin(), rep.summaries.end(),
                                  [&](const LambdaSummary& x) { return x.lambda == t.lambda; });
    EXPECT_EQ(t.in_event, t.threshold <= s.K);
    EXPECT_EQ(t.threshold, rep.trajectories[t.id].threshold);
  }
}

TEST(CouplingExperiment, Preconditions) {
  CouplingParams p;
  p.sim = small_sim(4, 1e-2, 2.0);
  p.ensemble = 5;
  EXPECT_THROW(run_coupling_experiment(p, RngStream(1, 0)), Error);
  p.ensemble = 10;
  p.lambdas = {0.5};
  EXPECT_THROW(run_coupling_experiment(p, RngStream(1, 0)), Error);
}

TEST(Invariance, ZeroHorizonGivesZeroDistance) {
  InvarianceParams p;
  p.sim = small_sim(2, 1e-2, 1.0);
  p.horizon = 0.0;
  p.schedule = {200, 200, 5, 0.25};
  p.ensemble = 100;
  p.observables = parse_observables("wick2;lp:2;mode:1,0");
  const auto rep = run_invariance_test(p, RngStream(8, 0));
  for (const auto& r : rep.results) {
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_FALSE(r.rejected);
  }
  EXPECT_TRUE(rep.passed);
  EXPECT_THROW(([&] {
                 auto q = p;
                 q.ensemble = 50;
                 run_invariance_test(q, RngStream(8, 0));
               })(),
               Error);
}

TEST(Invariance, GaussianCaseRejectsAtNominalRate) {
  InvarianceParams p;
  p.sim = small_sim(2, 1e-2, 1.0);
  p.sim.a1 = 0.0;
  p.horizon = 0.5;
  p.schedule = {300, 300, 3, 0.25};
  p.ensemble = 100;
  p.observables = parse_observables("wick2;lp:2;mode:1,0");
  p.level = 0.05;
  p.refine = false;
  int rejected_runs = 0;
  std::vector<double> pvals;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto rep = run_invariance_test(p, RngStream(100 + seed, 0));
    rejected_runs += rep.rejections > 0;
    for (const auto& r : rep.results) pvals.push_back(r.p_value);
  }
  EXPECT_LE(rejected_runs, 3);
  const double m = stats::mean(pvals);
  EXPECT_GT(m, 0.35);
  EXPECT_LT(m, 0.65);
}

TEST(Ergodic, GaussianModeVarianceAndInitialConditionsAgree) {
  ErgodicParams p;
  p.sim = small_sim(2, 1e-2, 200.0);
  p.sim.a1 = 0.0;
  p.sim.record_stride = 10;
  p.burn_in = 5.0;
  p.observables = parse_observables("modesq:1,0;modesq:1,1");
  p.schedule = {300, 300, 3, 0.25};
  p.gibbs_samples = 2000;
  RngStream init(77, 0);
  const std::vector<FourierField> inits = {FourierField(p.sim.grid), sample_gff(p.sim.grid, init)};
  const auto rep = run_ergodic_average(p, inits, RngStream(9, 0));
  ASSERT_EQ(rep.results.size(), 2u);
  for (const auto& r : rep.results) {
    const double expected = r.name == "modesq_1_0" ? gff_mode_variance(1, 0) : gff_mode_variance(1, 1);
    for (const auto& a : r.time_averages) EXPECT_LT(std::abs(a.mean - expected), 3.0 * a.se) << r.name;
    EXPECT_LT(r.max_pair_z, 3.0);
    EXPECT_LT(r.max_gibbs_z, 3.0);
  }
}

TEST(PropertySuite, ExactCasesPassAndConstantsAreFinite) {
  const auto rep = run_property_suite(40, RngStream(10, 0));
  int exact = 0;
  for (const auto& r : rep.results) {
    if (r.exact) {
      ++exact;
      EXPECT_TRUE(r.passed()) << r.name << " " << r.value;
    } else {
      ASSERT_EQ(r.sups.size(), 2u);
      EXPECT_TRUE(std::isfinite(r.sups.back())) << r.name;
      EXPECT_GE(r.value, 1.0) << r.name;
    }
  }
  EXPECT_EQ(exact, 7);
  EXPECT_THROW(run_property_suite(1, RngStream(10, 0)), Error);
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mdsbl/experiment.hpp"

namespace mdsbl {
namespace {

using nlohmann::json;

json small_crossing() {
  return json::parse(R"({
    "schema_version": 1,
    "name": "small",
    "scenario": {"builtin": "crossing_tracks", "time_steps": [-10, 0, 10]},
    "algorithms": ["sbl", "nomp"],
    "thresholds_db": [10],
    "sweep": "t",
    "runs": 2,
    "seed": 3
  })");
}

TEST(Config, DefaultsAndRoundTrip) {
  const auto cfg = config_from_json(small_crossing());
  EXPECT_EQ(cfg.runs, 2);
  EXPECT_EQ(cfg.sensor_counts, std::vector<int>{1});
  EXPECT_EQ(cfg.scenario.time_steps, (std::vector<int>{-10, 0, 10}));
  EXPECT_NEAR(cfg.scenario.crossing.crossing_angle, 36.0 * kPi / 180.0, 1e-12);
  const json back = config_to_json(cfg);
  const auto again = config_from_json(back);
  EXPECT_EQ(config_to_json(again), back);
  EXPECT_EQ(normalize_config(back), back);
}

TEST(Config, CrossingDefaultsSpelledOut) {
  json j = small_crossing();
  j["scenario"].erase("time_steps");
  const auto n = normalize_config(j);
  EXPECT_EQ(n["scenario"]["time_steps"].size(), 11u);
  EXPECT_EQ(n["solver"]["max_outer_iters"], 50);
}

TEST(Config, ZeroRunsRejected) {
  json j = small_crossing();
  j["runs"] = 0;
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, UnknownKeyAndAllViolationsReported) {
  json j = small_crossing();
  j["bogus"] = 1;
  j["runs"] = 0;
  j["algorithms"] = json::array({"sbl", "sbl"});
  try {
    config_from_json(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bogus"), std::string::npos);
    EXPECT_NE(msg.find("runs"), std::string::npos);
    EXPECT_NE(msg.find("duplicate"), std::string::npos);
  }
}

TEST(Config, TypeErrorsRejected) {
  json j = small_crossing();
  j["runs"] = "many";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_crossing();
  j.erase("schema_version");
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_crossing();
  j["schema_version"] = 2;
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, NompNeedsSingleSensorAndTimeSweepNeedsCrossing) {
  json j = small_crossing();
  j["scenario"] = {{"builtin", "single_object"}};
  j["sensor_counts"] = {1, 2};
  EXPECT_THROW(config_from_json(j), ConfigError);
  j["algorithms"] = {"sbl"};
  EXPECT_THROW(config_from_json(j), ConfigError);  // sweep "t"
  j["sweep"] = "sensor_count";
  EXPECT_NO_THROW(config_from_json(j));
}

TEST(Config, LoadReportsParsePosition) {
  const auto path = std::filesystem::temp_directory_path() / "mdsbl_bad_config.json";
  {
    std::ofstream f(path);
    f << "{\n  \"runs\": 3,\n  oops\n}\n";
  }
  try {
    load_config(path);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(Cases, CountAndOrder) {
  auto cfg = config_from_json(small_crossing());
  cfg.nomp_thresholds_db = {8.0, 12.0};
  const auto cases = enumerate_cases(cfg);
  ASSERT_EQ(cases.size(), 3u + 6u);
  EXPECT_EQ(cases[0].algorithm, Algorithm::kSbl);
  EXPECT_EQ(cases[3].algorithm, Algorithm::kNomp);
  EXPECT_EQ(cases[3].threshold_db, 8.0);
  EXPECT_EQ(cases[8].threshold_db, 12.0);
  EXPECT_EQ(cases[2].sweep_value, 10.0);
}

TEST(Cases, MultiRadarSetup) {
  json j = small_crossing();
  j["scenario"] = {{"builtin", "four_object_pathloss"}};
  j["algorithms"] = {"sbl"};
  j["sensor_counts"] = {1, 2, 3, 4};
  j["sweep"] = "sensor_count";
  const auto cfg = config_from_json(j);
  const auto cases = enumerate_cases(cfg);
  ASSERT_EQ(cases.size(), 4u);
  const auto setup = build_case(cfg, cases[2]);
  EXPECT_EQ(setup.scenario.sensors.size(), 3u);
  EXPECT_EQ(setup.scenario.objects.size(), 4u);
  EXPECT_FALSE(setup.grid.empty());
  for (const auto& p : setup.grid) EXPECT_TRUE(setup.region.contains(p));
}

TEST(RunExperiment, RowCountsAndWorkerIndependence) {
  const auto cfg = config_from_json(small_crossing());
  const auto one = run_experiment(cfg, 1);
  const auto three = run_experiment(cfg, 3);
  ASSERT_EQ(one.rows.size(), 2u * 3u * 2u);
  EXPECT_EQ(one.wall_times.size(), one.rows.size());
  EXPECT_EQ(rows_csv(one.rows), rows_csv(three.rows));
  EXPECT_EQ(aggregate_csv(one.aggregates), aggregate_csv(three.aggregates));
  for (const auto& r : one.rows) {
    EXPECT_EQ(r.status, "ok");
    EXPECT_EQ(r.k_hat, static_cast<int>(r.components.size()));
    if (r.algorithm == "nomp")
      for (const auto& c : r.components) EXPECT_TRUE(std::isnan(c.gamma));
  }
}

TEST(RunExperiment, CommonRandomNumbersAcrossAlgorithms) {
  // Rows of the two algorithms line up case by case and run by run.
  const auto cfg = config_from_json(small_crossing());
  const auto obs_text = observations_csv(cfg);
  EXPECT_FALSE(obs_text.empty());
  const auto res = run_experiment(cfg, 2);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(res.rows[i].t, res.rows[i + 6].t);
    EXPECT_EQ(res.rows[i].run, res.rows[i + 6].run);
  }
}

TEST(Aggregate, MeansOverOkRows) {
  std::vector<ResultRow> rows(4);
  for (int i = 0; i < 4; ++i) {
    rows[static_cast<std::size_t>(i)].algorithm = "sbl";
    rows[static_cast<std::size_t>(i)].run = i;
    rows[static_cast<std::size_t>(i)].ospa = i;
    rows[static_cast<std::size_t>(i)].k_hat = 2;
    rows[static_cast<std::size_t>(i)].false_alarms = i % 2;
    rows[static_cast<std::size_t>(i)].miss = i == 0;
  }
  rows[3].status = "error: boom";
  const auto agg = aggregate(rows);
  ASSERT_EQ(agg.size(), 1u);
  EXPECT_EQ(agg[0].runs, 4);
  EXPECT_EQ(agg[0].failures, 1);
  EXPECT_NEAR(agg[0].mean_ospa, 1.0, 1e-15);
  EXPECT_NEAR(agg[0].mean_false_alarms, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(agg[0].p_miss, 1.0 / 3.0, 1e-15);
}

TEST(Csv, RowsAndAggregatesRoundTrip) {
  const auto cfg = config_from_json(small_crossing());
  const auto res = run_experiment(cfg, 2);
  const std::string text = rows_csv(res.rows);
  const auto parsed = parse_rows_csv(text);
  ASSERT_EQ(parsed.size(), res.rows.size());
  EXPECT_EQ(rows_csv(parsed), text);
  const std::string agg = aggregate_csv(res.aggregates);
  EXPECT_EQ(aggregate_csv(parse_aggregate_csv(agg)), agg);
}

TEST(Csv, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678, -0.0})
    EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(std::nan("")), "nan");
}

TEST(PlotData, Fig3SeriesLabels) {
  const auto cfg = config_from_json(small_crossing());
  const auto res = run_experiment(cfg, 2);
  const std::string plot = plot_data_csv(aggregate_csv(res.aggregates), Figure::kFig3);
  EXPECT_EQ(plot.rfind("panel,x,series,y", 0), 0u);
  EXPECT_NE(plot.find("SBL 10 dB"), std::string::npos);
  EXPECT_NE(plot.find("NOMP 10 dB"), std::string::npos);
  EXPECT_NE(plot.find("k_hat"), std::string::npos);
}

TEST(PlotData, Fig4OnePointPerThresholdAndSensorCount) {
  std::vector<AggregateRow> agg;
  for (int l = 1; l <= 4; ++l)
    for (int chi = 7; chi <= 15; ++chi) {
      AggregateRow a;
      a.algorithm = "sbl";
      a.sensor_count = l;
      a.threshold_db = chi;
      a.sweep_value = chi;
      a.runs = 10;
      agg.push_back(a);
    }
  const std::string plot = plot_data_csv(aggregate_csv(agg), Figure::kFig4);
  std::size_t lines = 0;
  for (char ch : plot) lines += ch == '\n';
  EXPECT_EQ(lines, 1u + 3u * 36u);
  EXPECT_NE(plot.find("L=4"), std::string::npos);
}

TEST(PlotData, EmptyOrMalformedInputRejected) {
  EXPECT_THROW(plot_data_csv(aggregate_csv({}), Figure::kFig4), SchemaError);
  EXPECT_THROW(plot_data_csv("a,b\n1,2\n", Figure::kFig3), SchemaError);
}

TEST(Workers, ResolutionOrder) {
  EXPECT_EQ(resolve_workers(3), 3);
  EXPECT_GE(resolve_workers(std::nullopt), 1);
}

}  // namespace
}  // namespace mdsbl

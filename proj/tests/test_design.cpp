#include <doctest.h>

#include <algorithm>
#include <random>

#include "cdid/design.hpp"

using namespace cdid;

namespace {

ObservationRecord make_record(std::string id, int group, int period, int fuel,
                              std::vector<double> covs = {}, double price = 10.0) {
  ObservationRecord r;
  r.id = std::move(id);
  r.group = group;
  r.period = period;
  r.fuel = fuel;
  r.price = price;
  r.covariates = std::move(covs);
  r.emission_standard = "euro5";
  r.vehicle_class = "compact";
  r.seller_type = "private";
  return r;
}

CovariateSpec mileage_spec(int degree) {
  CovariateSpec spec;
  spec.entries.push_back({"mileage", CovariateKind::Continuous, degree});
  return spec;
}

}  // namespace

TEST_CASE("polynomial expansion without scaling") {
  std::vector<ObservationRecord> recs = {make_record("a", 1, 0, 1, {2.0})};
  const DesignMatrix dm = apply_covariate_spec(recs, mileage_spec(3), /*standardize=*/false);
  REQUIRE(dm.cols() == 3);
  CHECK(dm.values(0, 0) == 2.0);
  CHECK(dm.values(0, 1) == 4.0);
  CHECK(dm.values(0, 2) == 8.0);
  CHECK(dm.names == std::vector<std::string>{"mileage", "mileage^2", "mileage^3"});
}

TEST_CASE("binary dummy passes through untouched") {
  CovariateSpec spec;
  spec.entries.push_back({"warranty", CovariateKind::Binary, 1});
  std::vector<ObservationRecord> recs = {make_record("a", 1, 0, 1, {1.0}),
                                         make_record("b", 1, 0, 1, {0.0})};
  const DesignMatrix dm = apply_covariate_spec(recs, spec, /*standardize=*/true);
  CHECK(dm.values(0, 0) == 1.0);
  CHECK(dm.values(1, 0) == 0.0);
}

TEST_CASE("standardization uses the n-1 sample sd") {
  // {1,2,3}: mean 2, sample sd exactly 1, so the column becomes {-1, 0, 1}.
  std::vector<ObservationRecord> recs = {make_record("a", 1, 0, 1, {1.0}),
                                         make_record("b", 1, 0, 1, {2.0}),
                                         make_record("c", 1, 0, 1, {3.0})};
  const DesignMatrix dm = apply_covariate_spec(recs, mileage_spec(1));
  CHECK(dm.values(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(dm.values(1, 0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(dm.values(2, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("design matrix is deterministic") {
  std::vector<ObservationRecord> recs;
  std::mt19937_64 gen(7);
  for (int i = 0; i < 50; ++i)
    recs.push_back(make_record("r" + std::to_string(i), static_cast<int>(i % 2), 0, 1,
                               {static_cast<double>(gen() % 1000) / 10.0}));
  const DesignMatrix a = apply_covariate_spec(recs, mileage_spec(4));
  const DesignMatrix b = apply_covariate_spec(recs, mileage_spec(4));
  CHECK(a.values == b.values);
}

TEST_CASE("missing covariate field raises a schema error naming the record") {
  std::vector<ObservationRecord> recs = {make_record("bad-record", 1, 0, 1, {})};
  try {
    apply_covariate_spec(recs, mileage_spec(1));
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("bad-record") != std::string::npos);
  }
}

TEST_CASE("non-finite covariate raises a validation error naming the field") {
  std::vector<ObservationRecord> recs = {
      make_record("r1", 1, 0, 1, {std::numeric_limits<double>::quiet_NaN()})};
  try {
    apply_covariate_spec(recs, mileage_spec(1));
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("mileage") != std::string::npos);
    CHECK(msg.find("r1") != std::string::npos);
  }
}

TEST_CASE("partition: one record per cell") {
  std::vector<ObservationRecord> recs = {make_record("a", 1, 3, 1), make_record("b", 1, 0, 0),
                                         make_record("c", 0, 3, 1), make_record("d", 0, 0, 0)};
  EstimandRequest req;
  req.post_period = 3;
  const CellPartition part = partition_cells(recs, req, {});
  CHECK(part.treated_post == std::vector<int>{0});
  CHECK(part.treated_pre == std::vector<int>{1});
  CHECK(part.control_post == std::vector<int>{2});
  CHECK(part.control_pre == std::vector<int>{3});
}

TEST_CASE("partition ignores periods outside {0, s} and sums to the filtered size") {
  std::vector<ObservationRecord> recs;
  for (int t = 0; t < 8; ++t) {
    recs.push_back(make_record("g1t" + std::to_string(t), 1, t, 1));
    recs.push_back(make_record("g0t" + std::to_string(t), 0, t, 0));
  }
  EstimandRequest req;
  req.post_period = 3;
  const CellPartition part = partition_cells(recs, req, {});
  CHECK(part.total() == 4);  // periods 0 and 3 only, one record per group each
}

TEST_CASE("asking-price requests keep only diesel records") {
  std::vector<ObservationRecord> recs = {make_record("a", 1, 1, 1), make_record("a2", 1, 1, 0),
                                         make_record("b", 1, 0, 1), make_record("c", 0, 1, 1),
                                         make_record("d", 0, 0, 1)};
  EstimandRequest req;
  req.outcome = Outcome::AskingPrice;
  req.post_period = 1;
  const CellPartition part = partition_cells(recs, req, {});
  CHECK(part.treated_post == std::vector<int>{0});  // the gasoline record is gone
}

TEST_CASE("empty cell names the offending cell") {
  std::vector<ObservationRecord> recs = {make_record("a", 1, 1, 1), make_record("b", 1, 0, 1),
                                         make_record("c", 0, 1, 1)};
  EstimandRequest req;
  req.post_period = 1;
  try {
    partition_cells(recs, req, {});
    FAIL("expected EstimandError");
  } catch (const EstimandError& e) {
    CHECK(std::string(e.what()).find("G=0,T=0") != std::string::npos);
  }
}

TEST_CASE("non-German control definition drops configured makes from G=0") {
  std::vector<ObservationRecord> recs = {make_record("a", 1, 1, 1), make_record("b", 1, 0, 1),
                                         make_record("c", 0, 1, 1), make_record("d", 0, 1, 1),
                                         make_record("e", 0, 0, 1)};
  recs[2].make = "bmw";
  recs[3].make = "toyota";
  recs[4].make = "fiat";
  EstimandRequest req;
  req.post_period = 1;
  req.control = ControlDefinition::NonGermanMakes;
  const std::vector<std::string> german = {"mercedes", "bmw", "opel", "ford"};
  const CellPartition part = partition_cells(recs, req, german);
  CHECK(part.control_post == std::vector<int>{3});
}

TEST_CASE("partition is invariant to record order") {
  std::vector<ObservationRecord> recs;
  std::mt19937_64 gen(11);
  for (int i = 0; i < 60; ++i)
    recs.push_back(make_record("id" + std::to_string(i), static_cast<int>(gen() % 2),
                               (gen() % 2) ? 2 : 0, static_cast<int>(gen() % 2)));
  EstimandRequest req;
  req.post_period = 2;
  const CellPartition base = partition_cells(recs, req, {});

  std::vector<ObservationRecord> shuffled = recs;
  std::shuffle(shuffled.begin(), shuffled.end(), gen);
  const CellPartition perm = partition_cells(shuffled, req, {});

  const auto ids = [](const std::vector<ObservationRecord>& rs, const std::vector<int>& cell) {
    std::vector<std::string> out;
    for (const int r : cell) out.push_back(rs[static_cast<std::size_t>(r)].id);
    return out;
  };
  CHECK(ids(recs, base.treated_post) == ids(shuffled, perm.treated_post));
  CHECK(ids(recs, base.control_pre) == ids(shuffled, perm.control_pre));
}

TEST_CASE("subgroup filter keeps only the requested category") {
  std::vector<ObservationRecord> recs = {make_record("a", 1, 1, 1), make_record("b", 1, 0, 1),
                                         make_record("c", 0, 1, 1), make_record("d", 0, 0, 1),
                                         make_record("e", 1, 1, 0)};
  recs[4].emission_standard = "euro6";
  EstimandRequest req;
  req.post_period = 1;
  req.subgroup_filter = SubgroupFilter{"emission_standard", "euro5"};
  const CellPartition part = partition_cells(recs, req, {});
  CHECK(part.total() == 4);
}

TEST_CASE("period bucketing from first-online offsets") {
  CHECK(period_from_offset(-1) == 0);
  CHECK(period_from_offset(-30) == 0);
  CHECK(!period_from_offset(-31).has_value());
  CHECK(period_from_offset(0) == 1);
  CHECK(period_from_offset(29) == 1);
  CHECK(period_from_offset(30) == 2);
  CHECK(period_from_offset(209) == 7);
  CHECK(!period_from_offset(210).has_value());
}

TEST_CASE("record validation catches the documented invariants") {
  CovariateSpec spec = mileage_spec(1);
  ObservationRecord ok = make_record("x", 1, 0, 1, {5.0});
  CHECK_NOTHROW(validate_record(ok, spec));

  ObservationRecord bad = ok;
  bad.period = 9;
  CHECK_THROWS_AS(validate_record(bad, spec), ValidationError);
  bad = ok;
  bad.price = -1.0;
  CHECK_THROWS_AS(validate_record(bad, spec), ValidationError);
  bad = ok;
  bad.fuel = 2;
  CHECK_THROWS_AS(validate_record(bad, spec), ValidationError);
  bad = ok;
  bad.covariates = {1.0, 2.0};
  CHECK_THROWS_AS(validate_record(bad, spec), ValidationError);
}

#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "survmed/core_data.hpp"
#include "survmed/dataset_io.hpp"

using namespace survmed;

TEST(Validate, ToyCohortIsClean) {
  auto data = fixtures::toy_dataset();
  ASSERT_EQ(data.subjects.size(), 3u);
  EXPECT_TRUE(validate(data).empty());
}

TEST(Validate, MeasurementAfterEvent) {
  auto data = fixtures::toy_dataset();
  data.subjects[0].mediator[1] = 2;  // follow-up 1.5 < t_2
  auto f = validate(data);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].subject_id, "1");
  EXPECT_EQ(f[0].field, "m2");
  EXPECT_EQ(f[0].rule, "measurement after event");
}

TEST(Validate, EmptyDataset) {
  Dataset d;
  d.schedule = VisitSchedule({1.0});
  EXPECT_TRUE(validate(d).empty());
}

TEST(Validate, MissingWhileAtRisk) {
  auto data = fixtures::toy_dataset();
  data.subjects[2].confounders[0][0].reset();
  auto f = validate(data);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].field, "l_1");
  EXPECT_EQ(f[0].rule, "missing while at risk");
}

TEST(Validate, CardinalitiesAndDuplicates) {
  auto data = fixtures::toy_dataset();
  data.subjects[1].exposure = 2;
  data.subjects[2].mediator[0] = 4;
  data.subjects.push_back(data.subjects[0]);
  auto f = validate(data);
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[0].rule, "exposure out of range");
  EXPECT_EQ(f[1].rule, "mediator level out of range");
  EXPECT_EQ(f[2].rule, "duplicate id");
}

TEST(Validate, IsPure) {
  auto data = fixtures::toy_dataset();
  data.subjects[0].mediator[1] = 1;
  data.subjects[1].followup_time = -1.0;
  const auto first = validate(data);
  const auto second = validate(data);
  EXPECT_EQ(first, second);
  EXPECT_FALSE(first.empty());
}

TEST(VisitSchedule, RejectsBadTimes) {
  EXPECT_THROW(VisitSchedule(std::vector<double>{}), Error);
  EXPECT_THROW(VisitSchedule({1.0, 1.0}), Error);
  EXPECT_THROW(VisitSchedule({0.0, 1.0}), Error);
}

TEST(CsvFormat, RoundTrip) {
  auto data = fixtures::toy_dataset();
  std::ostringstream out;
  write_dataset_csv(out, data, fixtures::toy_roles());
  EXPECT_EQ(out.str(), fixtures::kToyCsv);

  // Column order is free on input.
  std::istringstream shuffled(
      "l_2,a,id,m2,time,l_1,status,m1,l_0\n"
      ",1,1,,1.5,111,1,1,101\n"
      ",0,2,,0.9,,2,,102\n"
      "123,1,3,3,3,113,0,2,103\n");
  auto again = read_dataset_csv(shuffled, fixtures::toy_roles(), VisitSchedule({1.0, 2.0}),
                                make_variable_spec(fixtures::toy_roles(), 2, 4));
  std::ostringstream out2;
  write_dataset_csv(out2, again, fixtures::toy_roles());
  EXPECT_EQ(out2.str(), fixtures::kToyCsv);
}

TEST(CsvFormat, FloatsRoundTripExactly) {
  auto data = fixtures::toy_dataset();
  data.subjects[2].followup_time = 0.1 + 0.2;
  data.subjects[2].confounders[0][0] = 1.0 / 3.0;
  std::ostringstream out;
  write_dataset_csv(out, data, fixtures::toy_roles());
  std::istringstream in(out.str());
  auto back = read_dataset_csv(in, fixtures::toy_roles(), data.schedule, data.variables);
  EXPECT_EQ(back.subjects[2].followup_time, 0.1 + 0.2);
  EXPECT_EQ(*back.subjects[2].confounders[0][0], 1.0 / 3.0);
}

TEST(CsvFormat, Errors) {
  const auto roles = fixtures::toy_roles();
  const auto vars = make_variable_spec(roles, 2, 4);
  std::istringstream missing_col("id,time,status,a,m1,l_0,l_1,l_2\n");
  EXPECT_THROW(read_dataset_csv(missing_col, roles, VisitSchedule({1.0, 2.0}), vars), Error);
  std::istringstream bad_status("id,time,status,a,m1,m2,l_0,l_1,l_2\n1,1,7,0,,,0,,\n");
  EXPECT_THROW(read_dataset_csv(bad_status, roles, VisitSchedule({1.0, 2.0}), vars), Error);
  std::istringstream bad_number("id,time,status,a,m1,m2,l_0,l_1,l_2\n1,x,0,0,,,0,,\n");
  EXPECT_THROW(read_dataset_csv(bad_number, roles, VisitSchedule({1.0, 2.0}), vars), Error);
}

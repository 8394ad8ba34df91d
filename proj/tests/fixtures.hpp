#ifndef SURVMED_TESTS_FIXTURES_HPP
#define SURVMED_TESTS_FIXTURES_HPP

#include <sstream>
#include <string>

#include "survmed/core_data.hpp"
#include "survmed/dataset_io.hpp"

namespace fixtures {

// The three-subject toy cohort with symbolic cells coded as numbers:
// m11 = 1, m13 = 2, m23 = 3 (four mediator levels) and l_ij = 100 + 10 i + j.
inline const char* kToyCsv =
    "id,time,status,a,m1,m2,l_0,l_1,l_2\n"
    "1,1.5,1,1,1,,101,111,\n"
    "2,0.9,2,0,,,102,,\n"
    "3,3,0,1,2,3,103,113,123\n";

// Counting-process layout; subject 1's second row carries L_1 = l11.
inline const char* kToyLong =
    "Individual,Start,Stop,Status,A,M_t,M_t-1,l_t,l_t-1,l_0\n"
    "1,0,1,0,1,0,0,0,0,101\n"
    "1,1,1.5,1,1,1,0,111,0,101\n"
    "2,0,0.9,2,0,0,0,0,0,102\n"
    "3,0,1,0,1,0,0,0,0,103\n"
    "3,1,2,0,1,2,0,113,0,103\n"
    "3,2,3,0,1,3,2,123,113,103\n";

inline const char* kToyExpanded =
    "Individual,Start,Stop,Status,A,Astar,M_t,M_t-1,l_t,l_t-1,l_0\n"
    "1,0,1,0,1,1,0,0,0,0,101\n"
    "1,1,1.5,1,1,1,1,0,111,0,101\n"
    "2,0,0.9,2,0,0,0,0,0,0,102\n"
    "3,0,1,0,1,1,0,0,0,0,103\n"
    "3,1,2,0,1,1,2,0,113,0,103\n"
    "3,2,3,0,1,1,3,2,123,113,103\n"
    "1,0,1,0,1,0,0,0,0,0,101\n"
    "1,1,1.5,1,1,0,1,0,111,0,101\n"
    "2,0,0.9,2,0,1,0,0,0,0,102\n"
    "3,0,1,0,1,0,0,0,0,0,103\n"
    "3,1,2,0,1,0,2,0,113,0,103\n"
    "3,2,3,0,1,0,3,2,123,113,103\n";

inline survmed::ColumnRoles toy_roles() {
  survmed::ColumnRoles r;
  r.confounders = {"l"};
  return r;
}

inline survmed::Dataset toy_dataset() {
  std::istringstream in(kToyCsv);
  const auto roles = toy_roles();
  return survmed::read_dataset_csv(in, roles, survmed::VisitSchedule({1.0, 2.0}),
                                   survmed::make_variable_spec(roles, 2, 4));
}

}  // namespace fixtures

#endif  // SURVMED_TESTS_FIXTURES_HPP

#include <gtest/gtest.h>

#include <numeric>

#include "jsb/numeric.hpp"

TEST(Numeric, PairwiseSumExactOnIntegers) {
  jsb::Vector x(1000);
  std::iota(x.begin(), x.end(), 1.0);
  EXPECT_EQ(jsb::pairwise_sum(x), 500500.0);
  EXPECT_EQ(jsb::mean(x), 500.5);
}

TEST(Numeric, ShiftedMeanExactForEqualValues) {
  const jsb::Vector x(37, 0.1);
  EXPECT_EQ(jsb::shifted_mean(x), 0.1);
}

TEST(Numeric, SampleVariance) {
  const jsb::Vector x{1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(jsb::sample_variance(x), 5.0 / 3.0);
  EXPECT_EQ(jsb::sample_variance(jsb::Vector{2.0}), 0.0);
}

TEST(Numeric, NormAndDot) {
  const jsb::Vector a{3.0, 4.0}, b{1.0, -1.0};
  EXPECT_EQ(jsb::squared_norm(a), 25.0);
  EXPECT_EQ(jsb::dot(a, b), -1.0);
}

TEST(Numeric, GridFromRowsRejectsRagged) {
  EXPECT_THROW(jsb::Matrix::from_rows({{1.0, 2.0}, {3.0}}), jsb::ShapeError);
  const auto g = jsb::Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  EXPECT_EQ(g(1, 0), 3.0);
  EXPECT_EQ(g.row(0)[1], 2.0);
}

TEST(Numeric, PairwiseReduceOrderIsFixed) {
  const std::vector<int> items{1, 2, 3, 4, 5};
  std::string trace;
  const int total = jsb::pairwise_reduce<int>(items, [&](int a, int b) {
    trace += std::to_string(a) + "+" + std::to_string(b) + ";";
    return a + b;
  });
  EXPECT_EQ(total, 15);
  EXPECT_EQ(trace, "1+2;4+5;3+9;3+12;");
}

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "snn/tensor/ops.hpp"

using namespace snn;
using snn::testing::GradCase;
using snn::testing::random_const;
using snn::testing::random_param;

TEST(Backward, LinearMapGradientIsInput) {
    Rng rng(1);
    Value w = random_param(Shape{3, 4}, rng);
    const Value x = random_const(Shape{3, 4}, rng);
    backward(ops::sum(ops::mul(w, x)));
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(w.grad()[i], x.at(i));
}

TEST(Backward, FanOutSums) {
    Value w = Value::parameter(Shape{1}, std::vector<double>{3.0});
    const Value y = ops::add(ops::mul(w, w), ops::scale(w, 2.0));  // w^2 + 2w
    backward(ops::sum(y));
    EXPECT_DOUBLE_EQ(w.grad()[0], 8.0);
}

TEST(Backward, DisconnectedParameterGetsZero) {
    Value a = Value::parameter(Shape{2}, std::vector<double>{1, 2});
    Value b = Value::parameter(Shape{2}, std::vector<double>{3, 4});
    backward(ops::sum(ops::square(a)));
    EXPECT_FALSE(b.has_grad());
    for (double g : b.grad()) EXPECT_EQ(g, 0.0);
    EXPECT_EQ(b.grad().size(), 2u);
}

TEST(Backward, EveryParameterGetsGradientOfItsShape) {
    Rng rng(2);
    Value x = random_param(Shape{2, 3, 4, 4}, rng);
    Value k = random_param(Shape{5, 3, 3, 3}, rng);
    Value w = random_param(Shape{2, 5}, rng);
    const Value f = ops::reshape(ops::avg_pool_global(ops::conv2d(x, k, Value(), 1, 1)), Shape{2, 5});
    backward(ops::sum(ops::affine(f, w, Value())));
    EXPECT_EQ(x.grad().size(), x.numel());
    EXPECT_EQ(k.grad().size(), k.numel());
    EXPECT_EQ(w.grad().size(), w.numel());
}

TEST(Backward, NonScalarRejected) {
    Value w = Value::parameter(Shape{2}, std::vector<double>{1, 2});
    EXPECT_THROW(backward(ops::square(w)), std::exception);
}

TEST(Backward, SecondCallRejected) {
    Value w = Value::parameter(Shape{2}, std::vector<double>{1, 2});
    const Value loss = ops::sum(ops::square(w));
    backward(loss);
    EXPECT_THROW(backward(loss), std::exception);
}

TEST(Backward, AccumulatesAcrossGraphsUntilZeroed) {
    Value w = Value::parameter(Shape{1}, std::vector<double>{2.0});
    backward(ops::sum(ops::scale(w, 3.0)));
    backward(ops::sum(ops::scale(w, 3.0)));
    EXPECT_DOUBLE_EQ(w.grad()[0], 6.0);
    w.zero_grad();
    EXPECT_DOUBLE_EQ(w.grad()[0], 0.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
    Value w = Value::parameter(Shape{2}, std::vector<double>{1, 2});
    Value y;
    {
        NoGradGuard g;
        EXPECT_FALSE(grad_enabled());
        y = ops::square(w);
    }
    EXPECT_TRUE(grad_enabled());
    EXPECT_TRUE(y.node().parents.empty());
    EXPECT_FALSE(y.requires_grad());
}

TEST(Backward, DetachCutsFlow) {
    Value w = Value::parameter(Shape{1}, std::vector<double>{2.0});
    backward(ops::sum(ops::mul(w, ops::detach(w))));
    EXPECT_DOUBLE_EQ(w.grad()[0], 2.0);
}

TEST(Graph, CreationOrderIsTopological) {
    Value w = Value::parameter(Shape{2}, std::vector<double>{1, 2});
    const Value a = ops::square(w);
    const Value b = ops::exp(a);
    const Value c = ops::add(a, b);
    EXPECT_LT(a.node().seq, b.node().seq);
    EXPECT_LT(b.node().seq, c.node().seq);
    for (const auto& p : c.node().parents) EXPECT_LT(p->seq, c.node().seq);
}

class GradientOracle : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientOracle, CentralDifferencesAgree) {
    const GradCase c = snn::testing::gradient_cases().at(GetParam());
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto r = c.run(seed);
        EXPECT_EQ(r.probes, 20u);
        EXPECT_TRUE(r.ok(1e-4)) << c.name << " seed " << seed << ": " << r.worst << " at " << r.where;
    }
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradientOracle,
                         ::testing::Range<std::size_t>(0, snn::testing::gradient_cases().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                             return snn::testing::gradient_cases().at(info.param).name;
                         });

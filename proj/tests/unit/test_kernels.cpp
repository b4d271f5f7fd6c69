#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "snn/core/rng.hpp"
#include "snn/kernels/kernels.hpp"
#include "snn/neuron/lif.hpp"
#include "snn/tensor/ops.hpp"

using namespace snn;
using snn::kernels::KernelTable;

namespace {

std::vector<double> draw(std::size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

class KernelEquivalence : public ::testing::Test {
protected:
    void SetUp() override {
        simd_ = kernels::avx2_table();
        if (!simd_) GTEST_SKIP() << "AVX2 variant unavailable on this host";
    }
    const KernelTable& ref_ = kernels::scalar_table();
    const KernelTable* simd_ = nullptr;
};

const std::size_t kSizes[] = {0, 1, 3, 4, 5, 7, 8, 15, 16, 17, 33, 100, 257};

}  // namespace

TEST_F(KernelEquivalence, Gemm) {
    Rng rng(1);
    for (int rep = 0; rep < 60; ++rep) {
        const std::size_t m = 1 + rng.below(13), n = 1 + rng.below(21), k = 1 + rng.below(300);
        const std::size_t lda = k + rng.below(3), ldb = n + rng.below(3), ldc = n + rng.below(3);
        const auto a = draw(m * lda, rng), b = draw(k * ldb, rng), c0 = draw(m * ldc, rng);
        auto c1 = c0, c2 = c0;
        ref_.gemm(m, n, k, a.data(), lda, b.data(), ldb, c1.data(), ldc);
        simd_->gemm(m, n, k, a.data(), lda, b.data(), ldb, c2.data(), ldc);
        ASSERT_TRUE(bitwise_equal(c1, c2)) << "m=" << m << " n=" << n << " k=" << k;
    }
}

TEST_F(KernelEquivalence, Elementwise) {
    Rng rng(2);
    for (std::size_t n : kSizes) {
        const auto x = draw(n, rng), y = draw(n, rng), o0 = draw(n, rng);
        const double alpha = rng.uniform(-3, 3);
        auto r = o0, s = o0;
        ref_.axpy(n, alpha, x.data(), r.data());
        simd_->axpy(n, alpha, x.data(), s.data());
        EXPECT_TRUE(bitwise_equal(r, s)) << "axpy " << n;
        ref_.add(n, x.data(), y.data(), r.data());
        simd_->add(n, x.data(), y.data(), s.data());
        EXPECT_TRUE(bitwise_equal(r, s)) << "add " << n;
        ref_.mul(n, x.data(), y.data(), r.data());
        simd_->mul(n, x.data(), y.data(), s.data());
        EXPECT_TRUE(bitwise_equal(r, s)) << "mul " << n;
        r = o0, s = o0;
        ref_.mul_acc(n, x.data(), y.data(), r.data());
        simd_->mul_acc(n, x.data(), y.data(), s.data());
        EXPECT_TRUE(bitwise_equal(r, s)) << "mul_acc " << n;
        ref_.scale(n, alpha, x.data(), r.data());
        simd_->scale(n, alpha, x.data(), s.data());
        EXPECT_TRUE(bitwise_equal(r, s)) << "scale " << n;
        ref_.relu(n, x.data(), r.data());
        simd_->relu(n, x.data(), s.data());
        EXPECT_TRUE(bitwise_equal(r, s)) << "relu " << n;
        r = o0, s = o0;
        ref_.relu_backward(n, x.data(), y.data(), r.data());
        simd_->relu_backward(n, x.data(), y.data(), s.data());
        EXPECT_TRUE(bitwise_equal(r, s)) << "relu_backward " << n;
    }
}

TEST_F(KernelEquivalence, LifStep) {
    Rng rng(3);
    const kernels::LifConstants c{0.5, 0.0, 1.0};
    for (std::size_t n : kSizes) {
        const auto h = draw(n, rng, 0.0, 1.0), in = draw(n, rng, -1.0, 3.0);
        std::vector<double> u1(n), s1(n), h1(n), u2(n), s2(n), h2(n);
        ref_.lif_step(n, h.data(), in.data(), c, u1.data(), s1.data(), h1.data());
        simd_->lif_step(n, h.data(), in.data(), c, u2.data(), s2.data(), h2.data());
        EXPECT_TRUE(bitwise_equal(u1, u2) && bitwise_equal(s1, s2) && bitwise_equal(h1, h2)) << n;
    }
}

TEST_F(KernelEquivalence, WholeOpsAgreeAcrossIsas) {
    auto run = [] {
        Rng rng(4);
        Value x = Value::parameter(Shape{2, 3, 3, 9, 9}, draw(2 * 3 * 3 * 81, rng));
        Value k = Value::parameter(Shape{5, 3, 3, 3}, draw(135, rng));
        const Value y = neuron::lif_sequence(ops::conv2d(x, k, Value(), 1, 1), neuron::NeuronConfig{}, 1);
        Value w = Value::parameter(Shape{4, 5}, draw(20, rng));
        const Value z = ops::affine(ops::permute(ops::conv2d(x, k, Value(), 2, 1), {0, 1, 3, 4, 2}), w, Value());
        backward(ops::add(ops::sum(y), ops::sum(ops::square(z))));
        std::vector<double> out(y.data().begin(), y.data().end());
        out.insert(out.end(), z.data().begin(), z.data().end());
        out.insert(out.end(), x.grad().begin(), x.grad().end());
        out.insert(out.end(), k.grad().begin(), k.grad().end());
        out.insert(out.end(), w.grad().begin(), w.grad().end());
        return out;
    };
    ASSERT_TRUE(kernels::select(kernels::Isa::Scalar));
    const auto a = run();
    ASSERT_TRUE(kernels::select(kernels::Isa::Avx2));
    const auto b = run();
    EXPECT_TRUE(bitwise_equal(a, b));
}

TEST(KernelDispatch, ParseAndSelect) {
    kernels::Isa isa;
    EXPECT_TRUE(kernels::parse_isa("scalar", isa));
    EXPECT_EQ(isa, kernels::Isa::Scalar);
    EXPECT_TRUE(kernels::parse_isa("avx2", isa));
    EXPECT_EQ(isa, kernels::Isa::Avx2);
    EXPECT_FALSE(kernels::parse_isa("neon", isa));
    EXPECT_TRUE(kernels::select(kernels::Isa::Scalar));
    EXPECT_EQ(kernels::active().isa, kernels::Isa::Scalar);
    EXPECT_EQ(kernels::select(kernels::Isa::Avx2), kernels::avx2_table() != nullptr);
}

TEST(KernelScalar, GemmMatchesNaiveFmaOrder) {
    Rng rng(5);
    const std::size_t m = 3, n = 5, k = 7;
    const auto a = draw(m * k, rng), b = draw(k * n, rng);
    std::vector<double> c(m * n, 0.0), want(m * n, 0.0);
    kernels::scalar_table().gemm(m, n, k, a.data(), k, b.data(), n, c.data(), n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) want[i * n + j] = std::fma(a[i * k + p], b[p * n + j], want[i * n + j]);
    EXPECT_TRUE(bitwise_equal(c, want));
}

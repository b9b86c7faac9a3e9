#include <cmath>

#include <gtest/gtest.h>

#include "dst/flops.hpp"
#include "dst/gradcheck.hpp"
#include "dst/ops.hpp"
#include "test_util.hpp"

using namespace dst;
using dst::testing::bitwise_equal;
using dst::testing::near_all;
using dst::testing::random_tensor;

namespace {

// Scalar probe: sum(t * r) with a fixed random r, so every output element
// carries a distinct upstream gradient.
Tensor probe(const Tensor& t, std::uint64_t seed = 99) {
    Rng rng(seed);
    return sum(mul(t, random_tensor(rng, t.shape())));
}

Tensor away_from_zero(Rng& rng, Shape shape) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) {
        const double mag = rng.uniform(0.2, 1.0);
        x = rng.uniform() < 0.5 ? -mag : mag;
    }
    return Tensor::from(std::move(shape), std::move(v), true);
}

constexpr double kTol = 1e-4;

}  // namespace

// ==================== matmul ====================

TEST(Matmul, IdentityTimesMatrixIsBitwiseTheMatrix) {
    Rng rng(1);
    const Tensor m = random_tensor(rng, {2, 2});
    EXPECT_TRUE(bitwise_equal(matmul(Tensor::identity(2), m), m));
    const Tensor x = random_tensor(rng, {7, 5});
    EXPECT_TRUE(bitwise_equal(matmul(Tensor::identity(7), x), x));
}

TEST(Matmul, HandArithmetic) {
    const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    const Tensor b = Tensor::from({2, 1}, {5, 6});
    const Tensor c = matmul(a, b);
    EXPECT_EQ(c.shape(), (Shape{2, 1}));
    EXPECT_TRUE(near_all(c, {17, 39}, 0.0));
}

TEST(Matmul, ZeroAnnihilates) {
    Rng rng(2);
    const Tensor c = matmul(Tensor::zeros({3, 4}), random_tensor(rng, {4, 5}));
    for (double v : c.data()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Matmul, ShapeMismatchThrows) {
    EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST(Matmul, OverflowIsANumericError) {
    const Tensor big = Tensor::from({1, 1}, {1e200});
    EXPECT_THROW(matmul(big, big), NumericError);
}

TEST(Matmul, NonFiniteInputRejected) {
    EXPECT_THROW(Tensor::from({1}, {std::nan("")}), NumericError);
    EXPECT_THROW(Tensor::from({1}, {INFINITY}), NumericError);
}

TEST(Matmul, RepeatedRunsAreBitwiseIdentical) {
    Rng rng(3);
    const Tensor a = random_tensor(rng, {37, 53});
    const Tensor b = random_tensor(rng, {53, 29});
    EXPECT_TRUE(bitwise_equal(matmul(a, b), matmul(a, b)));
}

TEST(Matmul, TiledKernelMatchesNaiveLeftToRightSum) {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.below(40);
        const std::size_t k = 1 + rng.below(70);
        const std::size_t n = 1 + rng.below(40);
        const Tensor a = random_tensor(rng, {m, k});
        const Tensor b = random_tensor(rng, {k, n});
        std::vector<double> ref(m * n);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t t = 0; t < k; ++t) {
                    acc += a.at(i, t) * b.at(t, j);
                }
                ref[i * n + j] = acc;
            }
        }
        EXPECT_TRUE(bitwise_equal(matmul(a, b), Tensor::from({m, n}, ref))) << m << "x" << k << "x" << n;
    }
}

TEST(Matmul, RecordsTwoFlopsPerMultiplyAccumulate) {
    FlopTally tally;
    {
        FlopRecorder rec(tally);
        matmul(Tensor::zeros({8, 64}), Tensor::zeros({64, 64}));
    }
    EXPECT_EQ(tally.total(), 65536u);
}

// ==================== softmax ====================

TEST(Softmax, Examples) {
    EXPECT_TRUE(near_all(softmax_rows(Tensor::from({1, 2}, {0, 0})), {0.5, 0.5}, 1e-15));
    EXPECT_TRUE(near_all(softmax_rows(Tensor::from({1, 1}, {42})), {1.0}, 0.0));
    EXPECT_TRUE(near_all(softmax_rows(Tensor::from({1, 2}, {std::log(1.0), std::log(3.0)})), {0.25, 0.75}, 1e-15));
}

TEST(Softmax, LargeLogitsStayFinite) {
    EXPECT_TRUE(near_all(softmax_rows(Tensor::from({1, 2}, {1000, 1000})), {0.5, 0.5}, 1e-15));
}

TEST(Softmax, RowsSumToOneAndIgnoreRowShifts) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t rows = 1 + rng.below(6);
        const std::size_t cols = 1 + rng.below(12);
        const Tensor x = random_tensor(rng, {rows, cols}, 20.0);
        std::vector<double> shifted(x.data().begin(), x.data().end());
        for (std::size_t r = 0; r < rows; ++r) {
            const double c = rng.uniform(-50, 50);
            for (std::size_t j = 0; j < cols; ++j) {
                shifted[r * cols + j] += c;
            }
        }
        const Tensor p = softmax_rows(x);
        const Tensor q = softmax_rows(Tensor::from({rows, cols}, shifted));
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                s += p.at(r, j);
                EXPECT_NEAR(p.at(r, j), q.at(r, j), 1e-12);
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

// ==================== relu ====================

TEST(Relu, Examples) {
    EXPECT_TRUE(near_all(relu(Tensor::from({3}, {-1, 0, 2})), {0, 0, 2}, 0.0));
    EXPECT_TRUE(near_all(relu(Tensor::from({3}, {-1, -2, -3})), {0, 0, 0}, 0.0));
}

TEST(Relu, SubgradientMask) {
    Tensor x = Tensor::from({2}, {-1, 2}, true);
    sum(relu(x)).backward();
    EXPECT_TRUE(near_all(Tensor::from({2}, std::vector<double>(x.grad().begin(), x.grad().end())), {0, 1}, 0.0));
}

TEST(Relu, GradientAtExactlyZeroIsZero) {
    Tensor x = Tensor::from({1}, {0.0}, true);
    sum(relu(x)).backward();
    EXPECT_EQ(x.grad()[0], 0.0);
}

// ==================== finite_diff_check ====================

TEST(FiniteDiff, SumOfSquares) {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    const GradCheckResult r = finite_diff_check([&] { return sum_squares(x); }, x);
    EXPECT_LT(r.max_rel_error, 1e-8);
    sum_squares(x).backward();
    EXPECT_TRUE(near_all(Tensor::from({2}, std::vector<double>(x.grad().begin(), x.grad().end())), {2, 4}, 0.0));
}

TEST(FiniteDiff, ConstantFunctionHasZeroError) {
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    const GradCheckResult r = finite_diff_check([&] { return sum(scale(x, 0.0)); }, x);
    EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(FiniteDiff, RestoresInput) {
    Rng rng(6);
    Tensor x = random_tensor(rng, {3, 4}, 1.0, true);
    const std::vector<double> before(x.data().begin(), x.data().end());
    finite_diff_check([&] { return probe(softmax_rows(x)); }, x);
    EXPECT_TRUE(near_all(x, before, 0.0));
}

// Every backward rule against central differences.
TEST(FiniteDiff, EveryBackwardRule) {
    Rng rng(7);
    auto check = [](const char* name, const std::function<Tensor()>& f, Tensor& x) {
        const GradCheckResult r = finite_diff_check(f, x, 1e-4);
        EXPECT_LT(r.max_rel_error, kTol) << name << " worst index " << r.worst_index;
    };

    Tensor a = random_tensor(rng, {4, 5}, 1.0, true);
    Tensor b = random_tensor(rng, {5, 3}, 1.0, true);
    Tensor bt = random_tensor(rng, {3, 5}, 1.0, true);
    check("matmul.a", [&] { return probe(matmul(a, b)); }, a);
    check("matmul.b", [&] { return probe(matmul(a, b)); }, b);
    check("matmul_nt.a", [&] { return probe(matmul_nt(a, bt)); }, a);
    check("matmul_nt.b", [&] { return probe(matmul_nt(a, bt)); }, bt);

    Tensor y = random_tensor(rng, {4, 5}, 1.0, true);
    Tensor bias = random_tensor(rng, {5}, 1.0, true);
    check("add", [&] { return probe(add(a, y)); }, y);
    check("add_bias.x", [&] { return probe(add_bias(a, bias)); }, a);
    check("add_bias.b", [&] { return probe(add_bias(a, bias)); }, bias);
    check("scale", [&] { return probe(scale(a, -1.7)); }, a);
    check("mul", [&] { return probe(mul(a, y)); }, a);
    Tensor r = away_from_zero(rng, {4, 5});
    check("relu", [&] { return probe(relu(r)); }, r);

    check("softmax_rows", [&] { return probe(softmax_rows(a)); }, a);
    Tensor gamma = random_tensor(rng, {5}, 1.0, true);
    Tensor beta = random_tensor(rng, {5}, 1.0, true);
    check("layer_norm.x", [&] { return probe(layer_norm(a, gamma, beta, 1e-6)); }, a);
    check("layer_norm.gamma", [&] { return probe(layer_norm(a, gamma, beta, 1e-6)); }, gamma);
    check("layer_norm.beta", [&] { return probe(layer_norm(a, gamma, beta, 1e-6)); }, beta);

    check("slice_leading.2d", [&] { return probe(slice_leading(a, 3, 2)); }, a);
    check("slice_leading.1d", [&] { return probe(slice_leading(bias, 3)); }, bias);
    Tensor table = random_tensor(rng, {6, 3}, 1.0, true);
    const std::vector<int> ids{0, 5, 2, 2, 1};
    check("embedding", [&] { return probe(embedding(table, ids)); }, table);

    Tensor p1 = random_tensor(rng, {2, 3}, 1.0, true);
    Tensor p2 = random_tensor(rng, {4, 3}, 1.0, true);
    check("concat_segments", [&] { return probe(concat_segments({p1, p2}, {1, 2}, 2)); }, p2);
    check("take_segment_row", [&] { return probe(take_segment_row(p2, 2, 1)); }, p2);

    // Two segments, two heads of width 2.
    Tensor q = random_tensor(rng, {6, 4}, 1.0, true);
    Tensor k = random_tensor(rng, {4, 4}, 1.0, true);
    Tensor v = random_tensor(rng, {4, 4}, 1.0, true);
    const SegmentLayout layout{2, 3, 2};
    check("attention.q", [&] { return probe(segmented_attention(q, k, v, 2, 2, layout)); }, q);
    check("attention.k", [&] { return probe(segmented_attention(q, k, v, 2, 2, layout)); }, k);
    check("attention.v", [&] { return probe(segmented_attention(q, k, v, 2, 2, layout)); }, v);

    Tensor feats = random_tensor(rng, {6, 3}, 1.0, true);
    Tensor scores = random_tensor(rng, {6, 1}, 1.0, true);
    check("attention_pool.x", [&] { return probe(attention_pool(feats, scores, 3)); }, feats);
    check("attention_pool.scores", [&] { return probe(attention_pool(feats, scores, 3)); }, scores);

    Tensor logits = random_tensor(rng, {3, 4}, 2.0, true);
    const Tensor teacher = random_tensor(rng, {3, 4}, 2.0);
    const std::vector<int> labels{0, 3, 1};
    check("cross_entropy", [&] { return cross_entropy(logits, labels); }, logits);
    check("kl_softmax", [&] { return kl_softmax(teacher, logits); }, logits);
    check("bce_sigmoid", [&] { return bce_sigmoid(teacher, logits); }, logits);
    check("sum_squares", [&] { return sum_squares(logits); }, logits);
}

// ==================== attention ====================

TEST(Attention, ClosedForm) {
    // Scores q*k = [0, ln 3] give weights [1/4, 3/4].
    const Tensor k = Tensor::from({2, 1}, {0, std::log(3.0)});
    const Tensor v = Tensor::from({2, 1}, {1, 5});
    EXPECT_TRUE(near_all(attention(Tensor::from({1, 1}, {1}), k, v), {4.0}, 1e-14));
    // A zero query scores every key 0.
    EXPECT_TRUE(near_all(attention(Tensor::from({1, 1}, {0}), k, v), {3.0}, 1e-14));
}

TEST(Attention, SingleKeyReturnsItsValue) {
    Rng rng(8);
    const Tensor v = random_tensor(rng, {1, 3});
    const Tensor out = attention(random_tensor(rng, {4, 3}), random_tensor(rng, {1, 3}), v);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            EXPECT_EQ(out.at(r, c), v.at(0, c));
        }
    }
}

TEST(Attention, IdenticalKeysAverageValues) {
    Rng rng(9);
    const Tensor v = random_tensor(rng, {3, 2});
    const Tensor out = attention(random_tensor(rng, {2, 2}), Tensor::filled({3, 2}, 0.3), v);
    for (std::size_t c = 0; c < 2; ++c) {
        const double mean = (v.at(0, c) + v.at(1, c) + v.at(2, c)) / 3.0;
        EXPECT_NEAR(out.at(0, c), mean, 1e-14);
        EXPECT_NEAR(out.at(1, c), mean, 1e-14);
    }
}

TEST(Attention, MismatchedHeadWidthThrows) {
    EXPECT_THROW(attention(Tensor::zeros({1, 2}), Tensor::zeros({1, 3}), Tensor::zeros({1, 3})), DimensionError);
}

// ==================== layer norm ====================

TEST(LayerNorm, ClosedFormTwoElements) {
    const Tensor y = layer_norm(Tensor::from({1, 2}, {1, 3}), Tensor::filled({2}, 1.0), Tensor::zeros({2}), 1e-6);
    const double expect = 1.0 / std::sqrt(1.0 + 1e-6);
    EXPECT_TRUE(near_all(y, {-expect, expect}, 1e-15));
    EXPECT_NEAR(expect, 0.9999995, 1e-9);
}

TEST(LayerNorm, ConstantRowGivesBeta) {
    Rng rng(10);
    const Tensor beta = random_tensor(rng, {4});
    const Tensor y = layer_norm(Tensor::filled({2, 4}, 3.25), random_tensor(rng, {4}), beta, 1e-6);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            EXPECT_EQ(y.at(r, c), beta.data()[c]);
        }
    }
}

TEST(LayerNorm, NormalizesMeanAndVariance) {
    Rng rng(11);
    const Tensor x = random_tensor(rng, {5, 32}, 4.0);
    const Tensor y = layer_norm(x, Tensor::filled({32}, 1.0), Tensor::zeros({32}), 1e-12);
    for (std::size_t r = 0; r < 5; ++r) {
        double mean = 0.0;
        double var = 0.0;
        for (std::size_t c = 0; c < 32; ++c) {
            mean += y.at(r, c);
        }
        mean /= 32.0;
        for (std::size_t c = 0; c < 32; ++c) {
            var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
        }
        var /= 32.0;
        EXPECT_NEAR(mean, 0.0, 1e-9);
        EXPECT_NEAR(var, 1.0, 1e-9);
    }
}

// ==================== tape ====================

TEST(Tape, SliceGradientLandsInLeadingBlock) {
    Rng rng(12);
    Tensor w = random_tensor(rng, {4, 6}, 1.0, true);
    sum(slice_leading(w, 2, 3)).backward();
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 6; ++c) {
            EXPECT_EQ(w.grad()[r * 6 + c], (r < 2 && c < 3) ? 1.0 : 0.0) << r << "," << c;
        }
    }
}

TEST(Tape, GradientsAccumulateAcrossBackwardCalls) {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    sum_squares(x).backward();
    sum_squares(x).backward();
    EXPECT_EQ(x.grad()[0], 4.0);
    EXPECT_EQ(x.grad()[1], 8.0);
}

TEST(Tape, NoGradGuardBuildsNoTape) {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    Tensor y;
    {
        NoGradGuard guard;
        y = sum_squares(x);
    }
    EXPECT_FALSE(y.requires_grad());
}

TEST(Tape, DetachCutsGradient) {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    sum(add(x, x.detach())).backward();
    EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Tape, BackwardNeedsScalar) {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    EXPECT_THROW(scale(x, 2.0).backward(), std::exception);
}

// ==================== rng ====================

TEST(RngStream, SameSeedSameStream) {
    Rng a(123);
    Rng b(123);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(a.next_u64(), b.next_u64());
    }
    Rng c(5);
    Rng d(5);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(std::bit_cast<std::uint64_t>(c.normal()), std::bit_cast<std::uint64_t>(d.normal()));
    }
}

TEST(RngStream, BelowStaysInRangeAndCoversIt) {
    Rng rng(77);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const std::uint64_t v = rng.below(7);
        ASSERT_LT(v, 7u);
        ++hits[v];
    }
    for (int h : hits) {
        EXPECT_GT(h, 800);
    }
}

TEST(RngStream, MixSeedSeparatesSalts) {
    EXPECT_NE(mix_seed(1, 2), mix_seed(1, 3));
    EXPECT_NE(mix_seed(1, 2), mix_seed(2, 2));
    EXPECT_EQ(mix_seed(9, 4), mix_seed(9, 4));
}
